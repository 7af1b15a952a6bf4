# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _agq_py: adaptive Gauss-Hermite marginal likelihood,
gradient, and posterior modes for random-intercept bin models. Same
formulas, scalar C loops instead of vectorized numpy.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, sqrt

cnp.import_array()

cdef double LOG2PI = 1.8378770664093453
cdef double SQRT2 = 1.4142135623730951
cdef int MAXQ = 64


cdef inline double _softplus(double x) nogil:
    if x > 30.0:
        return x + exp(-x)
    if x < -30.0:
        return exp(x)
    return log1p(exp(x))


cdef inline double _hval(double b, double y, double m, double beta0,
                         double sig2, int fam) nogil:
    cdef double eta = beta0 + b
    cdef double A
    if fam == 0:
        A = _softplus(eta)
    else:
        A = exp(eta)
    return y * eta - m * A - 0.5 * b * b / sig2 - 0.5 * (LOG2PI + log(sig2))


cdef inline double _aprime(double eta, int fam) nogil:
    if fam == 0:
        return 1.0 / (1.0 + exp(-eta))
    return exp(eta)


cdef double _mode(double y, double m, double beta0, double sig2, int fam) nogil:
    cdef double b = 0.0, h, h1, h2, step, bn, hn, mu
    cdef int it, half
    for it in range(50):
        mu = _aprime(beta0 + b, fam)
        h1 = y - m * mu - b / sig2
        if fabs(h1) < 1e-9:
            break
        if fam == 0:
            h2 = -m * mu * (1.0 - mu) - 1.0 / sig2
        else:
            h2 = -m * mu - 1.0 / sig2
        step = -h1 / h2
        if step > 4.0:
            step = 4.0
        elif step < -4.0:
            step = -4.0
        h = _hval(b, y, m, beta0, sig2, fam)
        bn = b + step
        for half in range(30):
            hn = _hval(bn, y, m, beta0, sig2, fam)
            if hn >= h - 1e-12:
                break
            bn = 0.5 * (b + bn)
        b = bn
    return b


cdef double _ll_grad_one(double beta0, double log_sigma, double y, double m,
                         int fam, double[::1] gh_x, double[::1] gh_logw,
                         double* g0, double* g1) nogil:
    cdef double sig2 = exp(2.0 * log_sigma)
    cdef double bhat = _mode(y, m, beta0, sig2, fam)
    cdef double mu = _aprime(beta0 + bhat, fam)
    cdef double h2
    if fam == 0:
        h2 = -m * mu * (1.0 - mu) - 1.0 / sig2
    else:
        h2 = -m * mu - 1.0 / sig2
    cdef double shat = 1.0 / sqrt(-h2)
    cdef int Q = gh_x.shape[0]
    cdef double arg[64]
    cdef double bq[64]
    cdef double top = -1e308
    cdef double S = 0.0, p, gg0 = 0.0, gg1 = 0.0, e
    cdef int q
    for q in range(Q):
        bq[q] = bhat + SQRT2 * shat * gh_x[q]
        arg[q] = gh_logw[q] + gh_x[q] * gh_x[q] + _hval(bq[q], y, m, beta0, sig2, fam)
        if arg[q] > top:
            top = arg[q]
    for q in range(Q):
        e = exp(arg[q] - top)
        S += e
        arg[q] = e
    for q in range(Q):
        p = arg[q] / S
        gg0 += p * (y - m * _aprime(beta0 + bq[q], fam))
        gg1 += p * (bq[q] * bq[q] / sig2 - 1.0)
    g0[0] = gg0
    g1[0] = gg1
    return 0.5 * log(2.0) + log(shat) + top + log(S)


def agq_nll_grad(double beta0, double log_sigma, double[::1] y,
                 double[::1] counts, double m, int family,
                 double[::1] gh_x, double[::1] gh_logw):
    """Count-weighted negative log-likelihood and gradient; see _agq_py."""
    if gh_x.shape[0] > MAXQ:
        raise ValueError(f"at most {MAXQ} quadrature nodes supported")
    cdef double nll = 0.0, ng0 = 0.0, ng1 = 0.0, ll, g0, g1
    cdef Py_ssize_t u
    for u in range(y.shape[0]):
        ll = _ll_grad_one(beta0, log_sigma, y[u], m, family, gh_x, gh_logw, &g0, &g1)
        nll -= counts[u] * ll
        ng0 -= counts[u] * g0
        ng1 -= counts[u] * g1
    return nll, ng0, ng1


def agq_loglik(double beta0, double log_sigma, double[::1] y, double m,
               int family, double[::1] gh_x, double[::1] gh_logw):
    """Per-entry marginal log-likelihoods for response totals y."""
    if gh_x.shape[0] > MAXQ:
        raise ValueError(f"at most {MAXQ} quadrature nodes supported")
    out = np.empty(y.shape[0])
    cdef double[::1] ov = out
    cdef double g0, g1
    cdef Py_ssize_t u
    for u in range(y.shape[0]):
        ov[u] = _ll_grad_one(beta0, log_sigma, y[u], m, family, gh_x, gh_logw, &g0, &g1)
    return out


def posterior_modes(double beta0, double log_sigma, double[::1] y, double m,
                    int family):
    """Posterior modes of the random intercepts at fixed (beta0, sigma)."""
    cdef double sig2 = exp(2.0 * log_sigma)
    out = np.empty(y.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t u
    for u in range(y.shape[0]):
        ov[u] = _mode(y[u], m, beta0, sig2, family)
    return out
