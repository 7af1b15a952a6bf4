"""Pure-numpy adaptive Gauss-Hermite kernel for random-intercept bin models.

For one bin, subject i contributes the marginal likelihood
``ll = log int exp(h(b)) db`` with

    h(b) = y*(beta0+b) - m*A(beta0+b) - b^2/(2 sigma^2) - log(2 pi sigma^2)/2

where y is the subject's response total over the m observations in the
bin and A is the cumulant (softplus for binomial, exp for Poisson).
Nodes are centered on the posterior mode with curvature scaling; the
gradient uses the Fisher identity (posterior-weighted score).

Subjects sharing the same y have identical contributions, so callers
pass unique y values with multiplicities.
"""
import numpy as np
from scipy.special import expit

SQRT2 = np.sqrt(2.0)


def _h(b, y, m, beta0, sig2, fam):
    eta = beta0 + b
    if fam == 0:
        A = np.logaddexp(0.0, eta)
        A1 = expit(eta)
        A2 = A1 * (1.0 - A1)
    else:
        A = np.exp(eta)
        A1 = A
        A2 = A
    h = y * eta - m * A - 0.5 * b * b / sig2 - 0.5 * np.log(2.0 * np.pi * sig2)
    h1 = y - m * A1 - b / sig2
    h2 = -m * A2 - 1.0 / sig2
    return h, h1, h2


def _modes(y, m, beta0, sig2, fam, max_iter=50, tol=1e-9):
    b = np.zeros_like(y)
    for _ in range(max_iter):
        h, h1, h2 = _h(b, y, m, beta0, sig2, fam)
        if np.max(np.abs(h1)) < tol:
            break
        bn = b + np.clip(-h1 / h2, -4.0, 4.0)
        for _ in range(30):
            hn = _h(bn, y, m, beta0, sig2, fam)[0]
            bad = hn < h - 1e-12
            if not bad.any():
                break
            bn = np.where(bad, 0.5 * (b + bn), bn)
        b = bn
    return b


def _loglik_grad_per_y(beta0, log_sigma, y, m, fam, gh_x, gh_logw):
    sig2 = np.exp(2.0 * log_sigma)
    bhat = _modes(y, m, beta0, sig2, fam)
    h2 = _h(bhat, y, m, beta0, sig2, fam)[2]
    shat = 1.0 / np.sqrt(-h2)
    bq = bhat[:, None] + SQRT2 * shat[:, None] * gh_x[None, :]
    hq = _h(bq, y[:, None], m, beta0, sig2, fam)[0]
    arg = gh_logw[None, :] + gh_x[None, :] ** 2 + hq
    top = arg.max(axis=1, keepdims=True)
    ex = np.exp(arg - top)
    S = ex.sum(axis=1)
    ll = 0.5 * np.log(2.0) + np.log(shat) + top[:, 0] + np.log(S)
    p = ex / S[:, None]
    A1 = expit(beta0 + bq) if fam == 0 else np.exp(beta0 + bq)
    g0 = np.sum(p * (y[:, None] - m * A1), axis=1)
    g1 = np.sum(p * (bq * bq / sig2 - 1.0), axis=1)
    return ll, g0, g1


def agq_loglik(beta0, log_sigma, y, m, family, gh_x, gh_logw):
    """Per-entry marginal log-likelihoods for response totals y."""
    y = np.asarray(y, dtype=float)
    ll, _, _ = _loglik_grad_per_y(float(beta0), float(log_sigma), y, float(m), int(family), gh_x, gh_logw)
    return ll


def agq_nll_grad(beta0, log_sigma, y, counts, m, family, gh_x, gh_logw):
    """Count-weighted negative log-likelihood and its gradient.

    Returns (nll, d/dbeta0, d/dlog_sigma) summed over unique response
    totals ``y`` with multiplicities ``counts``.
    """
    y = np.asarray(y, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ll, g0, g1 = _loglik_grad_per_y(float(beta0), float(log_sigma), y, float(m), int(family), gh_x, gh_logw)
    return (
        -float(np.dot(counts, ll)),
        -float(np.dot(counts, g0)),
        -float(np.dot(counts, g1)),
    )


def posterior_modes(beta0, log_sigma, y, m, family):
    """Posterior modes of the random intercepts at fixed (beta0, sigma)."""
    y = np.asarray(y, dtype=float)
    sig2 = np.exp(2.0 * float(log_sigma))
    return _modes(y, float(m), float(beta0), sig2, int(family))
