"""Local random-intercept mixed models, one per bin.

Within bin S_l the model is g(E[Z_i(s_j)]) = beta0 + b_i for j in S_l
with b_i ~ N(0, sigma^2). Binomial and Poisson bins are fit by adaptive
Gauss-Hermite quadrature over (beta0, log sigma); the Gaussian bin has
the closed-form balanced one-way solution. Each subject's linear
predictor at the bin midpoint is beta0 + posterior mode of b_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaln, logit

from . import _kernels
from .binning import BinSpec
from .data import FunctionalDataset
from .errors import ConfigError, DataError
from .families import FAMILY_CODES


@dataclass(frozen=True)
class LocalGlmmOptions:
    quad_points: int = 10
    max_iter: int = 200
    gtol: float = 1e-6
    policy: str = "clamp"  # degenerate-bin handling: clamp | augment
    linpred_bound: float = 10.0
    log_sigma_bounds: tuple = (-8.0, 5.0)

    def __post_init__(self):
        if self.policy not in ("clamp", "augment"):
            raise ConfigError(f"unknown degenerate-bin policy {self.policy!r}")
        if not 1 <= self.quad_points <= 64:
            raise ConfigError("quad_points must be in 1..64")


@dataclass(frozen=True)
class LocalFit:
    bin_index: int
    beta0: float
    sigma2: float
    b: np.ndarray  # (N,) posterior modes
    converged: bool
    loglik: float
    degenerate: bool = False

    @property
    def eta(self) -> np.ndarray:
        return self.beta0 + self.b


@dataclass(frozen=True)
class LatentEstimates:
    """Per-bin linear-predictor estimates at the bin midpoints."""

    mid_grid: np.ndarray  # (L,) normalized midpoint coordinates
    midpoint_indices: np.ndarray  # (L,) indices into the full grid
    eta: np.ndarray  # (N, L)
    converged: np.ndarray  # (L,) bool
    degenerate: np.ndarray = field(default=None)  # (L,) bool

    def __post_init__(self):
        if not np.all(np.isfinite(self.eta)):
            raise DataError("latent estimates contain non-finite entries")


def _gh_nodes(q):
    x, w = np.polynomial.hermite.hermgauss(q)
    return x, np.log(w)


def _gaussian_oneway(zbin):
    """Balanced one-way random-effects fit: grand mean, REML variance
    components, BLUP subject effects, and the marginal log-likelihood."""
    N, m = zbin.shape
    ybar = zbin.mean(axis=1)
    grand = float(zbin.mean())
    if m == 1:
        # no replication: all variation attributed to subjects
        sig_b2 = float(np.var(ybar, ddof=1)) if N > 1 else 0.0
        sig_e2 = 0.0
        b = ybar - grand
    else:
        msw = float(np.sum((zbin - ybar[:, None]) ** 2) / (N * (m - 1)))
        msb = float(m * np.sum((ybar - grand) ** 2) / (N - 1))
        sig_e2 = msw
        sig_b2 = max(0.0, (msb - msw) / m)
        shrink = sig_b2 / (sig_b2 + sig_e2 / m) if (sig_b2 + sig_e2 / m) > 0 else 0.0
        b = shrink * (ybar - grand)

    se2 = max(sig_e2, 1e-300)
    tau = sig_e2 + m * sig_b2
    r = zbin - grand
    rbar = r.mean(axis=1)
    quad = (np.sum(r * r, axis=1) - (m * m * rbar**2) * (sig_b2 / max(tau, 1e-300))) / se2
    logdet = (m - 1) * np.log(se2) + np.log(max(tau, 1e-300))
    ll = float(-0.5 * np.sum(m * np.log(2.0 * np.pi) + logdet + quad))
    return grand, sig_b2, b, ll


def _augment_terms(beta0):
    """Penalty from two pseudo-successes and two pseudo-failures added to
    the fixed-effect likelihood (binomial only); returns (-ll, -dll)."""
    mu = expit(beta0)
    nll = -(2.0 * np.log(max(mu, 1e-300)) + 2.0 * np.log(max(1.0 - mu, 1e-300)))
    grad = -(2.0 - 4.0 * mu)
    return nll, grad


def fit_local_glmm(
    data: FunctionalDataset, bin_indices, opts: LocalGlmmOptions = LocalGlmmOptions(), bin_index: int = 0
) -> LocalFit:
    """Fit the random-intercept model on one bin of grid indices."""
    bin_indices = np.asarray(bin_indices, dtype=int)
    if bin_indices.size == 0:
        raise DataError("empty bin")
    zbin = data.values[:, bin_indices]
    N, m = zbin.shape
    if N < 2:
        raise DataError("local mixed models need at least 2 subjects")
    fam_name = data.family.name

    if fam_name == "gaussian":
        beta0, sig2, b, ll = _gaussian_oneway(zbin)
        return LocalFit(bin_index, beta0, sig2, b, True, ll)

    fam = FAMILY_CODES[fam_name]
    y = zbin.sum(axis=1)
    y_unique, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    y_unique = y_unique.astype(float)
    counts = counts.astype(float)
    gh_x, gh_logw = _gh_nodes(opts.quad_points)

    degenerate = bool(np.all(zbin == zbin.flat[0]))
    augment = degenerate and opts.policy == "augment" and fam_name == "binomial"
    if degenerate and not augment:
        # constant bin: sigma -> 0 and beta0 is the clamped link of the
        # shared value (continuity-adjusted mean for the boundary cases)
        total = float(y.sum())
        if fam_name == "binomial":
            eta0 = float(logit((total + 0.5) / (N * m + 1.0)))
        else:
            eta0 = float(np.log(max(total + 0.5, 0.5) / (N * m)))
        beta0 = float(np.clip(eta0, -opts.linpred_bound, opts.linpred_bound))
        b = np.zeros(N)
        ll = -agq_nll(beta0, opts.log_sigma_bounds[0], y_unique, counts, m, fam, gh_x, gh_logw)
        ll += _loglik_constant(zbin, fam_name)
        return LocalFit(bin_index, beta0, 0.0, b, True, ll, degenerate=True)

    if fam_name == "binomial":
        pbar = (y.sum() + 0.5) / (N * m + 1.0)
        beta_init = float(logit(pbar))
    else:
        beta_init = float(np.log(max(y.mean() / m, 1e-8)))

    def objective(par):
        nll, g0, g1 = _kernels.agq_nll_grad(
            par[0], par[1], y_unique, counts, float(m), fam, gh_x, gh_logw
        )
        if augment:
            anll, agrad = _augment_terms(par[0])
            nll += anll
            g0 += agrad
        return nll, np.array([g0, g1])

    res = minimize(
        objective,
        np.array([beta_init, -1.0]),
        jac=True,
        method="L-BFGS-B",
        bounds=[(-15.0, 15.0), opts.log_sigma_bounds],
        options={"maxiter": opts.max_iter, "gtol": opts.gtol},
    )
    beta0, log_sigma = float(res.x[0]), float(res.x[1])
    # L-BFGS-B sometimes stalls its line search on a flat surface and
    # reports failure with the score already negligible; accept those
    converged = bool(res.success) or float(np.max(np.abs(res.jac))) <= 1e-4 * max(1.0, float(N))
    b_unique = _kernels.posterior_modes(beta0, log_sigma, y_unique, float(m), fam)
    b = np.asarray(b_unique)[inverse]

    eta = np.clip(beta0 + b, -opts.linpred_bound, opts.linpred_bound)
    b = eta - beta0

    ll = -agq_nll(beta0, log_sigma, y_unique, counts, m, fam, gh_x, gh_logw)
    ll += _loglik_constant(zbin, fam_name)
    return LocalFit(
        bin_index,
        beta0,
        float(np.exp(2.0 * log_sigma)),
        b,
        converged,
        float(ll),
        degenerate=degenerate,
    )


def agq_nll(beta0, log_sigma, y_unique, counts, m, fam, gh_x, gh_logw):
    return _kernels.agq_nll_grad(
        float(beta0), float(log_sigma), np.asarray(y_unique, float),
        np.asarray(counts, float), float(m), int(fam), gh_x, gh_logw
    )[0]


def _loglik_constant(zbin, fam_name):
    """Part of the log-likelihood independent of (beta0, sigma): the
    -sum log z! term for Poisson counts, zero otherwise."""
    if fam_name == "poisson":
        return float(-np.sum(gammaln(zbin + 1.0)))
    return 0.0


def subject_logliks(
    data: FunctionalDataset, bin_indices, beta0: float, sigma2: float, quad_points: int = 10
) -> np.ndarray:
    """Per-subject marginal log-likelihoods of one bin at given parameters.

    Used to validate the quadrature against direct numerical integration.
    """
    bin_indices = np.asarray(bin_indices, dtype=int)
    zbin = data.values[:, bin_indices]
    fam_name = data.family.name
    if fam_name == "gaussian":
        raise ConfigError("subject_logliks applies to binomial/poisson bins")
    fam = FAMILY_CODES[fam_name]
    y = zbin.sum(axis=1).astype(float)
    gh_x, gh_logw = _gh_nodes(quad_points)
    log_sigma = 0.5 * np.log(max(sigma2, 1e-300))
    ll = np.asarray(
        _kernels.agq_loglik(float(beta0), float(log_sigma), y, float(zbin.shape[1]), fam, gh_x, gh_logw)
    )
    if fam_name == "poisson":
        ll = ll - np.sum(gammaln(zbin + 1.0), axis=1)
    return ll


def fit_all_bins(
    data: FunctionalDataset, bins: BinSpec, opts: LocalGlmmOptions = LocalGlmmOptions()
) -> LatentEstimates:
    """Fit every bin and assemble the N x L latent estimate matrix.

    Bins are independent given the data, so execution order does not
    affect the result; fits run sequentially for determinism.
    """
    N = data.N
    L = bins.L
    eta = np.empty((N, L))
    converged = np.zeros(L, dtype=bool)
    degenerate = np.zeros(L, dtype=bool)
    for l, idx in enumerate(bins.bins):
        fit = fit_local_glmm(data, idx, opts, bin_index=l)
        eta[:, l] = fit.eta
        converged[l] = fit.converged
        degenerate[l] = fit.degenerate
    return LatentEstimates(
        mid_grid=data.grid_normalized[bins.midpoint_indices],
        midpoint_indices=bins.midpoint_indices.copy(),
        eta=eta,
        converged=converged,
        degenerate=degenerate,
    )
