"""Synthetic functional data with known eigenstructure, plus the
theoretical covariance of bin-averaged latent processes.

Two eigenfunction sets are provided: a periodic quartet (sines and
cosines, domain treated as cyclic) and a non-periodic quartet (shifted
Legendre polynomials, orthonormal on [0,1]). Eigenvalues default to the
geometric sequence 0.5^(k-1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .binning import BinSpec
from .data import FunctionalDataset
from .errors import ConfigError, DataError
from .refit import GfpcaFit
from .splines import bspline_basis

EIGEN_SETS = ("periodic", "nonperiodic")

# Fixed coefficients for the optional nonzero mean: a smooth bump/dip
# over 13 cubic B-splines (10 interior knots, non-cyclic), sup|beta0|
# close to 1. Any scenario can override them with explicit numbers.
MEAN_SPLINE_COEFS = (
    0.0, 0.3, 0.8, 1.1, 1.0, 0.55, 0.0, -0.55, -1.0, -1.1, -0.8, -0.3, 0.0,
)
_MEAN_NKNOTS = 10


@dataclass(frozen=True)
class SimScenario:
    """Generator settings: dimensions, family, eigenstructure, mean."""

    N: int
    J: int
    family: str = "binomial"
    eigen_set: str = "periodic"
    eigenvalues: tuple = (1.0, 0.5, 0.25, 0.125)
    mean_spec: object = "zero"  # "zero", "spline", or explicit coefficients
    sigma_e: float = 0.5  # gaussian observation noise sd
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N: must be >= 1, got {self.N}")
        if self.J < 2:
            raise ConfigError(f"J: must be >= 2, got {self.J}")
        if self.eigen_set not in EIGEN_SETS:
            raise ConfigError(f"eigen_set: expected one of {EIGEN_SETS}, got {self.eigen_set!r}")
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1 or lam.size > 4:
            raise ConfigError("eigenvalues: need between 1 and 4 components")
        if np.any(lam < 0) or np.any(np.diff(lam) > 0):
            raise ConfigError("eigenvalues: must be non-negative and non-increasing")
        if self.sigma_e < 0:
            raise ConfigError(f"sigma_e: must be >= 0, got {self.sigma_e}")
        object.__setattr__(self, "eigenvalues", tuple(lam))

    @property
    def cyclic(self) -> bool:
        return self.eigen_set == "periodic"

    @property
    def K(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class SimTruth:
    """Ground truth behind a generated dataset; eta = beta0 + scores @ phi.T."""

    grid: np.ndarray  # (J,)
    beta0: np.ndarray  # (J,)
    phi: np.ndarray  # (J, K), unit norm under the grid inner product
    lambdas: np.ndarray  # (K,)
    scores: np.ndarray  # (N, K)
    eta: np.ndarray  # (N, J)


def eigen_functions(eigen_set: str, s: np.ndarray) -> np.ndarray:
    """Evaluate the four reference eigenfunctions at points of [0,1]."""
    s = np.asarray(s, dtype=float)
    if eigen_set == "periodic":
        cols = [
            np.sqrt(2.0) * np.sin(2 * np.pi * s),
            np.sqrt(2.0) * np.cos(2 * np.pi * s),
            np.sqrt(2.0) * np.sin(4 * np.pi * s),
            np.sqrt(2.0) * np.cos(4 * np.pi * s),
        ]
    elif eigen_set == "nonperiodic":
        # shifted Legendre polynomials, L2-orthonormal on [0,1]
        cols = [
            np.ones_like(s),
            np.sqrt(3.0) * (2 * s - 1),
            np.sqrt(5.0) * (6 * s**2 - 6 * s + 1),
            np.sqrt(7.0) * (20 * s**3 - 30 * s**2 + 12 * s - 1),
        ]
    else:
        raise ConfigError(f"eigen_set: expected one of {EIGEN_SETS}, got {eigen_set!r}")
    return np.stack(cols, axis=1)


def mean_function(mean_spec, s: np.ndarray) -> np.ndarray:
    """Evaluate the scenario mean: zero, the shipped spline bump, or a
    caller-supplied coefficient vector over the same 13-spline basis."""
    s = np.asarray(s, dtype=float)
    if isinstance(mean_spec, str):
        if mean_spec == "zero":
            return np.zeros_like(s)
        if mean_spec == "spline":
            coefs = np.asarray(MEAN_SPLINE_COEFS)
        else:
            raise ConfigError(f"mean_spec: expected 'zero', 'spline' or coefficients, got {mean_spec!r}")
    else:
        coefs = np.asarray(mean_spec, dtype=float)
        if coefs.shape != (len(MEAN_SPLINE_COEFS),):
            raise ConfigError(
                f"mean_spec: coefficient vector must have length {len(MEAN_SPLINE_COEFS)}"
            )
    return bspline_basis(s, _MEAN_NKNOTS, cyclic=False) @ coefs


def _sample_values(family_name: str, rng, eta: np.ndarray, sigma_e: float) -> np.ndarray:
    if family_name == "binomial":
        return rng.binomial(1, expit(eta)).astype(float)
    if family_name == "poisson":
        return rng.poisson(np.exp(eta)).astype(float)
    return eta + sigma_e * rng.standard_normal(eta.shape)


def generate(scenario: SimScenario) -> tuple[FunctionalDataset, SimTruth]:
    """Draw one dataset. Each subject gets its own child generator
    (spawned from the scenario seed), so results do not depend on how
    subjects might be distributed across workers."""
    sc = scenario
    s = np.linspace(0.0, 1.0, sc.J)
    phi = eigen_functions(sc.eigen_set, s)[:, : sc.K]
    lam = np.asarray(sc.eigenvalues, dtype=float)
    beta0 = mean_function(sc.mean_spec, s)

    rngs = [np.random.default_rng(q) for q in np.random.SeedSequence(sc.seed).spawn(sc.N)]
    sd = np.sqrt(lam)
    scores = np.stack([rng.normal(0.0, 1.0, sc.K) * sd for rng in rngs])
    eta = beta0[None, :] + scores @ phi.T

    fam_name = sc.family if isinstance(sc.family, str) else sc.family.name
    values = np.stack(
        [_sample_values(fam_name, rng, eta[i], sc.sigma_e) for i, rng in enumerate(rngs)]
    )
    data = FunctionalDataset(
        subject_ids=tuple(range(1, sc.N + 1)),
        grid=s,
        values=values,
        family=sc.family,
        cyclic=sc.cyclic,
    )
    truth = SimTruth(grid=s, beta0=beta0, phi=phi, lambdas=lam, scores=scores, eta=eta)
    return data, truth


def simulate_from_fit(fit: GfpcaFit, N: int, seed: int = 0) -> tuple[FunctionalDataset, SimTruth]:
    """Parametric bootstrap: treat a fitted model as the truth and draw
    N new subjects from it."""
    vars_ = np.asarray(fit.score_vars, dtype=float)
    if not np.any(vars_ > 0):
        raise DataError("cannot simulate from a fit whose score variances are all zero")
    phi = fit.basis.eigenfunctions_full
    beta0 = fit.beta0_full
    K = vars_.size

    rngs = [np.random.default_rng(q) for q in np.random.SeedSequence(seed).spawn(N)]
    scores = np.stack([rng.normal(0.0, 1.0, K) * np.sqrt(vars_) for rng in rngs])
    eta = beta0[None, :] + scores @ phi.T

    fam_name = fit.family.name
    sigma_e = np.sqrt(fit.sigma2_resid) if fit.sigma2_resid else 0.0
    values = np.stack(
        [_sample_values(fam_name, rng, eta[i], sigma_e) for i, rng in enumerate(rngs)]
    )
    data = FunctionalDataset(
        subject_ids=tuple(range(1, N + 1)),
        grid=fit.grid,
        values=values,
        family=fam_name,
        cyclic=fit.basis.cyclic,
    )
    truth = SimTruth(
        grid=fit.grid, beta0=beta0, phi=phi, lambdas=vars_, scores=scores, eta=eta
    )
    return data, truth


def binned_cov_oracle(
    phi: np.ndarray, lambdas, bins: BinSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Covariance of bin-averaged latent processes, and its bias.

    With eta_i = sum_k xi_k phi_k and xi_k ~ N(0, lambda_k), the bin
    average over S_l has covariance sum_k lambda_k phibar_k(S_u)
    phibar_k(S_v), where phibar is the mean of phi over the bin's grid
    points. Returns (oracle, bias) with bias = oracle minus the
    unbinned covariance at the bin midpoints. Bias vanishes as bins
    shrink, and is exactly zero when every phi_k is bin-wise constant.
    """
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    phibar = np.stack([phi[list(b)].mean(axis=0) for b in bins.bins])  # L x K
    phimid = phi[np.asarray(bins.midpoint_indices)]  # L x K
    oracle = (phibar * lam) @ phibar.T
    pointwise = (phimid * lam) @ phimid.T
    return oracle, oracle - pointwise
