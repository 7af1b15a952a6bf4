"""Covariance smoothing and eigendecomposition of the latent estimates.

The empirical covariance of the per-bin linear predictors is smoothed on
both sides with a penalized B-spline smoother matrix (sandwich form),
eigendecomposed under grid-quadrature weights, truncated by percent
variance explained, and the eigenfunctions are then projected onto a
rich spline basis to evaluate them on the full observation grid.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from .errors import DataError, NumericalError
from .local_glmm import LatentEstimates
from .quadrature import quad_weights
from .splines import bspline_basis, difference_penalty, n_basis


@dataclass(frozen=True)
class SmoothOptions:
    nknots: int = 20
    loglam_lower: float = 0.0  # GCV search bounds on log(lambda)
    loglam_upper: float = 18.0
    loglam_points: int = 120


@dataclass(frozen=True)
class FpcaBasis:
    mid_grid: np.ndarray  # (L,) normalized midpoint coordinates
    eigenfunctions_mid: np.ndarray  # (L, K)
    eigenvalues: np.ndarray  # (K,) positive, non-increasing
    mean_mid: np.ndarray  # (L,) smoothed latent mean (intermediate)
    cov_smoothed: np.ndarray  # (L, L) symmetric
    pve_target: float
    K: int
    cyclic: bool
    nknots: int
    gcv_lambda: float
    gcv_fallback: bool = False
    full_grid: np.ndarray = None  # (J,) set by project_to_full_grid
    eigenfunctions_full: np.ndarray = None  # (J, K)
    coefs: np.ndarray = None  # (p, K) spline coefficients of each phi_k


def _smoother_ingredients(x, nknots, cyclic):
    """Demmler-Reinsch pieces of the penalized spline smoother on x:
    orthonormalized design A (so the smoother is A diag(1/(1+lam*gam)) A')
    and the penalty spectrum gam."""
    B = bspline_basis(x, nknots, cyclic)
    p = B.shape[1]
    P = difference_penalty(p, 2, cyclic)
    R = cholesky(B.T @ B + 1e-10 * np.eye(p), lower=False)
    Rinv = solve_triangular(R, np.eye(p), lower=False)
    gam, V = eigh(Rinv.T @ P @ Rinv)
    gam = np.clip(gam, 0.0, None)
    A = B @ (Rinv @ V)
    return A, gam


def _smooth_mean(y, A, gam, grid_loglam):
    """Penalized-spline fit of one curve with scalar GCV selection."""
    L = y.size
    q = A.T @ y
    best = (np.inf, None)
    for ll in grid_loglam:
        c = 1.0 / (1.0 + np.exp(ll) * gam)
        resid2 = float(y @ y - q @ (c * (2.0 - c) * q))
        gcv = L * resid2 / (L - c.sum()) ** 2
        if gcv < best[0]:
            best = (gcv, c)
    return A @ (best[1] * q)


def fpca_latent(
    latent: LatentEstimates,
    pve: float = 0.95,
    npc: int | None = None,
    cyclic: bool = False,
    opts: SmoothOptions = SmoothOptions(),
) -> FpcaBasis:
    """Smooth the latent covariance and extract the leading eigenpairs.

    Keeps npc components when given, otherwise the smallest K whose
    eigenvalues reach the pve target. Eigenfunctions are normalized to
    unit squared integral under the midpoint-grid quadrature weights and
    signed so each sums to a nonnegative value.
    """
    eta = latent.eta
    N, L = eta.shape
    if not 0.0 < pve <= 1.0:
        raise DataError(f"pve must be in (0, 1], got {pve}")
    if npc is not None and not 1 <= npc:
        raise DataError(f"npc must be >= 1, got {npc}")
    if L < n_basis(opts.nknots, cyclic) + 1:
        raise DataError(
            f"need L >= nknots+4 midpoints for the covariance smoother (L={L}, nknots={opts.nknots})"
        )

    # identical curves leave nothing but rounding noise after centering;
    # catch that before the smoother manufactures eigenpairs out of it
    dev = eta - eta.mean(axis=0, keepdims=True)
    if float(np.max(np.abs(dev))) <= 1e-12 * max(1.0, float(np.max(np.abs(eta)))):
        raise NumericalError("degenerate latent covariance")

    x = latent.mid_grid
    A, gam = _smoother_ingredients(x, opts.nknots, cyclic)
    grid_loglam = np.linspace(opts.loglam_lower, opts.loglam_upper, opts.loglam_points)

    mean_mid = _smooth_mean(eta.mean(axis=0), A, gam, grid_loglam)
    Xc = eta - mean_mid[None, :]
    C = (Xc.T @ Xc) / N

    # sandwich GCV: smoother applied to both sides of C
    G = A.T @ C @ A
    G2 = G * G
    normC2 = float(np.sum(C * C))
    best = (np.inf, None, None)
    for ll in grid_loglam:
        c = 1.0 / (1.0 + np.exp(ll) * gam)
        cc = np.outer(c, c)
        rss = normC2 - 2.0 * np.sum(cc * G2) + np.sum(cc * cc * G2)
        gcv = rss / (1.0 - (c.sum() / L) ** 2) ** 2
        if np.isfinite(gcv) and gcv < best[0]:
            best = (gcv, float(np.exp(ll)), c)
    gcv_fallback = best[1] is None
    if gcv_fallback:
        lam = float(np.exp(0.5 * (opts.loglam_lower + opts.loglam_upper)))
        c = 1.0 / (1.0 + lam * gam)
    else:
        _, lam, c = best

    Cs = A @ ((np.outer(c, c) * G) @ A.T)
    Cs = 0.5 * (Cs + Cs.T)

    w = quad_weights(x)
    sw = np.sqrt(w)
    ev, U = eigh(sw[:, None] * Cs * sw[None, :])
    ev = ev[::-1]
    U = U[:, ::-1]
    floor = 1e-10 * max(ev[0], 0.0)
    pos = ev > floor
    if not pos.any():
        raise NumericalError("degenerate latent covariance")
    ev = ev[pos]
    U = U[:, pos]

    if npc is not None:
        K = min(npc, ev.size)
    else:
        K = int(np.searchsorted(np.cumsum(ev) / ev.sum(), pve) + 1)
        K = min(K, ev.size)

    phi = U[:, :K] / sw[:, None]
    for k in range(K):
        total = phi[:, k].sum()
        if total < 0 or (total == 0 and phi[np.argmax(phi[:, k] != 0), k] < 0):
            phi[:, k] = -phi[:, k]

    return FpcaBasis(
        mid_grid=x.copy(),
        eigenfunctions_mid=phi,
        eigenvalues=ev[:K].copy(),
        mean_mid=mean_mid,
        cov_smoothed=Cs,
        pve_target=pve,
        K=K,
        cyclic=cyclic,
        nknots=opts.nknots,
        gcv_lambda=lam,
        gcv_fallback=gcv_fallback,
    )


def project_to_full_grid(basis: FpcaBasis, full_grid, cyclic: bool | None = None) -> FpcaBasis:
    """Express each eigenfunction in the spline basis and evaluate it on
    the full (normalized) grid.

    The same knot layout used for smoothing is reused; least-squares
    coefficients reproduce the midpoint values exactly whenever the
    eigenfunction lies in the basis span.
    """
    if cyclic is None:
        cyclic = basis.cyclic
    full_grid = np.asarray(full_grid, dtype=float)
    if basis.mid_grid.min() < full_grid.min() - 1e-12 or basis.mid_grid.max() > full_grid.max() + 1e-12:
        raise DataError("full grid must span the midpoint grid")
    p = n_basis(basis.nknots, cyclic)
    L = basis.mid_grid.size
    if L < p:
        raise DataError(
            f"projection design is rank-deficient: {L} midpoints for {p} basis "
            "functions; use more bins (smaller width) or fewer knots"
        )
    B_mid = bspline_basis(basis.mid_grid, basis.nknots, cyclic)
    coefs, *_ = np.linalg.lstsq(B_mid, basis.eigenfunctions_mid, rcond=None)
    B_full = bspline_basis(full_grid, basis.nknots, cyclic)
    phi_full = B_full @ coefs
    return replace(
        basis,
        full_grid=full_grid.copy(),
        eigenfunctions_full=phi_full,
        coefs=coefs,
    )
