"""Cubic B-spline design matrices and difference penalties, with cyclic
variants for periodic domains. All bases live on the normalized domain
[0,1]; callers pass normalized coordinates.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigError

DEGREE = 3


def n_basis(nknots: int, cyclic: bool) -> int:
    """Number of columns produced by bspline_basis."""
    return nknots if cyclic else nknots + DEGREE


def knots_for_dim(dim: int, cyclic: bool) -> int:
    """Inverse of n_basis: segment count giving a basis of size dim."""
    nk = dim if cyclic else dim - DEGREE
    if nk < 1:
        raise ConfigError(f"basis dimension {dim} too small for cubic splines")
    return nk


def bspline_basis(x, nknots: int, cyclic: bool) -> np.ndarray:
    """Evaluate a cubic B-spline basis with nknots equal segments on [0,1].

    Non-cyclic bases have nknots+3 columns. Cyclic bases wrap the last
    three columns onto the first three, giving nknots columns and
    period-1 continuity up to the second derivative.
    """
    x = np.asarray(x, dtype=float)
    if nknots < 1:
        raise ConfigError("nknots must be >= 1")
    if cyclic and nknots < DEGREE + 1:
        raise ConfigError(f"cyclic basis needs nknots >= {DEGREE + 1}")
    t = np.arange(-DEGREE, nknots + DEGREE + 1, dtype=float) / nknots
    if cyclic:
        xe = np.mod(x, 1.0)
        # x == 1 wraps to 0; both evaluate identically under the wrap below
    else:
        xe = x
        if np.any(xe < 0.0) or np.any(xe > 1.0):
            raise ConfigError("non-cyclic basis requires x within [0, 1]")
    B = BSpline.design_matrix(xe, t, DEGREE).toarray()
    if cyclic:
        B[:, :DEGREE] += B[:, nknots : nknots + DEGREE]
        B = B[:, :nknots]
    return B


def difference_penalty(p: int, order: int = 2, cyclic: bool = False) -> np.ndarray:
    """Penalty matrix D'D for order-th differences of p coefficients.

    The cyclic version differences around the wrap, so its null space is
    constants only; the non-cyclic null space is polynomials of degree
    order-1.
    """
    if cyclic:
        D = np.zeros((p, p))
        base = np.zeros(p)
        # binomial coefficients with alternating signs, e.g. 1,-2,1
        coef = np.array([(-1) ** k * _binom(order, k) for k in range(order + 1)])
        for i in range(p):
            for k in range(order + 1):
                D[i, (i + k) % p] += coef[k]
    else:
        D = np.eye(p)
        for _ in range(order):
            D = np.diff(D, axis=0)
    return D.T @ D


def _binom(n, k):
    out = 1
    for j in range(k):
        out = out * (n - j) // (j + 1)
    return out


def penalty_rank_logdet(P: np.ndarray):
    """Rank and positive-part log-determinant of a penalty matrix."""
    ev = np.linalg.eigvalsh(P)
    pos = ev > 1e-10 * max(ev[-1], 1.0)
    return int(pos.sum()), float(np.sum(np.log(ev[pos])))
