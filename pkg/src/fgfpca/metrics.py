"""Accuracy and in-sample predictive metrics.

Integrated squared errors use trapezoid quadrature on the grid mapped
to [0,1], so a constant offset of 1 integrates to exactly 1 regardless
of J. Eigenfunction errors are computed per component after sign
alignment; components are matched by index, never permuted, so an
order swap shows up as a large error instead of being hidden.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import FunctionalDataset
from .errors import DataError
from .quadrature import trapezoid_weights


def _norm_weights(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise DataError("grid must be one-dimensional with at least 2 points")
    g = (g - g[0]) / (g[-1] - g[0])
    return trapezoid_weights(g)


def mise_eta(est: np.ndarray, truth: np.ndarray, grid) -> float:
    """Mean over subjects of the integrated squared curve error."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise DataError(f"shape mismatch: est {est.shape} vs truth {truth.shape}")
    w = _norm_weights(grid)
    if est.ndim == 1:
        est, truth = est[None, :], truth[None, :]
    if est.shape[1] != w.size:
        raise DataError(f"curves have {est.shape[1]} points but grid has {w.size}")
    return float(np.mean((est - truth) ** 2 @ w))


def ise_beta0(est, truth, grid) -> float:
    """Integrated squared error of a single curve."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.ndim != 1 or est.shape != truth.shape:
        raise DataError(f"shape mismatch: est {est.shape} vs truth {truth.shape}")
    return mise_eta(est[None, :], truth[None, :], grid)


def align_signs(est_phi: np.ndarray, true_phi: np.ndarray, grid) -> np.ndarray:
    """Flip any estimated column whose inner product with the matching
    true column is negative. Returns a corrected copy."""
    w = _norm_weights(grid)
    flips = np.where((est_phi * true_phi).T @ w < 0, -1.0, 1.0)
    return est_phi * flips


def mise_phi(est_phi: np.ndarray, true_phi: np.ndarray, grid) -> tuple[float, np.ndarray]:
    """(mean over components, per-component) integrated squared errors
    after sign alignment."""
    est_phi = np.asarray(est_phi, dtype=float)
    true_phi = np.asarray(true_phi, dtype=float)
    if est_phi.shape != true_phi.shape:
        raise DataError(
            f"component count mismatch: est {est_phi.shape} vs truth {true_phi.shape}"
        )
    w = _norm_weights(grid)
    aligned = align_signs(est_phi, true_phi, grid)
    per_k = ((aligned - true_phi) ** 2).T @ w
    return float(per_k.mean()), per_k


def predictive_metrics(data: FunctionalDataset, fitted_probs: np.ndarray) -> tuple[float, float]:
    """In-sample AUC and log-loss over all pooled subject-by-grid cells.

    AUC uses the rank (Mann-Whitney) formula with ties counted 1/2.
    Probabilities are clipped to [1e-12, 1 - 1e-12] before the log-loss.
    """
    if data.family.name != "binomial":
        raise DataError("predictive metrics require binary (binomial) data")
    p = np.asarray(fitted_probs, dtype=float)
    if p.shape != data.values.shape:
        raise DataError(f"fitted_probs shape {p.shape} does not match data {data.values.shape}")
    if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
        raise DataError("fitted_probs must be probabilities in [0, 1]")

    z = data.values.ravel()
    p = np.clip(p.ravel(), 1e-12, 1.0 - 1e-12)
    n_pos = int(z.sum())
    n_neg = z.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: labels are all zero or all one")

    ranks = rankdata(p)  # average ranks, so ties contribute 1/2
    u = ranks[z == 1].sum() - n_pos * (n_pos + 1) / 2.0
    auc = float(u / (n_pos * n_neg))
    logloss = float(-np.mean(z * np.log(p) + (1 - z) * np.log1p(-p)))
    return auc, logloss


@dataclass(frozen=True)
class EvalReport:
    """One evaluation row; accuracy fields need simulation truth, the
    predictive pair needs binary data, absent pieces stay None."""

    mise_eta: float | None = None
    mise_phi: float | None = None
    mise_phi_k: tuple | None = None
    ise_beta0: float | None = None
    auc: float | None = None
    logloss: float | None = None
    times: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mise_eta", "mise_phi", "ise_beta0", "logloss"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DataError(f"{name} must be nonnegative, got {v}")
        if self.auc is not None and not 0.0 <= self.auc <= 1.0:
            raise DataError(f"auc must be in [0, 1], got {self.auc}")

    def to_dict(self) -> dict:
        out = {
            "mise_eta": self.mise_eta,
            "mise_phi": self.mise_phi,
            "mise_phi_k": list(self.mise_phi_k) if self.mise_phi_k is not None else None,
            "ise_beta0": self.ise_beta0,
            "auc": self.auc,
            "logloss": self.logloss,
        }
        out.update({k: v for k, v in self.times.items()})
        return out
