"""Replicated simulation studies: generate data, fit every method
configuration on the same replicate, score against the truth, and
aggregate medians per method.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .errors import ConfigError
from .metrics import EvalReport, ise_beta0, mise_eta, mise_phi, predictive_metrics
from .pipeline import PipelineConfig, fast_gfpca
from .refit import GfpcaFit
from .simulate import SimScenario, SimTruth, generate

_METHOD_RE = re.compile(r"^(overlap|non[-_]?overlap)[-_]w(\d+)$")


@dataclass(frozen=True)
class MethodSpec:
    """One binning configuration to benchmark."""

    width: int
    overlap: bool

    @property
    def label(self) -> str:
        return f"{'overlap' if self.overlap else 'nonoverlap'}_w{self.width}"


def parse_methods(spec: str) -> list[MethodSpec]:
    """Parse a comma list like 'overlap_w6,nonoverlap_w10'."""
    methods = []
    for token in spec.split(","):
        token = token.strip().lower()
        if not token:
            continue
        m = _METHOD_RE.match(token)
        if not m:
            raise ConfigError(
                f"methods: cannot parse {token!r}; expected e.g. overlap_w6 or nonoverlap_w10"
            )
        methods.append(MethodSpec(width=int(m.group(2)), overlap=m.group(1) == "overlap"))
    if not methods:
        raise ConfigError("methods: at least one method is required")
    return methods


def evaluate_fit(
    fit: GfpcaFit, truth: SimTruth | None = None, data=None
) -> EvalReport:
    """Score a fit against simulation truth and/or observed binary data.

    Eigenfunction error is skipped (left None) when the fitted and true
    component counts differ, since index-matched comparison is undefined
    there; the other fields do not depend on K.
    """
    m_eta = m_phi = m_phi_k = i_beta = auc = logloss = None
    if truth is not None:
        m_eta = mise_eta(fit.eta_full, truth.eta, fit.grid)
        i_beta = ise_beta0(fit.beta0_full, truth.beta0, fit.grid)
        if fit.basis.eigenfunctions_full.shape == truth.phi.shape:
            m_phi, per_k = mise_phi(fit.basis.eigenfunctions_full, truth.phi, fit.grid)
            m_phi_k = tuple(float(v) for v in per_k)
    if data is not None and data.family.name == "binomial":
        auc, logloss = predictive_metrics(data, fit.fitted_means)
    return EvalReport(
        mise_eta=m_eta,
        mise_phi=m_phi,
        mise_phi_k=m_phi_k,
        ise_beta0=i_beta,
        auc=auc,
        logloss=logloss,
        times=dict(fit.timings),
    )


def _one_replicate(
    scenario: SimScenario,
    methods: list[MethodSpec],
    rep: int,
    rep_seed: int,
    base_cfg: PipelineConfig,
) -> list[dict]:
    """All methods on one shared dataset; one result row per method."""
    data, truth = generate(replace(scenario, seed=rep_seed))
    rows = []
    for m in methods:
        cfg = replace(base_cfg, width=m.width, overlap=m.overlap, cyclic=scenario.cyclic)
        fit = fast_gfpca(data, cfg)
        report = evaluate_fit(fit, truth=truth, data=data)
        row = {
            "replicate": rep,
            "seed": rep_seed,
            "method": m.label,
            "width": m.width,
            "overlap": m.overlap,
            "K": fit.scores.shape[1],
        }
        row.update(report.to_dict())
        if report.mise_phi_k is not None:
            row.update({f"mise_phi_k{k + 1}": v for k, v in enumerate(report.mise_phi_k)})
        row.pop("mise_phi_k", None)
        rows.append(row)
    return rows


def run_study(
    scenario: SimScenario,
    methods: list[MethodSpec],
    replicates: int,
    master_seed: int = 0,
    base_cfg: PipelineConfig | None = None,
    n_jobs: int = 1,
) -> tuple[pd.DataFrame, dict]:
    """Run the full grid of replicates x methods.

    Replicate seeds derive from the master seed, and every method in a
    replicate sees the same dataset, so method columns are paired
    comparisons. Returns (results frame, per-method median summary);
    row order is (replicate, method) regardless of worker scheduling.
    """
    if replicates < 1:
        raise ConfigError(f"replicates: must be >= 1, got {replicates}")
    if base_cfg is None:
        base_cfg = PipelineConfig(npc=scenario.K)
    rep_seeds = [
        int(s) for s in np.random.SeedSequence(master_seed).generate_state(replicates, np.uint64)
    ]

    if n_jobs == 1:
        chunks = [
            _one_replicate(scenario, methods, r, rep_seeds[r], base_cfg)
            for r in range(replicates)
        ]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs)(
            delayed(_one_replicate)(scenario, methods, r, rep_seeds[r], base_cfg)
            for r in range(replicates)
        )
    results = pd.DataFrame([row for chunk in chunks for row in chunk])

    summary = {"n_replicates": replicates, "methods": {}}
    metric_cols = [
        c
        for c in (
            "mise_eta", "mise_phi", "ise_beta0", "auc", "logloss",
            "step2_minutes", "step4_minutes", "total_minutes",
        )
        if c in results.columns
    ]
    for m in methods:
        sub = results[results["method"] == m.label]
        summary["methods"][m.label] = {
            f"median_{c}": (None if sub[c].isna().all() else float(sub[c].median()))
            for c in metric_cols
        }
    return results, summary
