"""Command-line front end: ``fgfpca fit | simulate | evaluate``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. stdout carries exactly one JSON summary; everything else goes
to stderr. Every output directory gets a manifest.json recording the
resolved configuration, input digests and produced files, written
atomically after the run succeeds.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import pandas as pd

from . import __version__
from .data import load_long_csv
from .errors import ConfigError, DataError, NumericalError
from .metrics import EvalReport, ise_beta0, mise_eta, mise_phi, predictive_metrics
from .pipeline import PipelineConfig, fast_gfpca
from .simulate import SimScenario
from .study import parse_methods, run_study

FLOAT_FMT = "%.17g"

FIT_FILES = (
    "scores.csv",
    "beta0.csv",
    "eigenfunctions.csv",
    "eigenvalues.csv",
    "fitted.csv",
    "fit.json",
    "manifest.json",
)


def _eprint(*parts):
    print(*parts, file=sys.stderr)


def _jsonable(obj):
    """Recursively convert numpy containers/scalars for json.dump."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json_atomic(path: str, payload: dict):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _write_manifest(outdir, command, resolved, seed, inputs, outputs, timings):
    manifest = {
        "version": __version__,
        "command": command,
        "resolved_config": _jsonable(resolved),
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs if p},
        "outputs": sorted(outputs),
        "timings": _jsonable(timings),
    }
    _write_json_atomic(os.path.join(outdir, "manifest.json"), manifest)


def _resolve(cli_value, file_cfg: dict, key: str, default):
    """CLI flag > config file > default."""
    if cli_value is not None:
        return cli_value
    if key in file_cfg:
        return file_cfg[key]
    return default


# ---------------------------------------------------------------- fit


def _write_fit_outputs(outdir: str, fit, plots: bool) -> list[str]:
    J = fit.grid.size
    K = fit.scores.shape[1]
    s_index = np.arange(1, J + 1)
    phi = fit.basis.eigenfunctions_full

    frames = {
        "scores.csv": pd.DataFrame(
            {"id": list(fit.subject_ids)}
            | {f"xi_{k + 1}": fit.scores[:, k] for k in range(K)}
        ),
        "beta0.csv": pd.DataFrame(
            {"s_index": s_index, "s": fit.grid, "beta0": fit.beta0_full}
        ),
        "eigenfunctions.csv": pd.DataFrame(
            {"s_index": s_index, "s": fit.grid}
            | {f"phi_{k + 1}": phi[:, k] for k in range(K)}
        ),
        "eigenvalues.csv": pd.DataFrame(
            {"k": np.arange(1, K + 1), "lambda": fit.score_vars}
        ),
        "fitted.csv": pd.DataFrame(
            {
                "id": np.repeat(list(fit.subject_ids), J),
                "s_index": np.tile(s_index, len(fit.subject_ids)),
                "eta": fit.eta_full.ravel(),
                "mean": fit.fitted_means.ravel(),
            }
        ),
    }
    if plots:
        long = [
            pd.DataFrame(
                {"panel": "beta0", "series": "estimate", "s": fit.grid, "value": fit.beta0_full}
            )
        ]
        long += [
            pd.DataFrame(
                {
                    "panel": "eigenfunctions",
                    "series": f"phi_{k + 1}",
                    "s": fit.grid,
                    "value": phi[:, k],
                }
            )
            for k in range(K)
        ]
        frames["plots.csv"] = pd.concat(long, ignore_index=True)

    for name, frame in frames.items():
        frame.to_csv(os.path.join(outdir, name), index=False, float_format=FLOAT_FMT)

    info = {
        "family": fit.family.name,
        "K": K,
        "N": len(fit.subject_ids),
        "J": J,
        "lambda_beta": fit.lambda_beta,
        "score_vars": fit.score_vars,
        "sigma2_resid": fit.sigma2_resid,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "cyclic": fit.basis.cyclic,
        "pve_target": fit.basis.pve_target,
        "timings": fit.timings,
        "diagnostics": fit.diagnostics,
    }
    _write_json_atomic(os.path.join(outdir, "fit.json"), info)
    return list(frames) + ["fit.json"]


def cmd_fit(args) -> int:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as f:
                file_cfg = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"config: {e}") from e

    family = _resolve(args.family, file_cfg, "family", None)
    if family is None:
        raise ConfigError("family is required (--family or config file)")
    width = _resolve(args.width, file_cfg, "width", None)
    if width is None:
        raise ConfigError("width is required (--width or config file)")
    pve = _resolve(args.pve, file_cfg, "pve", None)
    npc = _resolve(args.npc, file_cfg, "npc", None)
    if args.pve is not None and args.npc is not None:
        raise ConfigError("pve and npc are mutually exclusive")
    cyclic = bool(_resolve(args.cyclic, file_cfg, "cyclic", False))

    cfg = PipelineConfig(
        width=int(width),
        overlap=bool(_resolve(args.overlap, file_cfg, "overlap", True)),
        cyclic=cyclic,
        pve=float(pve) if pve is not None else 0.95,
        npc=int(npc) if npc is not None else None,
        modified=bool(_resolve(args.modified, file_cfg, "modified", False)),
        n_subsamples=int(_resolve(args.subsamples, file_cfg, "subsamples", 4)),
        subsample_size=_resolve(args.subsample_size, file_cfg, "subsample_size", None),
        seed=int(_resolve(args.seed, file_cfg, "seed", 0)),
    )

    data = load_long_csv(args.data, family=family, cyclic=cyclic)
    _eprint(f"fit: N={data.N} J={data.J} family={data.family.name} width={cfg.width} "
            f"overlap={cfg.overlap} cyclic={cfg.cyclic}")
    fit = fast_gfpca(data, cfg)
    for w in fit.diagnostics.get("warnings", []):
        _eprint("warning:", w)

    os.makedirs(args.out, exist_ok=True)
    outputs = _write_fit_outputs(args.out, fit, plots=args.plots)
    resolved = {
        "family": data.family.name,
        "width": cfg.width,
        "overlap": cfg.overlap,
        "cyclic": cfg.cyclic,
        "pve": cfg.pve,
        "npc": cfg.npc,
        "modified": cfg.modified,
        "subsamples": cfg.n_subsamples,
        "subsample_size": cfg.subsample_size,
        "seed": cfg.seed,
    }
    _write_manifest(
        args.out, "fit", resolved, cfg.seed,
        [args.data, args.config], outputs + ["manifest.json"], fit.timings,
    )
    print(json.dumps(_jsonable({
        "out": args.out,
        "N": data.N,
        "J": data.J,
        "K": fit.scores.shape[1],
        "converged": fit.converged,
        "total_minutes": fit.timings["total_minutes"],
        "files": sorted(outputs + ["manifest.json"]),
    })))
    return 0


# ----------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario) as f:
            raw = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"scenario: {e}") from e
    allowed = {"N", "J", "family", "eigen_set", "eigenvalues", "mean_spec", "sigma_e", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"scenario: unknown fields {sorted(unknown)}")
    if "eigenvalues" in raw:
        raw["eigenvalues"] = tuple(raw["eigenvalues"])
    if isinstance(raw.get("mean_spec"), list):
        raw["mean_spec"] = tuple(raw["mean_spec"])
    scenario = SimScenario(**raw)

    methods = parse_methods(args.methods)
    seed = args.seed if args.seed is not None else scenario.seed
    _eprint(f"simulate: {scenario.family} N={scenario.N} J={scenario.J} "
            f"{scenario.eigen_set}, {args.replicates} replicates x {len(methods)} methods")
    results, summary = run_study(
        scenario, methods, args.replicates, master_seed=seed, n_jobs=args.jobs
    )

    os.makedirs(args.out, exist_ok=True)
    results.to_csv(os.path.join(args.out, "results.csv"), index=False, float_format=FLOAT_FMT)
    _write_json_atomic(os.path.join(args.out, "summary.json"), summary)
    outputs = ["results.csv", "summary.json"]
    if args.plots:
        metric_cols = [c for c in ("mise_eta", "mise_phi", "ise_beta0", "total_minutes")
                       if c in results.columns]
        tidy = results.melt(
            id_vars=["replicate", "method"], value_vars=metric_cols,
            var_name="panel", value_name="value",
        ).rename(columns={"method": "series", "replicate": "s"})
        tidy[["panel", "series", "s", "value"]].to_csv(
            os.path.join(args.out, "plots.csv"), index=False, float_format=FLOAT_FMT
        )
        outputs.append("plots.csv")
    _write_manifest(
        args.out, "simulate",
        {"scenario": raw, "methods": [m.label for m in methods],
         "replicates": args.replicates},
        seed, [args.scenario], outputs + ["manifest.json"], {},
    )
    print(json.dumps(_jsonable(summary)))
    return 0


# ----------------------------------------------------------- evaluate


def _read_curve_dir(d: str):
    """Read the curve files of a fit-shaped directory: (grid, beta0,
    phi J x K, eta N x J or None, mean N x J or None)."""
    beta0_df = pd.read_csv(os.path.join(d, "beta0.csv"))
    grid = beta0_df["s"].to_numpy()
    beta0 = beta0_df["beta0"].to_numpy()
    phi_df = pd.read_csv(os.path.join(d, "eigenfunctions.csv"))
    phi = phi_df[[c for c in phi_df.columns if c.startswith("phi_")]].to_numpy()
    eta = mean = None
    fitted_path = os.path.join(d, "fitted.csv")
    if os.path.exists(fitted_path):
        fitted = pd.read_csv(fitted_path)
        ids = list(dict.fromkeys(fitted["id"]))
        eta = fitted.pivot(index="id", columns="s_index", values="eta").loc[ids].to_numpy()
        mean = fitted.pivot(index="id", columns="s_index", values="mean").loc[ids].to_numpy()
    return grid, beta0, phi, eta, mean


def cmd_evaluate(args) -> int:
    if not args.truth and not args.data:
        raise ConfigError("evaluate needs --truth and/or --data")
    grid, beta0_est, phi_est, eta_est, mean_est = _read_curve_dir(args.fit)
    with open(os.path.join(args.fit, "fit.json")) as f:
        info = json.load(f)

    m_eta = m_phi = m_phi_k = i_beta = auc = logloss = None
    if args.truth:
        if os.path.isdir(args.truth):
            tgrid, beta0_true, phi_true, eta_true, _ = _read_curve_dir(args.truth)
            if tgrid.size != grid.size:
                raise DataError("truth grid length does not match the fit")
            i_beta = ise_beta0(beta0_est, beta0_true, grid)
            if phi_est.shape == phi_true.shape:
                m_phi, per_k = mise_phi(phi_est, phi_true, grid)
                m_phi_k = tuple(float(v) for v in per_k)
            else:
                _eprint(f"note: K mismatch (fit {phi_est.shape[1]}, truth "
                        f"{phi_true.shape[1]}); skipping eigenfunction error")
        else:
            truth = pd.read_csv(args.truth)
            ids = list(dict.fromkeys(truth["id"]))
            eta_true = truth.pivot(index="id", columns="s_index", values="eta").loc[ids].to_numpy()
        if eta_true is not None and eta_est is not None:
            m_eta = mise_eta(eta_est, eta_true, grid)
    if args.data:
        data = load_long_csv(args.data, family=info["family"], cyclic=info.get("cyclic", False))
        if data.family.name == "binomial":
            auc, logloss = predictive_metrics(data, mean_est)
        else:
            _eprint("note: predictive metrics need binomial data; skipping")

    report = EvalReport(
        mise_eta=m_eta, mise_phi=m_phi, mise_phi_k=m_phi_k,
        ise_beta0=i_beta, auc=auc, logloss=logloss,
        times=info.get("timings", {}),
    )
    payload = report.to_dict()
    _write_json_atomic(os.path.join(args.fit, "evaluation.json"), payload)
    print(json.dumps(_jsonable(payload)))
    return 0


# --------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fgfpca",
        description="Fast functional PCA for binary, count and continuous curves",
    )
    sub = p.add_subparsers(dest="command", required=True)
    boolopt = argparse.BooleanOptionalAction

    f = sub.add_parser("fit", help="fit the model to a long CSV")
    f.add_argument("--data", required=True, help="long CSV with id,s_index,value")
    f.add_argument("--family", choices=["binomial", "poisson", "gaussian"])
    f.add_argument("--width", type=int, help="bin width (even)")
    f.add_argument("--overlap", action=boolopt, default=None)
    f.add_argument("--cyclic", action=boolopt, default=None)
    f.add_argument("--pve", type=float, help="proportion of variance explained")
    f.add_argument("--npc", type=int, help="fixed number of components")
    f.add_argument("--modified", action=boolopt, default=None,
                   help="subsampled final refit")
    f.add_argument("--subsamples", type=int)
    f.add_argument("--subsample-size", dest="subsample_size", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--config", help="JSON config file (flags take precedence)")
    f.add_argument("--out", required=True)
    f.add_argument("--plots", action="store_true", help="also write tidy plot CSV")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a replicated simulation study")
    s.add_argument("--scenario", required=True, help="scenario JSON file")
    s.add_argument("--replicates", type=int, required=True)
    s.add_argument("--methods", required=True,
                   help="comma list, e.g. overlap_w6,nonoverlap_w10")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="score a fit against truth and/or data")
    e.add_argument("--fit", required=True, help="directory produced by fit")
    e.add_argument("--truth", help="truth directory (fit layout) or long eta CSV")
    e.add_argument("--data", help="long CSV of observations")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        _eprint(f"error: {e}")
        return 2
    except DataError as e:
        _eprint(f"error: {e}")
        return 3
    except OSError as e:
        _eprint(f"error: {e}")
        return 3
    except NumericalError as e:
        _eprint(f"error: {e}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
