"""Command line interface.

Subcommands: fit (single penalty pair), cv (grid search + refit), simulate
(Monte Carlo study), report (coefficient tables from a saved model).  A JSON
config file can carry any flag value plus the dataset file paths; explicit
flags win over config values.  Exit codes: 0 success, 2 usage or config
problems, 1 runtime failures; errors are emitted as a JSON object on stderr.
"""

import argparse
import json
import os
import re
import sys

import numpy as np

from . import admm, io, selection, sim
from .model import HyperParams, objective

__all__ = ["main", "cli", "UsageError"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, help="fold and simulation seed (default 0)")
    p.add_argument("--k", type=int, help="number of CV folds (default 5)")
    p.add_argument("--tol", type=float, help="solver convergence tolerance (default 1e-7)")
    p.add_argument("--max-iter", type=int, help="solver iteration cap (default 10000)")
    p.add_argument(
        "--standardize",
        choices=["true", "false"],
        help="center and scale covariate columns before fitting (default false)",
    )
    p.add_argument(
        "--keep-standardized",
        action="store_true",
        default=None,
        help="report coefficients on the standardized scale instead of the original",
    )
    p.add_argument(
        "--metric-mode",
        choices=["paper", "conventional"],
        help="selection-rate denominator convention (default paper)",
    )
    p.add_argument("--threads", type=int, help="worker threads (default 1)")


def build_parser():
    parser = _Parser(prog="intmr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")
    p_fit = sub.add_parser("fit", help="fit at one (lambda, gamma)")
    p_fit.add_argument("--lambda", dest="lam", type=float, help="group penalty (default 0)")
    p_fit.add_argument("--gamma", type=float, help="entrywise penalty (default 0)")
    _add_common(p_fit)
    p_cv = sub.add_parser("cv", help="cross-validated grid search and refit")
    p_cv.add_argument(
        "--grid",
        help="grid spec: NxM for a data-driven grid with N lambdas and M gammas, "
        "or explicit 'l1,l2,...;g1,g2,...' (default 15x15)",
    )
    _add_common(p_cv)
    p_sim = sub.add_parser("simulate", help="run the Monte Carlo study")
    p_sim.add_argument(
        "--scenario",
        action="append",
        help="scenario name like M2_n50_s5_rx01_ry01; repeatable",
    )
    p_sim.add_argument("--replicates", type=int, help="replicates per scenario")
    p_sim.add_argument("--methods", help="comma list from mr,ur,mlasso,lasso")
    p_sim.add_argument("--grid", help="grid spec NxM for the study fits (default 15x15)")
    p_sim.add_argument("--n-test", type=int, help="test rows per dataset (default 1000)")
    _add_common(p_sim)
    p_rep = sub.add_parser("report", help="coefficient tables from a saved model")
    p_rep.add_argument("--model", help="model JSON written by fit or cv")
    _add_common(p_rep)
    return parser


_DEFAULTS = {
    "out": ".",
    "seed": 0,
    "k": 5,
    "tol": 1e-7,
    "max_iter": 10000,
    "standardize": "false",
    "keep_standardized": False,
    "metric_mode": "paper",
    "threads": 1,
    "lam": 0.0,
    "gamma": 0.0,
    "grid": "15x15",
    "replicates": None,
    "methods": "mr,ur,mlasso,lasso",
    "n_test": 1000,
    "scenario": None,
    "model": None,
    "blocks": None,
    "rho": 1.0,
}


def _settings(args):
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    merged = dict(_DEFAULTS)
    config = getattr(args, "config", None)
    if config:
        if not os.path.exists(config):
            raise UsageError("config file %s does not exist" % config)
        try:
            with open(config) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError("config file %s is not valid JSON: %s" % (config, exc))
        if not isinstance(doc, dict):
            raise UsageError("config file %s must hold a JSON object" % config)
        for key, val in doc.items():
            norm = key.replace("-", "_")
            if norm not in merged:
                raise UsageError("config file %s: unknown key %r" % (config, key))
            merged[norm] = val
    for key, val in vars(args).items():
        if key in ("command", "config"):
            continue
        if val is not None:
            merged[key] = val
    if isinstance(merged["standardize"], str):
        merged["standardize"] = merged["standardize"] == "true"
    if merged["k"] < 2:
        raise UsageError("--k must be at least 2")
    if merged["threads"] < 1:
        raise UsageError("--threads must be at least 1")
    if merged["lam"] < 0 or merged["gamma"] < 0:
        raise UsageError("penalties must be nonnegative")
    return merged


def _parse_grid_spec(spec, data):
    spec = str(spec)
    m = re.fullmatch(r"(\d+)x(\d+)", spec)
    if m:
        return selection.default_grid(data, int(m.group(1)), int(m.group(2)))
    if ";" in spec:
        try:
            lam_part, gam_part = spec.split(";")
            lambdas = [float(v) for v in lam_part.split(",") if v]
            gammas = [float(v) for v in gam_part.split(",") if v]
            return selection.CvGrid(lambdas=tuple(lambdas), gammas=tuple(gammas))
        except ValueError as exc:
            raise UsageError("bad grid spec %r: %s" % (spec, exc))
    raise UsageError("bad grid spec %r (want NxM or 'l1,l2;g1,g2')" % spec)


def _load_blocks(cfg):
    blocks = cfg.get("blocks")
    if not blocks:
        raise UsageError("no datasets: config must list blocks [{y, x[, z]}, ...]")
    loaded = io.load_dataset(blocks)
    if cfg["standardize"]:
        data, record = io.standardize(loaded.data, loaded.x_header, loaded.z_headers)
    else:
        data, record = loaded.data, None
    return loaded, data, record


def _meta(hp, rep, standardized, extra=None):
    meta = {
        "lambda": hp.lam,
        "gamma": hp.gamma,
        "rho": hp.rho,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "kkt_residual": rep.kkt_residual,
        "consensus_gap": rep.consensus_gap,
        "objective": float(rep.objective_trace[-1]),
        "standardized_fit": standardized,
    }
    if extra:
        meta.update(extra)
    return meta


def _final_fit(rep, record, keep_standardized):
    if record is not None and not keep_standardized:
        return record.unscale_fit(rep.fit)
    return rep.fit


def _cmd_fit(cfg):
    loaded, data, record = _load_blocks(cfg)
    hp = HyperParams(lam=cfg["lam"], gamma=cfg["gamma"], rho=cfg["rho"])
    opts = admm.SolverOptions(tol=cfg["tol"], max_iter=cfg["max_iter"])
    rep = admm.fit(data, hp, opts=opts)
    out_fit = _final_fit(rep, record, cfg["keep_standardized"])
    path = os.path.join(cfg["out"], "model.json")
    io.save_fit(out_fit, path, meta=_meta(hp, rep, record is not None))
    return {"model": path, "iterations": rep.iterations, "converged": rep.converged}


def _cmd_cv(cfg):
    loaded, data, record = _load_blocks(cfg)
    grid = _parse_grid_spec(cfg["grid"], data)
    opts = admm.SolverOptions(tol=cfg["tol"], max_iter=cfg["max_iter"])
    result = selection.select(
        data,
        grid,
        K=cfg["k"],
        seed=cfg["seed"],
        opts=opts,
        rho=cfg["rho"],
        threads=cfg["threads"],
    )
    out = cfg["out"]
    io.write_cv_matrix_csv(result, os.path.join(out, "cv_matrix.csv"))
    hp = HyperParams(lam=result.best_lambda, gamma=result.best_gamma, rho=cfg["rho"])
    io.dump_json(
        {
            "best_lambda": result.best_lambda,
            "best_gamma": result.best_gamma,
            "cv_min": float(result.cv_matrix.min()),
            "lambdas": list(result.grid.lambdas),
            "gammas": list(result.grid.gammas),
            "k": cfg["k"],
            "seed": cfg["seed"],
        },
        os.path.join(out, "selection.json"),
    )
    out_fit = _final_fit(result.refit, record, cfg["keep_standardized"])
    io.save_fit(
        out_fit,
        os.path.join(out, "model.json"),
        meta=_meta(hp, result.refit, record is not None),
    )
    return {
        "best_lambda": result.best_lambda,
        "best_gamma": result.best_gamma,
        "model": os.path.join(out, "model.json"),
    }


def _cmd_simulate(cfg):
    scenarios = cfg.get("scenario")
    if not scenarios:
        raise UsageError("simulate needs at least one --scenario")
    if isinstance(scenarios, str):
        scenarios = [scenarios]
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    grid_spec = str(cfg["grid"])
    m = re.fullmatch(r"(\d+)x(\d+)", grid_spec)
    if not m:
        raise UsageError("simulate --grid must be NxM, got %r" % grid_spec)
    grid_size = (int(m.group(1)), int(m.group(2)))
    try:
        configs = [
            sim.parse_scenario(s, seed=cfg["seed"], n_test=cfg["n_test"])
            for s in scenarios
        ]
    except ValueError as exc:
        raise UsageError(str(exc))
    opts = admm.SolverOptions(tol=cfg["tol"], max_iter=cfg["max_iter"])
    metrics = sim.run_study(
        configs,
        methods=methods,
        replicates=cfg["replicates"],
        K=cfg["k"],
        opts=opts,
        grid_size=grid_size,
        metric_mode=cfg["metric_mode"],
        threads=cfg["threads"],
    )
    out = cfg["out"]
    io.write_boxplot_csv(metrics, os.path.join(out, "boxplot.csv"))
    doc = {
        "records": [
            {
                "scenario": r.scenario,
                "method": r.method,
                "replicate": r.replicate,
                "mse": r.mse.tolist(),
                "fpr": r.fpr,
                "fnr": r.fnr,
            }
            for r in sorted(
                metrics.records, key=lambda r: (r.scenario, r.method, r.replicate)
            )
        ],
        "failures": [list(f) for f in metrics.failures],
        "summary": metrics.summary(),
    }
    io.dump_json(doc, os.path.join(out, "study.json"))
    return {
        "records": len(metrics.records),
        "failures": len(metrics.failures),
        "study": os.path.join(out, "study.json"),
    }


def _cmd_report(cfg):
    path = cfg.get("model")
    if not path:
        raise UsageError("report needs --model")
    fit, meta = io.load_fit(path)
    meta = meta or {}
    out = cfg["out"]
    x_header = z_headers = None
    recomputed = {}
    if cfg.get("blocks"):
        loaded, data, record = _load_blocks(cfg)
        x_header, z_headers = loaded.x_header, loaded.z_headers
        if "lambda" in meta and not meta.get("standardized_fit"):
            hp = HyperParams(
                lam=meta["lambda"], gamma=meta["gamma"], rho=meta.get("rho", 1.0)
            )
            recomputed = {
                "kkt_residual_recomputed": admm.kkt_residual(loaded.data, fit, hp),
                "objective_recomputed": objective(loaded.data, fit, hp),
            }
    io.write_coefficient_csv(
        fit, os.path.join(out, "coefficients.csv"), x_header, z_headers
    )
    summary = {
        "datasets": fit.M,
        "shared_covariates": fit.p,
        "responses": fit.q,
        "selected_shared": int(fit.support_B.any(axis=1).sum()),
        "selected_specific": [int(s.any(axis=1).sum()) for s in fit.support_C],
        "meta": meta,
    }
    summary.update(recomputed)
    io.dump_json(summary, os.path.join(out, "summary.json"))
    return {"coefficients": os.path.join(out, "coefficients.csv")}


def cli(argv=None):
    """Run the CLI; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (fit, cv, simulate, report)")
        cfg = _settings(args)
        os.makedirs(cfg["out"], exist_ok=True)
        handler = {
            "fit": _cmd_fit,
            "cv": _cmd_cv,
            "simulate": _cmd_simulate,
            "report": _cmd_report,
        }[args.command]
        summary = handler(cfg)
        print(json.dumps(summary, sort_keys=True))
        return 0
    except UsageError as exc:
        sys.stderr.write(
            json.dumps({"error": "UsageError", "message": str(exc)}) + "\n"
        )
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report, do not crash
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1


def main(argv=None):
    sys.exit(cli(argv))


if __name__ == "__main__":
    main()
