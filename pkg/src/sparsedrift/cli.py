"""Config-driven experiment runner.

One JSON config file describes an experiment; the matrix of cells is
seeds x sparsity variants. Every cell runs the full pipeline
(generate-or-load -> inject sparsity -> classify missingness -> select/apply
imputer -> prequential run -> metrics) and writes one JSON report. A
manifest records the config hash, the cell index and the aggregate summary;
no output carries a timestamp, so reruns are byte-identical.

Config schema (all sections except ``dataset`` and ``seeds`` optional):

    {
      "dataset": {"kind": "generated", "n": 10000, "n_features": 4,
                  "class_sep": 4.0,
                  "feature": {"family": "normal", "mean": 5.0, "std": 1.0},
                  "drift": {"positions": [5000], "widths": [500],
                             "kind": "gradual"}}
               | {"kind": "csv", "path": "stream.csv",
                  "sidecar": "drift.json"},
      "sparsity": [ {"mechanism": "MAR", "rate": 0.3, "targets": [1, 2],
                     "driver": 0} , ... ],      # list of variants; each
                                                 # variant = plan or plan list
      "imputer": "auto" | "mean" | "knn:5"
               | {"auto": true, "candidates": ["mean", "median", "knn:5"]},
      "detectors": {"preset": "gradual", "window": 2000}
                 | {"members": ["adwin", "kswin"], "window": 1000}
                 | {"single": "adwin"},
      "metrics": {"adi_floor": 250},
      "risk": {"c1": 1.0, "c2": 0.5, "t": 0.0},
      "seeds": [1, 2, 3],
      "out": "results"
    }

Environment overrides: SPARSEDRIFT_OUT (output directory) and
SPARSEDRIFT_JOBS (worker count). Exit codes: 0 success, 2 config error,
3 data error, 4 at least one cell failed (see the manifest).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import ensemble as ens
from . import evaluation as ev
from . import imputation as imp
from . import missingness as miss
from . import streamgen as sg
from .data import (
    DriftSpec,
    LabeledStream,
    SparseMatrix,
    ingest_csv,
    read_stream_csv,
    write_drift_sidecar,
    write_stream_csv,
)
from .detectors import BACKEND, DETECTOR_NAMES, Signal, make_detector
from .errors import ConfigError, DataError, SparseDriftError

DEFAULT_AUTO_CANDIDATES = ("mean", "median", "mode", "zero", "knn:5")


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _dataset_stream(dataset: dict, seed: int) -> LabeledStream:
    kind = dataset.get("kind", "generated")
    if kind == "csv":
        path = dataset.get("path")
        if not path:
            raise ConfigError("csv dataset needs a 'path'")
        return read_stream_csv(path, dataset.get("sidecar"))
    if kind != "generated":
        raise ConfigError(f"unknown dataset kind {kind!r}")
    n = int(dataset.get("n", 10000))
    feature = dataset.get("feature")
    spec = None
    if feature:
        params = {k: v for k, v in feature.items() if k != "family"}
        spec = sg.DistributionSpec(feature["family"], params)
    base = sg.make_labeled_stream(
        n,
        n_features=int(dataset.get("n_features", 4)),
        seed=seed,
        feature_spec=spec,
        class_sep=float(dataset.get("class_sep", 4.0)),
        balance=float(dataset.get("balance", 0.5)),
    )
    drift_cfg = dataset.get("drift")
    if not drift_cfg:
        return base
    drift = DriftSpec(
        positions=tuple(drift_cfg["positions"]),
        widths=tuple(drift_cfg.get("widths", [0] * len(drift_cfg["positions"]))),
        kind=drift_cfg.get("kind", "abrupt"),
    )
    return sg.make_drift_stream(base, drift, seed=seed + 7919)


def _normalize_variant(variant) -> list[dict]:
    if variant is None:
        return []
    if isinstance(variant, dict):
        return [variant]
    return list(variant)


def _plan_from_dict(d: dict, seed: int, offset: int) -> sg.SparsityPlan:
    return sg.SparsityPlan(
        mechanism=d["mechanism"],
        rate=float(d["rate"]),
        targets=tuple(d.get("targets", ())),
        driver=d.get("driver"),
        seed=seed * 100003 + int(d.get("seed", 0)) + offset,
    )


def _imputer_config(config: dict) -> dict:
    section = config.get("imputer", "auto")
    if isinstance(section, str):
        if section.lower() == "auto":
            return {"auto": True, "candidates": list(DEFAULT_AUTO_CANDIDATES)}
        return {"auto": False, "method": section}
    if isinstance(section, dict):
        if section.get("auto"):
            return {
                "auto": True,
                "candidates": list(section.get("candidates", DEFAULT_AUTO_CANDIDATES)),
                "min_complete_rows": int(section.get("min_complete_rows", 50)),
            }
        if "method" in section:
            return {"auto": False, "method": section["method"]}
    raise ConfigError(f"cannot parse imputer section: {section!r}")


def _build_detector(config: dict):
    """Returns (detector-or-ensemble, is_ensemble, description)."""
    section = config.get("detectors", {"preset": "gradual"})
    if "single" in section:
        name = section["single"]
        det = make_detector(name, **section.get("config", {}))
        return det, False, {"single": name}
    window = int(section.get("window", ens.DEFAULT_WINDOW))
    threshold = float(section.get("threshold", 0.0))
    if "preset" in section:
        cfg = ens.EnsembleConfig.preset(section["preset"], window=window, threshold=threshold)
    elif "members" in section:
        cfg = ens.EnsembleConfig(members=tuple(section["members"]), window=window,
                                 threshold=threshold)
    else:
        raise ConfigError("detectors section needs 'preset', 'members' or 'single'")
    return ens.VotingEnsemble(cfg), True, {
        "members": list(cfg.members),
        "window": cfg.window,
        "threshold": cfg.threshold,
    }


# ---------------------------------------------------------------------------
# one experiment cell
# ---------------------------------------------------------------------------

def run_cell(config: dict, seed: int, variant_idx: int) -> dict:
    """Full pipeline for one (seed, sparsity-variant) cell."""
    dataset = config.get("dataset")
    if not dataset:
        raise ConfigError("config needs a 'dataset' section")
    stream = _dataset_stream(dataset, seed)
    variants = config.get("sparsity") or [None]
    plans = _normalize_variant(variants[variant_idx])

    matrix = SparseMatrix.from_dense(stream.features)
    for k, plan_dict in enumerate(plans):
        matrix = sg.inject_sparsity(matrix, _plan_from_dict(plan_dict, seed, k))

    verdict = None
    selection = None
    bias = None
    imputer_used = None
    if matrix.is_complete():
        features = matrix.values
    else:
        alpha = float(config.get("metrics", {}).get("alpha", 0.05))
        verdict = miss.classify_missingness(matrix, alpha=alpha)
        icfg = _imputer_config(config)
        if icfg["auto"]:
            try:
                selection = imp.select_best_imputer(
                    matrix,
                    icfg["candidates"],
                    seed=seed * 100003 + 541,
                    verdict=verdict,
                    min_complete_rows=icfg.get("min_complete_rows", 50),
                )
                method = selection.winner
            except imp.SelectionError:
                # too few complete rows: fall back to the distribution-wise
                # default, read off the sparsest feature
                worst = max(verdict.features, key=lambda fv: fv.sparsity)
                col = matrix.values[matrix.mask[:, worst.feature], worst.feature]
                fit = imp.identify_distribution(col)
                method = imp.default_method_for(fit.family, worst.mechanism,
                                                worst.sparsity)
        else:
            method = imp.ImputationMethod.parse(icfg["method"])
        completed = imp.impute(matrix, method)
        bias = miss.imputation_bias_report(matrix, completed)
        features = completed.values
        imputer_used = method.label

    imputed_stream = LabeledStream(features=features, labels=stream.labels,
                                   drift=stream.drift)
    detector, is_ensemble, det_desc = _build_detector(config)
    learner = ev.GaussianNB(n_features=imputed_stream.n_features)
    trace = ev.prequential_run(imputed_stream, learner, detector)

    metrics_cfg = config.get("metrics", {})
    adi_floor = int(metrics_cfg.get("adi_floor", ev.DEFAULT_ADI_FLOOR))
    report = ev.MetricsReport.from_trace(trace, adi_floor=adi_floor,
                                         keep_series=int(metrics_cfg.get("keep_series", 0)))

    risk = None
    if is_ensemble:
        risk_cfg = config.get("risk", {})
        votes = ens.member_vote_matrix(detector.member_drifts, len(trace),
                                       detector.config.window)
        truth_votes = ev.drift_truth_votes(trace.annotations, len(trace), adi_floor)
        risk = ens.risk_report(
            votes,
            truth_votes,
            c1=float(risk_cfg.get("c1", 1.0)),
            c2=float(risk_cfg.get("c2", 0.5)),
            t=float(risk_cfg.get("t", 0.0)),
        ).to_dict()

    return {
        "seed": seed,
        "variant": variant_idx,
        "plans": plans,
        "imputer": imputer_used,
        "detector": det_desc,
        "metrics": report.to_dict(),
        "selection": selection.to_dict() if selection else None,
        "verdict": verdict.to_dict() if verdict else None,
        "bias": bias.to_dict() if bias else None,
        "risk": risk,
    }


def _run_cell_worker(args):
    config, seed, variant_idx = args
    try:
        return (seed, variant_idx, run_cell(config, seed, variant_idx), None)
    except Exception as exc:  # isolated: a failing cell must not kill the run
        return (seed, variant_idx, None, f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# experiment matrix
# ---------------------------------------------------------------------------

_AGGREGATE_KEYS = ("final_error", "accuracy", "add", "tpr", "tpd", "drift_count",
                   "n_detections")


def _aggregate(cells: list[dict]) -> dict:
    out = {}
    for key in _AGGREGATE_KEYS:
        values = [c["metrics"][key] for c in cells
                  if c.get("metrics") and c["metrics"][key] is not None]
        if values:
            arr = np.asarray(values, dtype=float)
            out[key] = {"mean": float(arr.mean()), "std": float(arr.std()),
                        "count": len(values)}
        else:
            out[key] = {"mean": None, "std": None, "count": 0}
    return out


def run_experiment(config: dict, out_dir, jobs: int = 1) -> dict:
    """Run the seeds x sparsity-variants matrix; returns the manifest."""
    seeds = config.get("seeds")
    if not seeds:
        raise ConfigError("config needs a nonempty 'seeds' list")
    variants = config.get("sparsity") or [None]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(config, int(seed), v) for seed in seeds for v in range(len(variants))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_worker, tasks))
    else:
        results = [_run_cell_worker(t) for t in tasks]

    cells = []
    failures = []
    index = []
    for seed, variant_idx, payload, error in results:
        name = f"cell_s{seed}_v{variant_idx}.json"
        entry = {"seed": seed, "variant": variant_idx, "file": name,
                 "status": "ok" if error is None else "error"}
        if error is None:
            (out_dir / name).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            cells.append(payload)
        else:
            entry["error"] = error
            failures.append(entry)
        index.append(entry)

    manifest = {
        "config_hash": config_hash(config),
        "backend": BACKEND,
        "seeds": [int(s) for s in seeds],
        "n_variants": len(variants),
        "cells": index,
        "aggregate": _aggregate(cells),
        "failures": len(failures),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def sweep_vote_window(config: dict, windows, out_dir, jobs: int = 1) -> dict:
    """Re-run the experiment for each vote window; mark the best one.

    Objective: smallest |mean TPD - 1|, ties by mean ADD.
    """
    windows = [int(w) for w in windows]
    if len(windows) < 1:
        raise ConfigError("need at least one window value")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for w in windows:
        cfg = json.loads(json.dumps(config))  # deep copy
        det = cfg.setdefault("detectors", {"preset": "gradual"})
        if "single" in det:
            raise ConfigError("sweep requires an ensemble detector config")
        det["window"] = w
        manifest = run_experiment(cfg, out_dir / f"w{w}", jobs=jobs)
        agg = manifest["aggregate"]
        rows.append({
            "window": w,
            "tpd": agg["tpd"]["mean"],
            "add": agg["add"]["mean"],
            "tpr": agg["tpr"]["mean"],
            "drift_count": agg["drift_count"]["mean"],
            "accuracy": agg["accuracy"]["mean"],
            "failures": manifest["failures"],
        })

    def objective(row):
        tpd = row["tpd"]
        add = row["add"]
        dist = abs(tpd - 1.0) if tpd is not None else float("inf")
        return (dist, add if add is not None else float("inf"))

    best = min(rows, key=objective)
    table = {"windows": rows, "best_window": best["window"]}
    (out_dir / "sweep.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return table


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    config = load_config(args.config)
    dataset = config.get("dataset")
    if not dataset:
        raise ConfigError("config needs a 'dataset' section")
    seed = args.seed if args.seed is not None else int(config.get("seeds", [0])[0])
    stream = _dataset_stream(dataset, seed)
    out = Path(args.out or config.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    write_stream_csv(stream, out / "stream.csv")
    if stream.drift is not None:
        write_drift_sidecar(stream.drift, out / "drift.json")
    print(f"wrote {out / 'stream.csv'} ({len(stream)} instances)")
    return 0


def _cmd_sparsify(args) -> int:
    matrix, labels = ingest_csv(args.input)
    plan = sg.SparsityPlan(
        mechanism=args.mechanism,
        rate=args.rate,
        targets=tuple(int(t) for t in args.targets.split(",") if t != ""),
        driver=args.driver,
        seed=args.seed or 0,
    )
    sparse = sg.inject_sparsity(matrix, plan)
    stream = LabeledStream(features=sparse.values, labels=labels)
    write_stream_csv(stream, args.out)
    n_missing = int((~sparse.mask).sum())
    print(f"wrote {args.out} ({n_missing} missing cells)")
    return 0


def _cmd_analyze(args) -> int:
    matrix, _ = ingest_csv(args.input)
    verdict = miss.classify_missingness(matrix, alpha=args.alpha, allow_mcar=args.allow_mcar)
    payload = json.dumps(verdict.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(payload, end="")
    return 0


def _cmd_impute(args) -> int:
    matrix, labels = ingest_csv(args.input)
    selection = None
    if args.method.lower() == "auto":
        candidates = (args.candidates.split(",") if args.candidates
                      else list(DEFAULT_AUTO_CANDIDATES))
        selection = imp.select_best_imputer(matrix, candidates, seed=args.seed or 0)
        method = selection.winner
    else:
        method = imp.ImputationMethod.parse(args.method)
    completed = imp.impute(matrix, method)
    bias = miss.imputation_bias_report(matrix, completed)
    stream = LabeledStream(features=completed.values, labels=labels)
    write_stream_csv(stream, args.out)
    print(f"wrote {args.out} (method: {method.label})")
    if args.report and selection is not None:
        Path(args.report).write_text(
            json.dumps(selection.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        print(f"wrote {args.report}")
    if args.bias:
        Path(args.bias).write_text(
            json.dumps(bias.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {args.bias}")
    return 0


def _read_value_column(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    start = 0
    try:
        float(lines[0].split(",")[0])
    except ValueError:
        start = 1  # header row
    try:
        return np.array([float(ln.split(",")[0]) for ln in lines[start:]])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from None


def _detector_set(args):
    if args.preset:
        return [(name, make_detector(name)) for name in ens.PRESETS[args.preset]]
    names = [n.strip() for n in (args.detectors or "all").split(",")]
    if names == ["all"]:
        names = list(DETECTOR_NAMES)
    return [(name, make_detector(name)) for name in names]


def _cmd_detect(args) -> int:
    values = _read_value_column(args.input)
    detectors = _detector_set(args)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,detector,signal\n")
        for name, det in detectors:
            for i, v in enumerate(values):
                sig = int(det.update(float(v)))
                if sig != Signal.IN_CONTROL:
                    fh.write(f"{i},{name},{sig}\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    stream = read_stream_csv(args.input, args.sidecar)
    section = {"preset": args.preset} if args.preset else None
    if args.detectors:
        names = [n.strip() for n in args.detectors.split(",")]
        section = {"single": names[0]} if len(names) == 1 else {"members": names}
    config = {"detectors": section or {"preset": "gradual"}}
    if args.window:
        config["detectors"]["window"] = args.window
    detector, is_ensemble, det_desc = _build_detector(config)
    learner = ev.GaussianNB(n_features=stream.n_features)
    trace = ev.prequential_run(stream, learner, detector)
    report = ev.MetricsReport.from_trace(trace, adi_floor=args.adi_floor)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"detector": det_desc, "metrics": report.to_dict()}
    if is_ensemble:
        votes = ens.member_vote_matrix(detector.member_drifts, len(trace),
                                       detector.config.window)
        truth_votes = ev.drift_truth_votes(trace.annotations, len(trace), args.adi_floor)
        payload["risk"] = ens.risk_report(votes, truth_votes).to_dict()
        detector.write_event_log(out / "events.csv")
    trace.write_csv(out / "trace.csv")
    (out / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out / 'metrics.json'} (accuracy {report.accuracy:.4f})")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    out = args.out or os.environ.get("SPARSEDRIFT_OUT") or config.get("out", "results")
    jobs = args.jobs or int(os.environ.get("SPARSEDRIFT_JOBS", "1"))
    if args.seed is not None:
        config = dict(config, seeds=[args.seed])
    manifest = run_experiment(config, out, jobs=jobs)
    agg = manifest["aggregate"]
    print(f"{len(manifest['cells'])} cells -> {out} "
          f"(accuracy {agg['accuracy']['mean']}, tpd {agg['tpd']['mean']}, "
          f"failures {manifest['failures']})")
    return 4 if manifest["failures"] else 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    out = args.out or os.environ.get("SPARSEDRIFT_OUT") or config.get("out", "results")
    jobs = args.jobs or int(os.environ.get("SPARSEDRIFT_JOBS", "1"))
    windows = [int(w) for w in args.windows.split(",")]
    table = sweep_vote_window(config, windows, out, jobs=jobs)
    print(f"best window: {table['best_window']} (of {windows})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsedrift",
        description="Concept drift detection on sparse streams: generate, "
                    "sparsify, analyze, impute, detect, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a stream CSV (+ drift sidecar) from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("sparsify", help="inject missing values into a stream CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mechanism", required=True, choices=["MCAR", "MAR", "MNAR"])
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--targets", required=True, help="comma-separated feature indices")
    p.add_argument("--driver", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sparsify)

    p = sub.add_parser("analyze", help="classify per-feature missingness")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--allow-mcar", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("impute", help="fill missing values (fixed method or auto-select)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="auto")
    p.add_argument("--candidates", help="comma-separated candidates for auto")
    p.add_argument("--report", help="write the selection report JSON here")
    p.add_argument("--bias", help="write the imputation bias report JSON here")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("detect", help="run detectors over a scalar stream CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detectors", help="comma-separated names, or 'all'")
    p.add_argument("--preset", choices=sorted(ens.PRESETS))
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="prequential evaluation of a complete stream CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--sidecar", help="drift annotation JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--detectors", help="one name = single detector; several = ensemble")
    p.add_argument("--preset", choices=sorted(ens.PRESETS))
    p.add_argument("--window", type=int)
    p.add_argument("--adi-floor", type=int, default=ev.DEFAULT_ADI_FLOOR)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="run the full experiment matrix from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int, help="run a single seed instead of the config list")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="sweep the ensemble vote window")
    p.add_argument("--config", required=True)
    p.add_argument("--windows", required=True, help="comma-separated window sizes")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SparseDriftError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
