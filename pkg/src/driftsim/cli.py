"""Command-line entry point: dataset generation, pipeline runs, parameter
sweeps, and exhaustive verification of the correlation-shift bound.

Exit codes: 0 success, 1 verified property violation, 2 usage or config
error, 3 numeric failure (non-finite training loss). All file outputs are
written atomically (temp file + rename). The default output directory is
"." unless the DRIFTSIM_OUT environment variable overrides it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from .autodiff import NonFiniteLossError
from .bounds import check_moment_deltas, random_distribution_pair, verify_bound
from .correlation import pearson_matrix
from .datasets import (CLASSIFICATION, REGRESSION, CsvSchema, load_csv_stream,
                       make_moons_stream, save_domain_csv,
                       fit_apply_normalization)
from .harness import (METHODS, DownstreamConfig, ExperimentConfig,
                      _assemble_training_set, run_experiment, sweep)
from .predictor import PredictorConfig
from .simulator import SimulatorConfig

__all__ = ["main", "load_run_config"]

GENERATIVE = ("coda", "coda-without-C", "prelim")


# -- atomic file output ------------------------------------------------------

def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(flag_value: str | None) -> str:
    return flag_value or os.environ.get("DRIFTSIM_OUT", ".")


# -- config file -------------------------------------------------------------

class ConfigError(ValueError):
    """Malformed run-config JSON (usage error, exit 2)."""


def _take(block: dict, context: str, allowed: dict) -> dict:
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}; "
                          f"expected a subset of {sorted(allowed)}")
    return {**allowed, **block}


def _dataclass_overrides(block: dict, context: str, cls):
    try:
        return cls(**_take(block, context, asdict(cls())))
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _build_stream(block: dict):
    kind = block.get("kind")
    if kind == "moons":
        fields = _take(block, "dataset", {
            "kind": "moons", "domains": 10, "n_per_domain": 200,
            "noise_std": 0.15, "seed": 0})
        return make_moons_stream(domains=fields["domains"],
                                 n_per_domain=fields["n_per_domain"],
                                 noise_std=fields["noise_std"],
                                 seed=fields["seed"])
    if kind == "csv":
        fields = _take(block, "dataset", {
            "kind": "csv", "path": None, "domain_col": "t", "label_col": "y",
            "feature_cols": [], "task": CLASSIFICATION})
        if not fields["path"]:
            raise ConfigError("dataset: csv kind requires a path")
        if fields["task"] not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"dataset: unknown task {fields['task']!r}")
        schema = CsvSchema(domain_col=fields["domain_col"],
                           label_col=fields["label_col"],
                           feature_cols=tuple(fields["feature_cols"]),
                           task=fields["task"])
        return load_csv_stream(fields["path"], schema)
    raise ConfigError(f"dataset: unknown kind {kind!r}; expected moons or csv")


def load_run_config(path: str):
    """Parse a run-config JSON file into (stream, methods, ExperimentConfig).

    Every omitted field falls back to the pipeline defaults; unknown keys at
    any level are rejected rather than silently ignored.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    top = _take(raw, path, {
        "dataset": {"kind": "moons"}, "methods": ["coda"],
        "seeds": [0, 1, 2, 3, 4], "sample_rate": 1.0,
        "normalization": "minmax", "output_dir": None,
        "predictor": {}, "simulator": {}, "downstream": {}})
    for method in top["methods"]:
        if method not in METHODS:
            raise ConfigError(f"methods: unknown method {method!r}; "
                              f"expected a subset of {list(METHODS)}")
    if not top["methods"]:
        raise ConfigError("methods: need at least one")
    stream = _build_stream(dict(top["dataset"]))
    try:
        config = ExperimentConfig(
            predictor=_dataclass_overrides(top["predictor"], "predictor",
                                           PredictorConfig),
            simulator=_dataclass_overrides(top["simulator"], "simulator",
                                           SimulatorConfig),
            downstream=_dataclass_overrides(top["downstream"], "downstream",
                                            DownstreamConfig),
            seeds=tuple(top["seeds"]), sample_rate=top["sample_rate"],
            normalization=top["normalization"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return stream, list(top["methods"]), config, top["output_dir"]


# -- subcommands -------------------------------------------------------------

def cmd_gen_moons(args) -> int:
    out = _out_dir(args.out)
    stream = make_moons_stream(domains=args.domains, n_per_domain=args.n,
                               noise_std=args.noise, seed=args.seed)
    os.makedirs(out, exist_ok=True)
    files = []
    for dom in (*stream.sources, stream.target):
        name = f"moons_domain_{dom.domain_index:02d}.csv"
        tmp_target = os.path.join(out, name)
        fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
        os.close(fd)
        save_domain_csv(dom, tmp)
        os.replace(tmp, tmp_target)
        files.append(name)
    _write_json(os.path.join(out, "moons_manifest.json"), {
        "domains": args.domains, "n_per_domain": args.n, "noise_std": args.noise,
        "seed": args.seed, "files": files})
    print(f"wrote {len(files)} domain files to {out}")
    return 0


def _dump_artifacts(stream, method: str, config: ExperimentConfig,
                    out: str) -> list:
    """Correlation CSV + generated-data CSV for the first configured seed."""
    seed = config.seeds[0]
    normalized, stats = fit_apply_normalization(stream, config.normalization)
    written = []
    if method == "coda":
        lines = ["matrix,row,col,value"]
        mats = [(f"C{s.domain_index}", pearson_matrix(s))
                for s in normalized.sources]
        train_set, extra = _assemble_training_set(normalized, method, config, seed)
        mats.append(("predicted", extra["predicted_corr"]))
        for name, mat in mats:
            m = mat.entries
            for i in range(mat.dim):
                for j in range(mat.dim):
                    lines.append(f"{name},{i},{j},{m[i, j]!r}")
        corr_path = os.path.join(out, "correlations.csv")
        _write_atomic(corr_path, "\n".join(lines) + "\n")
        written.append(corr_path)
    elif method in GENERATIVE:
        train_set, _ = _assemble_training_set(normalized, method, config, seed)
    else:
        return written
    features = stats.invert_features(train_set.features)
    labels = (train_set.labels if train_set.task == CLASSIFICATION
              else stats.invert_label(train_set.labels))
    names = tuple(stream.sources[0].feature_names[i] for i in stats.kept)
    restored = replace(train_set, features=features, labels=labels,
                       feature_names=names)
    gen_path = os.path.join(out, f"generated_{method}_seed{seed}.csv")
    fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
    os.close(fd)
    save_domain_csv(restored, tmp)
    os.replace(tmp, gen_path)
    written.append(gen_path)
    return written


def cmd_run(args) -> int:
    stream, methods, config, cfg_out = load_run_config(args.config)
    out = _out_dir(args.out or cfg_out)
    os.makedirs(out, exist_ok=True)
    reports = []
    for method in methods:
        report = run_experiment(stream, method, config)
        reports.append(report.to_dict())
        print(f"{method:16s} {report.metric:12s} "
              f"mean={report.mean:8.3f}  std={report.std:7.3f}  "
              f"seeds={[round(v, 3) for v in report.seed_values]}")
    artifacts = []
    if args.artifacts:
        for method in methods:
            artifacts += _dump_artifacts(stream, method, config, out)
    report_path = os.path.join(out, "report.json")
    _write_json(report_path, {"reports": reports, "artifacts": artifacts})
    print(f"report written to {report_path}")
    return 0


def cmd_verify_bound(args) -> int:
    if args.pairs < 1:
        raise ConfigError("--pairs must be at least 1")

    def one(index: int):
        rng = np.random.default_rng([args.seed, index])
        p, q = random_distribution_pair(rng, max_dim=args.dims,
                                        max_support=args.max_support)
        bound = verify_bound(p, q)
        moments = check_moment_deltas(p, q)
        return bound, moments

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(one, range(args.pairs)))
    rows = []
    bad = 0
    for bound, moments in results:
        ok = (not bound.violated) and moments.ok
        bad += 0 if ok else 1
        rows.append({**bound.to_dict(), "moment_deltas_ok": bool(moments.ok)})
    if args.out:
        _write_json(args.out, rows)
    print(f"{args.pairs} pairs checked, {bad} violations")
    return 1 if bad else 0


def cmd_sweep(args) -> int:
    stream, methods, config, cfg_out = load_run_config(args.config)
    out = _out_dir(args.out or cfg_out)
    os.makedirs(out, exist_ok=True)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, "
                          f"got {args.values!r}") from None
    if not values:
        raise ConfigError("--values: need at least one value")
    method = methods[0]

    def one(value):
        return sweep(stream, args.param, [value], config, method=method,
                     validate=args.validate)[0]

    try:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            points = list(pool.map(one, values))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    header = "value,mean,std" + (",val_mean,val_std" if args.validate else "")
    lines = [header]
    rows = []
    for point in points:
        row = [point.value, point.test.mean, point.test.std]
        if args.validate:
            row += [point.validation.mean, point.validation.std]
        lines.append(",".join(repr(float(v)) for v in row))
        rows.append({"value": point.value, "test": point.test.to_dict(),
                     "validation": point.validation.to_dict()
                     if point.validation else None})
        print(f"{args.param}={point.value:g}: mean={point.test.mean:.3f} "
              f"std={point.test.std:.3f}")
    csv_path = os.path.join(out, f"sweep_{args.param}.csv")
    _write_atomic(csv_path, "\n".join(lines) + "\n")
    _write_json(os.path.join(out, f"sweep_{args.param}.json"), rows)
    print(f"curve written to {csv_path}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftsim",
        description="Correlation-guided simulation of future tabular domains")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-moons", help="write the rotating-moons benchmark "
                                           "as per-domain CSV files")
    gen.add_argument("--domains", type=int, default=10)
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--noise", type=float, default=0.15)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=None)
    gen.set_defaults(func=cmd_gen_moons)

    run = sub.add_parser("run", help="run methods from a JSON config and "
                                     "write an experiment report")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)
    run.add_argument("--artifacts", action="store_true",
                     help="also write correlation and generated-data CSVs "
                          "for the first seed")
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify-bound", help="stress the correlation-shift "
                                              "bound on random finite supports")
    ver.add_argument("--pairs", type=int, default=1000)
    ver.add_argument("--max-support", type=int, default=16)
    ver.add_argument("--dims", type=int, default=4)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", default=None)
    ver.add_argument("--threads", type=int, default=1)
    ver.set_defaults(func=cmd_verify_bound)

    swp = sub.add_parser("sweep", help="one experiment per parameter value, "
                                       "plus a plot-ready CSV curve")
    swp.add_argument("--config", required=True)
    swp.add_argument("--param", choices=("lambda_c", "sample_rate"),
                     required=True)
    swp.add_argument("--values", required=True,
                     help="comma-separated numbers, e.g. 0.1,1,5,20")
    swp.add_argument("--validate", action="store_true",
                     help="also score against the last source domain held "
                          "out as a pseudo-target")
    swp.add_argument("--out", default=None)
    swp.add_argument("--threads", type=int, default=1)
    swp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteLossError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
