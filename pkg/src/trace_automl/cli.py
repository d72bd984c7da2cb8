"""Command-line entry point: ``trace-automl <command> ...``.

Training flow::

    generate -> featurize -> evaluate -> build-metadb -> train -> importance

Recommendation flow::

    recommend LOG --model model.json

Every artifact carries a schema_version header and is checked on read. Path
options fall back to environment variables (``TRACE_AUTOML_FEATURES``,
``TRACE_AUTOML_METRICS``, ``TRACE_AUTOML_METADB``, ``TRACE_AUTOML_MODEL``).

Exit codes: 0 success, 1 runtime failure, 2 configuration or schema error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, SchemaMismatchError
from .event_log import generate_corpus, read_log, write_log
from .featurization import extract_all, read_feature_csv, write_feature_csv
from .learner import (
    DEFAULT_GRID,
    OUTPUTS,
    SMALL_GRID,
    MultiOutputModel,
    permutation_importance,
    split,
    train_and_report,
)
from .metadb import build_metadb, evaluate_grid, rank_tables, read_metadb_csv, write_metadb_csv
from .ranking import read_metrics_csv, write_metrics_csv

logger = logging.getLogger("trace_automl")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
ENV_PATHS = {
    "features": "TRACE_AUTOML_FEATURES",
    "metrics": "TRACE_AUTOML_METRICS",
    "metadb": "TRACE_AUTOML_METADB",
    "model": "TRACE_AUTOML_MODEL",
}
GRIDS = {"default": DEFAULT_GRID, "small": SMALL_GRID}
LOG_SUFFIXES = (".xes", ".csv")


# ----------------------------------------------------------------------------
# Path handling
# ----------------------------------------------------------------------------

def _input_path(value, what: str) -> Path:
    if not value:
        raise ConfigError(f"no {what} path given (option or ${ENV_PATHS.get(what, '')})")
    path = Path(value)
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _output_path(value, what: str) -> Path:
    if not value:
        raise ConfigError(f"no output path given for {what}")
    path = Path(value)
    if path.is_dir():
        raise ConfigError(f"{what} output {path} is a directory")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _log_paths(items) -> list[Path]:
    """Expand files and directories into a sorted list of log files."""
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            found = sorted(q for q in p.iterdir() if q.suffix.lower() in LOG_SUFFIXES)
            if not found:
                raise ConfigError(f"no .xes or .csv logs in {p}")
            paths += found
        elif p.is_file():
            paths.append(p)
        else:
            raise ConfigError(f"log path not found: {p}")
    names = [p.stem for p in paths]
    if len(set(names)) != len(names):
        raise ConfigError("log file names must be unique (they name the logs)")
    return paths


def _read_text(path: Path):
    return open(path, encoding="utf-8", newline="")


def _write_text(path: Path):
    return open(path, "w", encoding="utf-8", newline="")


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def cmd_generate(args) -> int:
    """Corpus spec: ``{"seed", "n_logs", "regimes": {...}}``, or a flat generator
    spec plus ``n_logs`` which is treated as a single regime."""
    try:
        spec = json.loads(_input_path(args.spec, "spec").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(spec, dict):
        raise ConfigError("spec must be a JSON object")
    if "regimes" not in spec:
        params = {k: v for k, v in spec.items() if k not in ("seed", "n_logs", "name")}
        spec = {"seed": spec.get("seed"), "n_logs": spec.get("n_logs", 1),
                "regimes": {spec.get("name", "synthetic"): params}}
    if args.seed is not None:
        spec["seed"] = args.seed
    if spec.get("seed") is None:
        raise ConfigError("a seed is required (in the generator spec file or via --seed)")
    logs = generate_corpus(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for log in logs:
        write_log(log, out / f"{log.name}.{args.format}")
    print(f"wrote {len(logs)} logs to {out}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    paths = _log_paths(args.logs)
    out = _output_path(args.out or os.environ.get(ENV_PATHS["features"]), "features")
    rows = []
    for p in paths:
        log = read_log(p)
        rows.append((log.name, extract_all(log)))
        logger.info("featurized %s", log.name)
    with _write_text(out) as fh:
        write_feature_csv(rows, fh)
    print(f"wrote {len(rows)} feature vectors to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    paths = _log_paths(args.logs)
    out = _output_path(args.out or os.environ.get(ENV_PATHS["metrics"]), "metrics")
    metrics = {}
    for p in paths:
        log = read_log(p)
        metrics[log.name] = [tuple(r) for r in evaluate_grid(
            log, args.seed, args.threads, args.timing_repeats)]
        logger.info("evaluated %s (%d pipelines)", log.name, len(metrics[log.name]))
    with _write_text(out) as fh:
        write_metrics_csv(rank_tables(metrics), fh)
    print(f"wrote metrics for {len(metrics)} logs to {out}")
    return EXIT_OK


def cmd_build_metadb(args) -> int:
    feats = _input_path(args.features or os.environ.get(ENV_PATHS["features"]), "features")
    mets = _input_path(args.metrics or os.environ.get(ENV_PATHS["metrics"]), "metrics")
    out = _output_path(args.out or os.environ.get(ENV_PATHS["metadb"]), "metadb")
    with _read_text(feats) as fh:
        features = read_feature_csv(fh)
    with _read_text(mets) as fh:
        metrics = read_metrics_csv(fh)
    db = build_metadb(features, metrics, args.minority_threshold)
    with _write_text(out) as fh:
        write_metadb_csv(db, fh)
    print(f"wrote {len(db)} meta-instances ({len(db.pair_counts())} target pairs) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    src = _input_path(args.metadb or os.environ.get(ENV_PATHS["metadb"]), "metadb")
    out = _output_path(args.out or os.environ.get(ENV_PATHS["model"]), "model")
    base = args.report or str(out.with_suffix("")) + ".report"
    txt = _output_path(base + ".txt", "report")
    csv_path = _output_path(base + ".csv", "report")
    with _read_text(src) as fh:
        db = read_metadb_csv(fh)
    run = train_and_report(db, GRIDS[args.grid], args.seed, args.folds)
    run.model.meta["grid"] = args.grid
    with _write_text(out) as fh:
        run.model.save(fh)
    with _write_text(txt) as fh:
        fh.write(run.report.to_text())
    with _write_text(csv_path) as fh:
        run.report.to_csv(fh)
    print(run.report.to_text(), end="")
    print(f"model written to {out}; report to {txt}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    model_path = _input_path(args.model or os.environ.get(ENV_PATHS["model"]), "model")
    with _read_text(model_path) as fh:
        model = MultiOutputModel.load(fh)
    log = read_log(_input_path(args.log, "log"))
    x = model.check_features(extract_all(log).to_array())
    chosen, conf = {}, {}
    for out in OUTPUTS:
        br = model.models[out]
        labels, scores = br.predict_with_scores(x)
        chosen[out] = str(labels[0])
        conf[out] = float(scores[0, br.labels.index(chosen[out])])
    print(f"{chosen['encoding']}_{chosen['clustering']}")
    for out in OUTPUTS:
        print(f"{out}\t{chosen[out]}\tconfidence={conf[out]:.4f}")
    return EXIT_OK


def cmd_importance(args) -> int:
    model_path = _input_path(args.model or os.environ.get(ENV_PATHS["model"]), "model")
    src = _input_path(args.metadb or os.environ.get(ENV_PATHS["metadb"]), "metadb")
    out = _output_path(args.out, "importance")
    with _read_text(model_path) as fh:
        model = MultiOutputModel.load(fh)
    with _read_text(src) as fh:
        db = read_metadb_csv(fh)
    seed = model.meta.get("seed", 0) if args.seed is None else args.seed
    if args.on == "test":
        db = split(db, tuple(model.meta.get("split", (0.8, 0.1, 0.1))), seed)[2]
    imp = permutation_importance(model, db, args.repeats, seed)
    with _write_text(out) as fh:
        imp.to_csv(fh)
    print(f"{imp.method}; top features:")
    for name, value in imp.top(args.top):
        print(f"  {name}\t{value:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace-automl",
                                     description="Recommend trace clustering pipelines for event logs.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic logs from a JSON spec")
    p.add_argument("spec")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "xes"), default="csv")
    p.add_argument("--seed", type=int, help="overrides the seed in the generator spec file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", help="meta-feature CSV for a set of logs")
    p.add_argument("logs", nargs="+", help="log files or directories")
    p.add_argument("--out")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("evaluate", help="score all 112 pipelines on every log")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing-repeats", type=int, default=3)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-metadb", help="join features with per-log winners")
    p.add_argument("--features")
    p.add_argument("--metrics")
    p.add_argument("--out")
    p.add_argument("--minority-threshold", type=int, default=5)
    p.set_defaults(func=cmd_build_metadb)

    p = sub.add_parser("train", help="tune and fit the meta-model, write model and report")
    p.add_argument("--metadb")
    p.add_argument("--out", help="model JSON path")
    p.add_argument("--report", help="report path without suffix (.txt and .csv are written)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", choices=sorted(GRIDS), default="default")
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="recommend a pipeline for one log")
    p.add_argument("log")
    p.add_argument("--model")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("importance", help="permutation importance of the meta-features")
    p.add_argument("--model")
    p.add_argument("--metadb")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="defaults to the training seed")
    p.add_argument("--on", choices=("test", "all"), default="test")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    for name in ("threads", "folds", "timing_repeats", "repeats", "minority_threshold"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
            print(f"error: --{name.replace('_', '-')} must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, SchemaMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
