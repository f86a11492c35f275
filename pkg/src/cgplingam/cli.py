"""Command-line front end.

Subcommands:
  generate      draw a synthetic problem and write its dataset bundle
  fit           run the estimator on a series CSV, write a report JSON
  select-order  score candidate lag orders on a series, write the table
  benchmark     run a Monte-Carlo sweep from a spec JSON, write result tables
  metrics       score a report against a dataset bundle

Exit codes: 0 success, 2 invalid input (bad flags, malformed CSV/JSON,
out-of-range config values), 3 numerical failure inside the estimator.

All file outputs land under ``--out`` together with a ``manifest.json``
listing names, sizes, and sha256 hashes. Outputs are byte-deterministic
for a fixed config and seed, independent of ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (
    AGGREGATE_COLUMNS,
    RESULT_COLUMNS,
    ExperimentSpec,
    OrderSelectionSpec,
    run_experiment,
    run_order_selection,
    rows_to_csv,
    split_series,
    write_manifest,
    write_outputs,
)
from .exceptions import CgpLingamError
from .metrics import compute_metrics
from .pipeline import FitConfig, fit, load_report, save_report, select_order
from .synth import GenConfig, load_bundle, make_ground_truth, save_bundle

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

HISTOGRAM_COLUMNS = ("K", "selected_m", "count", "m_true")
GROUPED_COLUMNS = ("K", "selected_m", "n", "mean_rmse_a", "median_rmse_a")
ORDER_TABLE_COLUMNS = ("order", "n_params", "naic", "jittered", "selected")

GENERATE_DEFAULTS = {"n_nodes": 5, "n_samples": 500, "order": 2, "seed": 0}


class CliError(Exception):
    """Input problem rendered as a message plus a process exit code."""

    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"{path} line {exc.lineno} column {exc.colno}: {exc.msg}"
        )
    if not isinstance(raw, dict):
        raise CliError(f"{path}: top level must be a JSON object")
    return raw


def _check_schema(raw: dict, path: str) -> dict:
    raw = dict(raw)
    schema = raw.pop("schema", 1)
    if schema != 1:
        raise CliError(f"{path}: unsupported schema {schema!r}")
    return raw


def read_series_csv(path: str) -> np.ndarray:
    """Parse a time-series CSV (rows = time, header = node names) into an
    N x K array, reporting the offending line and field on bad input."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    lines = text.splitlines()
    if len(lines) < 2:
        raise CliError(f"{path}: need a header row and at least one data row")
    n_fields = len(lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != n_fields:
            raise CliError(
                f"{path} line {lineno}: expected {n_fields} fields, "
                f"got {len(fields)}"
            )
        row = []
        for col, text_value in enumerate(fields, start=1):
            try:
                row.append(float(text_value))
            except ValueError:
                raise CliError(
                    f"{path} line {lineno}, field {col}: "
                    f"not a number: {text_value!r}"
                ) from None
        rows.append(row)
    return np.array(rows).T


def _parse_orders(text: str) -> list[int]:
    """Candidate orders from '2:6' (inclusive span) or '2,3,5'."""
    try:
        if ":" in text:
            lo_text, hi_text = text.split(":")
            lo, hi = int(lo_text), int(hi_text)
            if lo > hi:
                raise CliError(f"empty order span {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise CliError(
            f"orders must look like '2:6' or '2,3,5', got {text!r}"
        ) from None


def _build_config(cls, raw: dict, path: str, overrides: dict):
    merged = dict(raw)
    merged.update(overrides)
    try:
        return cls(**merged)
    except TypeError as exc:
        raise CliError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _table_json(columns, rows: list[dict]) -> str:
    payload = {
        "schema": 1,
        "columns": list(columns),
        "rows": [[row.get(col, "") for col in columns] for row in rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _render_tables(tables: dict, fmt: str) -> dict[str, str]:
    """tables maps basename -> (columns, rows); renders to csv or json."""
    out = {}
    for basename, (columns, rows) in tables.items():
        if fmt == "json":
            out[f"{basename}.json"] = _table_json(columns, rows)
        else:
            out[f"{basename}.csv"] = rows_to_csv(rows, columns)
    return out


def cmd_generate(args) -> int:
    raw = dict(GENERATE_DEFAULTS)
    if args.config:
        loaded = _check_schema(_load_json(args.config), args.config)
        raw.update(loaded)
    if args.seed is not None:
        raw["seed"] = args.seed
    if "edge_weight_range" in raw:
        raw["edge_weight_range"] = tuple(raw["edge_weight_range"])
    cfg = _build_config(GenConfig, raw, args.config or "generate defaults", {})
    truth = make_ground_truth(cfg)
    paths = save_bundle(truth, args.out)
    write_manifest(args.out, [p.name for p in paths.values()])
    print(f"wrote bundle to {args.out} (seed={cfg.seed}, "
          f"N={cfg.n_nodes}, K={cfg.n_samples}, M={cfg.order})")
    return EXIT_OK


def _fit_config_from_args(args) -> FitConfig:
    raw = {}
    source = "fit defaults"
    if args.config:
        raw = _check_schema(_load_json(args.config), args.config)
        source = args.config
    overrides = {}
    if args.order is not None:
        overrides["order"] = args.order
    if args.seed is not None:
        overrides["seed"] = args.seed
    if "order" not in raw and "order" not in overrides:
        raise CliError("an order is required: pass --order or put it in --config")
    return _build_config(FitConfig, raw, source, overrides)


def cmd_fit(args) -> int:
    cfg = _fit_config_from_args(args)
    x = read_series_csv(args.series)
    if args.split == "train":
        x = split_series(x)[0]
    report = fit(x, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_report(report, out / "report.json")
    write_manifest(out, ["report.json"])
    print(f"fit ok: order={cfg.order} n_params={report.n_params} "
          f"naic={report.naic!r}")
    return EXIT_OK


def cmd_select_order(args) -> int:
    candidates = _parse_orders(args.orders)
    raw = {}
    source = "select-order defaults"
    if args.config:
        raw = _check_schema(_load_json(args.config), args.config)
        source = args.config
    raw.setdefault("order", candidates[0])
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = _build_config(FitConfig, raw, source, overrides)
    x = read_series_csv(args.series)
    best, table = select_order(x, cfg, candidates)
    for row in table:
        row["selected"] = row["order"] == best
    tables = _render_tables(
        {"order_table": (ORDER_TABLE_COLUMNS, table)}, args.format
    )
    write_outputs(args.out, tables)
    print(f"selected order: {best}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    raw = _check_schema(_load_json(args.config), args.config)
    kind = raw.pop("kind", "sweep")
    if args.seed is not None:
        raw["seed"] = args.seed
    if kind == "sweep":
        try:
            spec = ExperimentSpec.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"{args.config}: {exc}") from None
        rows, agg, baseline_rows, baseline_agg = run_experiment(
            spec, threads=args.threads
        )
        tables = {
            "results": (RESULT_COLUMNS, rows),
            "aggregate": (AGGREGATE_COLUMNS, agg),
        }
        if spec.include_baseline:
            tables["baseline_results"] = (RESULT_COLUMNS, baseline_rows)
            tables["baseline_aggregate"] = (AGGREGATE_COLUMNS, baseline_agg)
    elif kind == "order":
        try:
            spec = OrderSelectionSpec.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"{args.config}: {exc}") from None
        histogram, grouped = run_order_selection(spec)
        tables = {
            "histogram": (HISTOGRAM_COLUMNS, histogram),
            "grouped_rmse": (GROUPED_COLUMNS, grouped),
        }
    else:
        raise CliError(
            f"{args.config}: kind must be 'sweep' or 'order', got {kind!r}"
        )
    rendered = _render_tables(tables, args.format)
    info = write_outputs(args.out, rendered)
    print(f"wrote {len(info['files'])} tables to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        truth = load_bundle(args.bundle)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load bundle {args.bundle}: {exc}") from None
    try:
        report = load_report(args.report)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load report {args.report}: {exc}") from None
    x = truth.series.data
    test = split_series(x)[2] if args.split == "test" else x
    scores = compute_metrics(truth, report, test)
    payload = {"schema": 1}
    payload.update(scores.as_dict())
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text)
        write_manifest(out, ["metrics.json"])
        print(f"wrote metrics to {out / 'metrics.json'}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgplingam",
        description="Causal-graph recovery from multivariate time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset bundle")
    p.add_argument("--config", help="GenConfig JSON (schema 1)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit the estimator on a series CSV")
    p.add_argument("--series", required=True, help="time-series CSV")
    p.add_argument("--config", help="FitConfig JSON (schema 1)")
    p.add_argument("--order", type=int, help="lag order (overrides config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--split", choices=("all", "train"), default="all",
                   help="fit on the whole series or its leading 60%% block")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-order",
                       help="score candidate lag orders on a series")
    p.add_argument("--series", required=True, help="time-series CSV")
    p.add_argument("--orders", required=True,
                   help="candidates, '2:6' or '2,3,5'")
    p.add_argument("--config", help="FitConfig JSON template (schema 1)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_select_order)

    p = sub.add_parser("benchmark", help="run a Monte-Carlo sweep")
    p.add_argument("--config", required=True,
                   help="sweep spec JSON (schema 1; kind: sweep|order)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes across cells (results unchanged)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("metrics", help="score a report against a bundle")
    p.add_argument("--bundle", required=True, help="dataset bundle directory")
    p.add_argument("--report", required=True, help="report JSON from fit")
    p.add_argument("--split", choices=("test", "all"), default="test",
                   help="score the trailing 20%% block or the whole series")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CgpLingamError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
