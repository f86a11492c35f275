"""Monte-Carlo experiment harness.

Each (K, M, replicate) cell draws its own ground truth from a seed stream
derived with ``numpy.random.SeedSequence([master, K, M, rep])``, so results
are reproducible cell by cell and independent of scheduling. A cell splits
its series into contiguous train/validation/test blocks (60/20/20),
grid-searches the penalty weights on one-step-ahead validation error,
refits on the training block with the winner, and scores the test block.

Failures inside a cell become rows tagged with the exception class; the
sweep itself never aborts. Output tables are sorted and floats are written
with ``repr`` so identical specs give identical bytes regardless of the
worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .exceptions import CgpLingamError
from .graphs import PolyCoeffs
from .metrics import compute_metrics, rmse_a, shd, snr_a
from .pipeline import (
    FitConfig,
    fit,
    select_order,
    stage1_fit,
    stage2_fit,
    stage3_fit,
    var_lingam_baseline,
)
from .synth import GenConfig, make_ground_truth

DEFAULT_LAMBDA1_GRID = (0.01, 0.1, 1.0)
DEFAULT_LAMBDA2_GRID = (0.001, 0.01, 0.1)
DEFAULT_LAMBDA3_GRID = (0.1, 1.0, 10.0)

RESULT_COLUMNS = (
    "K", "M", "seed", "lambda1", "lambda2", "lambda3",
    "snr_a_db", "err_c", "err_eps", "err_eps_causal", "shd", "rmse_a",
    "fit_seconds", "status",
)
AGGREGATE_COLUMNS = (
    "K", "M", "n_ok", "stat",
    "snr_a_db", "err_c", "err_eps", "err_eps_causal", "shd", "rmse_a",
)
METRIC_FIELDS = ("snr_a_db", "err_c", "err_eps", "err_eps_causal", "shd", "rmse_a")


def _checked_template(raw: dict, name: str, forbidden: tuple) -> dict:
    template = dict(raw)
    bad = sorted(set(template) & set(forbidden))
    if bad:
        raise ValueError(
            f"{name} template must not set {bad}; the harness derives them per cell"
        )
    return template


def _probe_templates(gen: dict, fit: dict, k: int, m: int) -> None:
    """Instantiate both configs once so missing or unknown template keys
    fail at spec construction instead of inside a worker."""
    try:
        GenConfig(n_samples=k, order=m, seed=0, **gen)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"gen template: {exc}") from None
    try:
        FitConfig(order=m, seed=0, **fit)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"fit template: {exc}") from None


@dataclass(frozen=True)
class ExperimentSpec:
    """Sweep axes, seeds per cell, templates, and penalty grids."""

    k_values: tuple
    m_values: tuple
    n_seeds: int
    seed: int = 0
    gen: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    lambda1_grid: tuple = DEFAULT_LAMBDA1_GRID
    lambda2_grid: tuple = DEFAULT_LAMBDA2_GRID
    lambda3_grid: tuple = DEFAULT_LAMBDA3_GRID
    include_baseline: bool = False
    collect_timings: bool = False

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        for name in ("lambda1_grid", "lambda2_grid", "lambda3_grid"):
            grid = tuple(sorted(float(v) for v in getattr(self, name)))
            if not grid:
                raise ValueError(f"{name} is empty")
            object.__setattr__(self, name, grid)
        if not self.k_values or not self.m_values:
            raise ValueError("sweep axes must be nonempty")
        if self.n_seeds < 1:
            raise ValueError("need at least one seed per cell")
        object.__setattr__(self, "gen", _checked_template(
            self.gen, "gen", forbidden=("n_samples", "order", "seed")
        ))
        object.__setattr__(self, "fit", _checked_template(
            self.fit, "fit",
            forbidden=("order", "lambda1", "lambda2", "lambda3", "seed"),
        ))
        _probe_templates(
            self.gen, self.fit, max(self.k_values), max(self.m_values)
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        raw = dict(raw)
        schema = raw.pop("schema", 1)
        if schema != 1:
            raise ValueError(f"unsupported spec schema {schema}")
        for name in ("k_values", "m_values", "lambda1_grid", "lambda2_grid",
                     "lambda3_grid"):
            if name in raw:
                raw[name] = tuple(raw[name])
        return cls(**raw)


@dataclass(frozen=True)
class OrderSelectionSpec:
    """Axes for the order-recovery experiment: one histogram per K."""

    k_values: tuple
    m_true: int
    m_candidates: tuple
    n_seeds: int
    seed: int = 0
    gen: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(
            self, "m_candidates", tuple(sorted(int(m) for m in self.m_candidates))
        )
        if not self.k_values or not self.m_candidates:
            raise ValueError("sweep axes must be nonempty")
        if self.m_true < 1:
            raise ValueError("m_true must be >= 1")
        if self.n_seeds < 1:
            raise ValueError("need at least one seed per cell")
        object.__setattr__(self, "gen", _checked_template(
            self.gen, "gen", forbidden=("n_samples", "order", "seed")
        ))
        object.__setattr__(self, "fit", _checked_template(
            self.fit, "fit",
            forbidden=("order", "lambda1", "lambda2", "lambda3", "seed"),
        ))
        _probe_templates(
            self.gen, self.fit, max(self.k_values), max(self.m_candidates)
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "OrderSelectionSpec":
        raw = dict(raw)
        schema = raw.pop("schema", 1)
        if schema != 1:
            raise ValueError(f"unsupported spec schema {schema}")
        for name in ("k_values", "m_candidates"):
            if name in raw:
                raw[name] = tuple(raw[name])
        return cls(**raw)


def derive_cell_seed(master: int, k: int, m: int, rep: int) -> int:
    """Stable per-cell seed; independent of execution order and workers."""
    ss = np.random.SeedSequence([int(master), int(k), int(m), int(rep)])
    return int(ss.generate_state(1)[0])


def split_series(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contiguous 60/20/20 split along time."""
    k = x.shape[1]
    a, b = int(0.6 * k), int(0.8 * k)
    return x[:, :a], x[:, a:b], x[:, b:]


def _forecast_error(x_ctx: np.ndarray, width: int, a0: np.ndarray,
                    lag_mats: list[np.ndarray]) -> float:
    """Mean per-node squared one-step-ahead error over the last ``width``
    columns of ``x_ctx`` (earlier columns only provide lag context)."""
    n, k = x_ctx.shape
    m = len(lag_mats)
    if k - width < m:
        raise ValueError("not enough context for the forecast window")
    pred = np.zeros((n, width))
    for i in range(1, m + 1):
        pred += lag_mats[i - 1] @ x_ctx[:, k - width - i : k - i]
    resid = x_ctx[:, k - width :] - np.linalg.solve(np.eye(n) - a0, pred)
    return float(np.mean((resid**2).sum(axis=0)) / n)


def _poly_lag_mats(dag, coeffs: PolyCoeffs) -> list[np.ndarray]:
    return [coeffs.filter_matrix(dag, i) for i in range(1, coeffs.order + 1)]


def _matrix_model_gap(x: np.ndarray, a0_hat, lags_hat, a0_true, lags_true,
                      causal: bool) -> float:
    """Prediction-error gap for explicit lag-matrix models (the baseline)."""
    n, k = x.shape
    m = max(len(lags_hat), len(lags_true))
    width = k - m

    def mean_sq(a0, lags):
        pred = np.zeros((n, width))
        for i in range(1, len(lags) + 1):
            pred += lags[i - 1] @ x[:, k - width - i : k - i]
        if causal:
            resid = x[:, k - width :] - np.linalg.solve(np.eye(n) - a0, pred)
        else:
            resid = x[:, k - width :] - a0 @ x[:, k - width :] - pred
        return float(np.mean((resid**2).sum(axis=0)) / n)

    return mean_sq(a0_hat, lags_hat) - mean_sq(a0_true, lags_true)


def _empty_metrics() -> dict:
    return {name: "" for name in METRIC_FIELDS}


def run_cell(spec: ExperimentSpec, k: int, m: int, rep: int) -> list[dict]:
    """One Monte-Carlo replicate: generate, grid-search, refit, score.

    Returns one row for the estimator and, if requested, one for the
    baseline fitted on the same training block.
    """
    base = {"K": k, "M": m, "seed": rep, "lambda1": "", "lambda2": "",
            "lambda3": "", "fit_seconds": "", "status": "ok"}
    rows = []
    try:
        cell_seed = derive_cell_seed(spec.seed, k, m, rep)
        gen_cfg = GenConfig(n_samples=k, order=m, seed=cell_seed, **spec.gen)
        truth = make_ground_truth(gen_cfg)
    except (CgpLingamError, ValueError) as exc:
        row = dict(base, status=type(exc).__name__, **_empty_metrics())
        rows.append(row)
        if spec.include_baseline:
            rows.append(dict(row))
        return rows

    x = truth.series.data
    train, val, test = split_series(x)
    m_ctx = train.shape[1]
    val_ctx = x[:, m_ctx - m : m_ctx + val.shape[1]]

    row = dict(base)
    try:
        # stage 1/2 depend only on (lambda1, lambda3); stage 3 only on
        # lambda2 — share the expensive stages across the lambda2 leg
        best = None
        for lam1, lam3 in product(spec.lambda1_grid, spec.lambda3_grid):
            outer_cfg = FitConfig(
                order=m, lambda1=lam1, lambda3=lam3,
                seed=cell_seed, **spec.fit,
            )
            try:
                filters, residuals, _ = stage1_fit(train, outer_cfg)
                lingam_res = stage2_fit(residuals, outer_cfg)
            except (CgpLingamError, ValueError):
                continue
            for lam2 in spec.lambda2_grid:
                cfg = replace(outer_cfg, lambda2=lam2)
                try:
                    coeffs = stage3_fit(filters, lingam_res.dag, cfg)
                except (CgpLingamError, ValueError):
                    continue
                err = _forecast_error(
                    val_ctx, val.shape[1], lingam_res.dag.weights,
                    _poly_lag_mats(lingam_res.dag, coeffs),
                )
                key = (err, lam1, lam2, lam3)
                if best is None or key < best[0]:
                    best = (key, cfg)
        if best is None:
            raise CgpLingamError("every grid point failed")
        cfg = best[1]
        t0 = time.perf_counter()
        report = fit(train, cfg)
        elapsed = time.perf_counter() - t0
        scores = compute_metrics(truth, report, test)
        row.update(
            lambda1=cfg.lambda1, lambda2=cfg.lambda2, lambda3=cfg.lambda3,
            snr_a_db=scores.snr_a, err_c=scores.err_c,
            err_eps=scores.err_eps, err_eps_causal=scores.err_eps_causal,
            shd=scores.shd, rmse_a=scores.rmse_a,
        )
        if spec.collect_timings:
            row["fit_seconds"] = elapsed
    except (CgpLingamError, ValueError) as exc:
        row = dict(base, status=type(exc).__name__, **_empty_metrics())
    rows.append(row)

    if spec.include_baseline:
        brow = dict(base)
        try:
            prune = spec.fit.get("prune_thresh", 0.05)
            t0 = time.perf_counter()
            lingam_res, lag_mats = var_lingam_baseline(
                train, m, thresh=prune,
                rng=np.random.default_rng(cell_seed),
            )
            elapsed = time.perf_counter() - t0
            a0_true = truth.dag.weights
            lags_true = _poly_lag_mats(truth.dag, truth.coeffs)
            brow.update(
                snr_a_db=snr_a(truth.dag, lingam_res.dag),
                err_c="",
                err_eps=_matrix_model_gap(
                    test, lingam_res.dag.weights, lag_mats,
                    a0_true, lags_true, causal=False,
                ),
                err_eps_causal=_matrix_model_gap(
                    test, lingam_res.dag.weights, lag_mats,
                    a0_true, lags_true, causal=True,
                ),
                shd=shd(truth.dag, lingam_res.dag, prune),
                rmse_a=rmse_a(truth.dag, lingam_res.dag),
            )
            if spec.collect_timings:
                brow["fit_seconds"] = elapsed
        except (CgpLingamError, ValueError) as exc:
            brow = dict(base, status=type(exc).__name__, **_empty_metrics())
        rows.append(brow)
    return rows


def _run_cell_star(args) -> list[dict]:
    return run_cell(*args)


def _sorted_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (r["K"], r["M"], r["seed"]))


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Median and mean per (K, M) over rows with status ok."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["K"], row["M"]), []).append(row)
    out = []
    for (k, m) in sorted(cells):
        ok = [r for r in cells[(k, m)] if r["status"] == "ok"]
        for stat, fn in (("median", np.median), ("mean", np.mean)):
            agg = {"K": k, "M": m, "n_ok": len(ok), "stat": stat}
            for name in METRIC_FIELDS:
                values = [r[name] for r in ok if r[name] != ""]
                agg[name] = float(fn(values)) if values else ""
            out.append(agg)
    return out


def run_experiment(spec: ExperimentSpec, threads: int = 1):
    """Full sweep; returns (rows, aggregate, baseline_rows, baseline_aggregate).

    Baseline lists are empty unless the spec enables the comparison. Rows
    are sorted by (K, M, seed), so the result is independent of worker
    count and scheduling.
    """
    tasks = [
        (spec, k, m, rep)
        for k in spec.k_values
        for m in spec.m_values
        for rep in range(spec.n_seeds)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            nested = list(pool.map(_run_cell_star, tasks))
    else:
        nested = [run_cell(*task) for task in tasks]

    rows, baseline_rows = [], []
    for chunk in nested:
        rows.append(chunk[0])
        if spec.include_baseline:
            baseline_rows.append(chunk[1])
    rows = _sorted_rows(rows)
    baseline_rows = _sorted_rows(baseline_rows)
    return (
        rows,
        aggregate_rows(rows),
        baseline_rows,
        aggregate_rows(baseline_rows) if baseline_rows else [],
    )


def run_order_selection(spec: OrderSelectionSpec):
    """Order-recovery sweep; returns (histogram rows, grouped-RMSE rows).

    Histogram rows: one per (K, candidate M) with the selection count.
    Grouped rows: RMSE_A of the refit at the selected order, grouped by
    (K, selected M), with count, mean, and median.
    """
    picks: dict[tuple, list[float]] = {}
    counts: dict[tuple, int] = {}
    failures: dict[int, int] = {}
    for k in spec.k_values:
        for rep in range(spec.n_seeds):
            cell_seed = derive_cell_seed(spec.seed, k, spec.m_true, rep)
            try:
                gen_cfg = GenConfig(
                    n_samples=k, order=spec.m_true, seed=cell_seed, **spec.gen
                )
                truth = make_ground_truth(gen_cfg)
                cfg = FitConfig(order=spec.m_true, seed=cell_seed, **spec.fit)
                best, _ = select_order(truth.series.data, cfg, spec.m_candidates)
                report = fit(truth.series.data, replace(cfg, order=best))
            except (CgpLingamError, ValueError):
                failures[k] = failures.get(k, 0) + 1
                continue
            counts[(k, best)] = counts.get((k, best), 0) + 1
            picks.setdefault((k, best), []).append(rmse_a(truth.dag, report.dag))

    histogram = [
        {
            "K": k,
            "selected_m": m,
            "count": counts.get((k, m), 0),
            "m_true": spec.m_true,
        }
        for k in spec.k_values
        for m in spec.m_candidates
    ]
    for k in spec.k_values:
        if failures.get(k):
            histogram.append(
                {"K": k, "selected_m": -1, "count": failures[k],
                 "m_true": spec.m_true}
            )
    grouped = [
        {
            "K": k,
            "selected_m": m,
            "n": len(values),
            "mean_rmse_a": float(np.mean(values)),
            "median_rmse_a": float(np.median(values)),
        }
        for (k, m), values in sorted(picks.items())
    ]
    return histogram, grouped


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(col, "")) for col in columns])
    return buf.getvalue()


def write_manifest(out_dir, names) -> dict:
    """Hash the named files under ``out_dir`` into a manifest.json."""
    out = Path(out_dir)
    entries = []
    for name in sorted(names):
        payload = (out / name).read_bytes()
        entries.append(
            {
                "name": name,
                "sha256": hashlib.sha256(payload).hexdigest(),
                "bytes": len(payload),
            }
        )
    manifest = json.dumps(
        {"schema": 1, "files": entries}, indent=2, sort_keys=True
    ) + "\n"
    (out / "manifest.json").write_text(manifest)
    return {"files": entries, "path": str(out / "manifest.json")}


def write_outputs(out_dir, tables: dict[str, str]) -> dict:
    """Write named CSV/JSON payloads plus a manifest with content hashes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in tables.items():
        (out / name).write_bytes(payload.encode())
    return write_manifest(out, tables.keys())
