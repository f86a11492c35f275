"""Ground-truth problem generation: random sparse DAGs with designated
pure parents, decaying lag-polynomial coefficients, non-Gaussian
disturbances, and forward simulation of the induced VAR recursion.

Everything is pure given an explicit ``numpy.random.Generator``; a single
generator must not be shared across concurrent calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import UnstableProcessError
from .graphs import DagMatrix, PolyCoeffs, n_coeffs, spectral_radius

COEFF_SCHEMES = ("UniformGap", "GaussianNarrow")

# Samples whose norm passes this are treated as a blown-up recursion.
EXPLOSION_THRESHOLD = 1e8

DEFAULT_BURN_IN = 100

# Disturbance shaping: e = sign(z)|z|^q, q drawn away from 1 on both sides
# so every node is strictly non-Gaussian (sub- or super-Gaussian).
Q_BANDS = ((0.5, 0.8), (1.2, 2.0))


@dataclass(frozen=True)
class GenConfig:
    """Knobs for one synthetic problem draw."""

    n_nodes: int
    n_samples: int
    order: int
    seed: int
    coeff_scheme: str = "UniformGap"
    noise_variance: float = 1.0
    edge_weight_range: tuple[float, float] = (0.3, 0.9)
    pure_parents: int = 1
    edge_prob: float = 0.4
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.n_samples <= self.order:
            raise ValueError("n_samples must exceed order")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.coeff_scheme not in COEFF_SCHEMES:
            raise ValueError(
                f"coeff_scheme must be one of {COEFF_SCHEMES}, "
                f"got {self.coeff_scheme!r}"
            )
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        rng_pair = tuple(float(v) for v in self.edge_weight_range)
        if len(rng_pair) != 2 or not (0 < rng_pair[0] <= rng_pair[1]):
            raise ValueError(
                "edge_weight_range must be 0 < low <= high (magnitudes; "
                "both signs are used)"
            )
        object.__setattr__(self, "edge_weight_range", rng_pair)
        if not 1 <= self.pure_parents <= self.n_nodes:
            raise ValueError("pure_parents must be in 1..n_nodes")
        if not 0 <= self.edge_prob <= 1:
            raise ValueError("edge_prob must be in [0, 1]")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class TimeSeries:
    """Multivariate series, column k holding the sample x(k)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2 or d.shape[1] < 1:
            raise ValueError("data must be an N x K matrix with K >= 1")
        if not np.isfinite(d).all():
            raise ValueError("data must be finite")
        object.__setattr__(self, "data", d)

    @property
    def n_nodes(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """One fully specified problem: graph, coefficients, data, disturbances."""

    dag: DagMatrix
    coeffs: PolyCoeffs
    series: TimeSeries
    disturbances: np.ndarray
    config: GenConfig | None = field(default=None, compare=False)


def sample_dag(cfg: GenConfig, rng: np.random.Generator) -> DagMatrix:
    """Random weighted DAG with exactly ``cfg.pure_parents`` parentless nodes.

    A causal order is drawn uniformly; the first ``pure_parents`` positions
    receive no parents by construction, every later node gets each earlier
    node as a parent with probability ``edge_prob`` and at least one parent
    is forced (otherwise the pure-parent count would drift upward).
    """
    n = cfg.n_nodes
    order = rng.permutation(n)
    lo, hi = cfg.edge_weight_range
    w = np.zeros((n, n))
    for pos in range(cfg.pure_parents, n):
        child = order[pos]
        parents = order[:pos][rng.random(pos) < cfg.edge_prob]
        if parents.size == 0:
            parents = np.array([order[rng.integers(pos)]])
        for p in parents:
            w[child, p] = rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0)
    rho = spectral_radius(w)
    if rho >= 1.0:  # pragma: no cover - unreachable for exact DAGs
        w *= 0.99 / rho
    return DagMatrix(w)


def sample_coeffs(cfg: GenConfig, rng: np.random.Generator) -> PolyCoeffs:
    """Lag-polynomial coefficients with 2^{-(i+j)} decay.

    UniformGap: 2^{i+j} c_ij is uniform on [-1, -0.45] or [0.45, 1] with
    equal probability (magnitudes bounded away from zero). GaussianNarrow:
    2^{i+j} c_ij is normal with mean 1 and variance 0.01.
    """
    vals = np.empty(n_coeffs(cfg.order))
    pos = 0
    for i in range(1, cfg.order + 1):
        for j in range(0, i + 1):
            if cfg.coeff_scheme == "UniformGap":
                u = rng.uniform(0.45, 1.0)
                u = -u if rng.random() < 0.5 else u
            else:
                u = rng.normal(1.0, 0.1)
            vals[pos] = u / 2.0 ** (i + j)
            pos += 1
    return PolyCoeffs(order=cfg.order, coeffs=vals)


def sample_disturbances(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Non-Gaussian i.i.d. disturbances, one row per node.

    Per node: z standard normal, e = sign(z)|z|^q with q uniform over
    [0.5, 0.8] union [1.2, 2.0] (band chosen proportionally to length, so
    the draw is uniform over the union), then empirically centered and
    rescaled so each row has variance ``noise_variance`` exactly.
    """
    n, k = cfg.n_nodes, cfg.n_samples
    return _draw_disturbances(n, k, cfg.noise_variance, rng)


def _draw_disturbances(
    n: int, k: int, noise_variance: float, rng: np.random.Generator
) -> np.ndarray:
    if noise_variance == 0.0:
        return np.zeros((n, k))
    widths = np.array([hi - lo for lo, hi in Q_BANDS])
    e = np.empty((n, k))
    for row in range(n):
        band = Q_BANDS[rng.choice(len(Q_BANDS), p=widths / widths.sum())]
        q = rng.uniform(*band)
        z = rng.standard_normal(k)
        x = np.sign(z) * np.abs(z) ** q
        x -= x.mean()
        sd = x.std()
        if sd > 0:
            x *= np.sqrt(noise_variance) / sd
        e[row] = x
    return e


def lag_filters(dag: DagMatrix, coeffs: PolyCoeffs) -> list[np.ndarray]:
    """The reduced-form filters (I - A)^{-1} P_i(A, c), i = 1..order."""
    inv = np.linalg.inv(np.eye(dag.n) - dag.weights)
    return [inv @ coeffs.filter_matrix(dag, i) for i in range(1, coeffs.order + 1)]


def companion_matrix(filters: list[np.ndarray]) -> np.ndarray:
    """Block-companion form of x(k) = sum_i F_i x(k-i)."""
    m = len(filters)
    n = filters[0].shape[0]
    comp = np.zeros((m * n, m * n))
    comp[:n] = np.hstack(filters)
    if m > 1:
        comp[n:, : (m - 1) * n] = np.eye((m - 1) * n)
    return comp


def stability_screen(dag: DagMatrix, coeffs: PolyCoeffs) -> bool:
    """True iff the induced VAR recursion is stable (companion radius < 1)."""
    return spectral_radius(companion_matrix(lag_filters(dag, coeffs))) < 1.0


def simulate(
    dag: DagMatrix,
    coeffs: PolyCoeffs,
    e: np.ndarray,
    burn_in: int = DEFAULT_BURN_IN,
    warm_start: np.ndarray | None = None,
) -> TimeSeries:
    """Iterate x(k) = sum_i F_i x(k-i) + (I-A)^{-1} e(k) and drop burn_in.

    Starts from zeros unless ``warm_start`` (N x order) supplies the first
    ``order`` columns; those warm-start columns are part of the output and
    the recursion begins at k = order. Raises UnstableProcessError with the
    offending time index when any sample norm passes the explosion bound.
    """
    e = np.asarray(e, dtype=float)
    n, total = e.shape
    if n != dag.n:
        raise ValueError("disturbance rows do not match node count")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if total <= burn_in:
        raise ValueError("need more samples than burn_in")
    m = coeffs.order
    filters = lag_filters(dag, coeffs)
    e_tilde = np.linalg.inv(np.eye(n) - dag.weights) @ e
    x = np.zeros((n, total))
    start = 0
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        if warm_start.shape != (n, m):
            raise ValueError(f"warm_start must be {n} x {m}")
        x[:, :m] = warm_start
        start = m
    for k in range(start, total):
        acc = e_tilde[:, k].copy()
        for i, f in enumerate(filters, start=1):
            if k - i >= 0:
                acc += f @ x[:, k - i]
        x[:, k] = acc
        if np.linalg.norm(acc) > EXPLOSION_THRESHOLD:
            raise UnstableProcessError(
                f"sample norm exceeded {EXPLOSION_THRESHOLD:.0e} at index {k}",
                time_index=k,
            )
    return TimeSeries(data=x[:, burn_in:])


def make_ground_truth(cfg: GenConfig, max_draws: int = 200) -> GroundTruth:
    """Draw (dag, coeffs, e), screen for stability, simulate, bundle.

    Unstable coefficient draws are rejected and re-sampled (preserving the
    coefficient distribution rather than shrinking); after several failures
    the DAG itself is redrawn. Disturbances cover burn_in extra samples and
    the bundle keeps the last ``n_samples`` columns of both x and e.
    """
    rng = cfg.rng()
    dag = sample_dag(cfg, rng)
    coeffs = None
    for attempt in range(max_draws):
        candidate = sample_coeffs(cfg, rng)
        if stability_screen(dag, candidate):
            coeffs = candidate
            break
        if (attempt + 1) % 25 == 0:
            dag = sample_dag(cfg, rng)
    if coeffs is None:
        raise UnstableProcessError(
            f"no stable coefficient draw in {max_draws} attempts"
        )
    total = cfg.n_samples + cfg.burn_in
    e_full = sample_disturbances(replace(cfg, n_samples=total), rng)
    series = simulate(dag, coeffs, e_full, burn_in=cfg.burn_in)
    return GroundTruth(
        dag=dag,
        coeffs=coeffs,
        series=series,
        disturbances=e_full[:, cfg.burn_in :],
        config=cfg,
    )


def reconstruction_residual(gt: GroundTruth) -> float:
    """Max abs residual of (I-A) x(k) - sum_i P_i x(k-i) - e(k) for k >= order.

    Zero (to numerical precision) for any bundle produced by simulate with
    matched disturbances.
    """
    a = gt.dag.weights
    n = gt.dag.n
    m = gt.coeffs.order
    x = gt.series.data
    p = [gt.coeffs.filter_matrix(gt.dag, i) for i in range(1, m + 1)]
    lhs = (np.eye(n) - a) @ x[:, m:]
    for i in range(1, m + 1):
        lhs -= p[i - 1] @ x[:, m - i : x.shape[1] - i]
    return float(np.max(np.abs(lhs - gt.disturbances[:, m:])))


def node_names(n: int) -> list[str]:
    return [f"x{i}" for i in range(n)]


def save_bundle(gt: GroundTruth, out_dir: str | Path) -> dict[str, Path]:
    """Write a GroundTruth bundle to disk.

    Layout: series.csv (rows = time, header = node names), dag.csv (N x N
    weights), coeffs.json (order + stacked coefficients), disturbances.csv,
    provenance.json (config echo). Returns the path of each artifact.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = gt.dag.n
    names = node_names(n)
    paths = {}

    series_path = out / "series.csv"
    _write_csv(series_path, gt.series.data.T, header=names)
    paths["series"] = series_path

    dag_path = out / "dag.csv"
    _write_csv(dag_path, gt.dag.weights, header=names)
    paths["dag"] = dag_path

    dist_path = out / "disturbances.csv"
    _write_csv(dist_path, gt.disturbances.T, header=names)
    paths["disturbances"] = dist_path

    coeffs_path = out / "coeffs.json"
    coeffs_path.write_text(
        json.dumps(
            {
                "schema": 1,
                "order": gt.coeffs.order,
                "coeffs": [repr(v) for v in gt.coeffs.coeffs.tolist()],
            },
            indent=2,
        )
        + "\n"
    )
    paths["coeffs"] = coeffs_path

    prov_path = out / "provenance.json"
    cfg = gt.config
    prov = {"schema": 1}
    if cfg is not None:
        prov.update(
            {
                "n_nodes": cfg.n_nodes,
                "n_samples": cfg.n_samples,
                "order": cfg.order,
                "seed": cfg.seed,
                "coeff_scheme": cfg.coeff_scheme,
                "noise_variance": cfg.noise_variance,
                "edge_weight_range": list(cfg.edge_weight_range),
                "pure_parents": cfg.pure_parents,
                "edge_prob": cfg.edge_prob,
                "burn_in": cfg.burn_in,
            }
        )
    prov_path.write_text(json.dumps(prov, indent=2) + "\n")
    paths["provenance"] = prov_path
    return paths


def load_bundle(bundle_dir: str | Path) -> GroundTruth:
    """Read back a bundle written by save_bundle."""
    d = Path(bundle_dir)
    series = _read_csv(d / "series.csv").T
    dag = DagMatrix(_read_csv(d / "dag.csv"))
    dist = _read_csv(d / "disturbances.csv").T
    raw = json.loads((d / "coeffs.json").read_text())
    coeffs = PolyCoeffs(
        order=int(raw["order"]),
        coeffs=np.array([float(v) for v in raw["coeffs"]]),
    )
    cfg = None
    prov_path = d / "provenance.json"
    if prov_path.exists():
        prov = json.loads(prov_path.read_text())
        if "n_nodes" in prov:
            cfg = GenConfig(
                n_nodes=int(prov["n_nodes"]),
                n_samples=int(prov["n_samples"]),
                order=int(prov["order"]),
                seed=int(prov["seed"]),
                coeff_scheme=prov["coeff_scheme"],
                noise_variance=float(prov["noise_variance"]),
                edge_weight_range=tuple(prov["edge_weight_range"]),
                pure_parents=int(prov["pure_parents"]),
                edge_prob=float(prov["edge_prob"]),
                burn_in=int(prov["burn_in"]),
            )
    return GroundTruth(
        dag=dag,
        coeffs=coeffs,
        series=TimeSeries(data=series),
        disturbances=dist,
        config=cfg,
    )


def _format_float(v: float) -> str:
    # repr gives the shortest string that round-trips the float64 exactly
    return repr(float(v))


def _write_csv(path: Path, rows: np.ndarray, header: list[str]) -> None:
    rows = np.atleast_2d(rows)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_csv(path: Path) -> np.ndarray:
    lines = path.read_text().strip().splitlines()
    return np.array(
        [[float(v) for v in line.split(",")] for line in lines[1:]]
    )
