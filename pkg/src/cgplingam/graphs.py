"""Dense graph primitives: DAG adjacency, graph polynomial filters, spectral
checks, commutators and the vec/Kronecker machinery used by the estimators.

Convention used everywhere in this package (including CSV export): entry
``A[i, j] != 0`` means node ``j`` is a parent of node ``i`` (row = effect),
so the instantaneous model reads ``x = A x + e``.

All vectorization is column-major: ``vec`` stacks columns, matching the
identity ``vec(A B C) = (C^T kron A) vec(B)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Entries smaller than this are structural zeros for graph-topology tests;
# separates numerical dust from structure.
STRUCTURAL_ZERO_TOL = 1e-12

# Tolerance on the accumulated |trace(S^k)| nilpotency sum.
ACYCLICITY_TOL = 1e-8


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a 2-D array."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, n_rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for an ``n_rows``-row matrix."""
    v = np.asarray(v)
    return v.reshape(n_rows, -1, order="F")


def _as_square(a, name: str = "matrix") -> np.ndarray:
    if isinstance(a, DagMatrix):
        return a.weights
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def support(a: np.ndarray, zero_tol: float = STRUCTURAL_ZERO_TOL) -> np.ndarray:
    """Boolean edge support of a weighted adjacency matrix."""
    return np.abs(np.asarray(a)) >= zero_tol


def is_dag(a: np.ndarray, tol: float = ACYCLICITY_TOL) -> bool:
    """Nilpotency test for acyclicity.

    Works on the binarized support (entries below the structural-zero
    threshold are dropped), so closed walks of any length contribute at
    least 1 to the accumulated trace and cannot hide under small weights.
    """
    a = _as_square(a)
    n = a.shape[0]
    s = support(a).astype(float)
    total = 0.0
    power = s.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            t = np.trace(power)
            if not np.isfinite(t):
                return False
            total += abs(t)
            if total >= tol:
                return False
            power = power @ s
    return total < tol


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue modulus."""
    a = _as_square(a)
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0


def commutator_norm(ri: np.ndarray, rj: np.ndarray) -> float:
    """Frobenius norm of ``ri @ rj - rj @ ri``."""
    ri = _as_square(ri, "ri")
    rj = _as_square(rj, "rj")
    if ri.shape != rj.shape:
        raise ValueError(f"dimension mismatch: {ri.shape} vs {rj.shape}")
    return float(np.linalg.norm(ri @ rj - rj @ ri, "fro"))


def graph_polynomial(a: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_j coeffs[j] * a^j`` by Horner's scheme.

    ``coeffs[0]`` multiplies the identity; high matrix powers are never
    formed explicitly.
    """
    a = _as_square(a)
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    if coeffs.size == 0:
        raise ValueError("need at least one coefficient")
    n = a.shape[0]
    eye = np.eye(n)
    acc = coeffs[-1] * eye
    for c in coeffs[-2::-1]:
        acc = a @ acc + c * eye
    return acc


def kron_vec_apply(c: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Apply ``(c^T kron a)`` to ``vec(b)`` without forming the Kronecker product.

    Returns ``vec(a @ b @ c)``.
    """
    unwrap = lambda m: m.weights if isinstance(m, DagMatrix) else np.asarray(m, float)
    a, b, c = unwrap(a), unwrap(b), unwrap(c)
    if a.shape[1] != b.shape[0] or b.shape[1] != c.shape[0]:
        raise ValueError(
            f"dimension mismatch: a {a.shape} @ b {b.shape} @ c {c.shape}"
        )
    return vec(a @ b @ c)


def geometric_inverse_check(a: np.ndarray, terms: int) -> float:
    """Frobenius gap between ``inv(I - a)`` and the truncated power series.

    For a DAG with ``terms >= n - 1`` the series is exact (nilpotency).
    A singular ``I - a`` signals an invariant violation upstream and is
    surfaced as ``numpy.linalg.LinAlgError``.
    """
    a = _as_square(a)
    if terms < 0:
        raise ValueError("terms must be >= 0")
    n = a.shape[0]
    inv = np.linalg.inv(np.eye(n) - a)
    acc = np.eye(n)
    power = np.eye(n)
    for _ in range(terms):
        power = power @ a
        acc += power
    return float(np.linalg.norm(inv - acc, "fro"))


@dataclass(frozen=True)
class DagMatrix:
    """Weighted adjacency of a causal DAG.

    ``weights[i, j]`` is the effect of parent ``j`` on node ``i``.
    Construction enforces an exactly-zero diagonal, acyclicity and
    eigenvalue moduli strictly below one.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = _as_square(self.weights, "weights")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("diagonal entries must be exactly zero")
        if not is_dag(w):
            raise ValueError("weights contain a directed cycle")
        if spectral_radius(w) >= 1.0:
            raise ValueError("spectral radius must be < 1")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def support(self, zero_tol: float = STRUCTURAL_ZERO_TOL) -> np.ndarray:
        return support(self.weights, zero_tol)


def n_coeffs(order: int) -> int:
    """Length of the stacked coefficient vector for a given lag order."""
    return order * (order + 3) // 2


@dataclass(frozen=True)
class PolyCoeffs:
    """Stacked lag-polynomial coefficients.

    ``coeffs`` holds the scalars in lexicographic (lag, power) order:
    lag 1 contributes 2 entries (powers 0..1), lag 2 contributes 3, and so
    on up to ``order``, for ``order * (order + 3) / 2`` in total.
    """

    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        c = np.asarray(self.coeffs, dtype=float).ravel()
        expected = n_coeffs(self.order)
        if c.size != expected:
            raise ValueError(
                f"coefficient vector has length {c.size}, expected {expected} "
                f"for order {self.order}"
            )
        object.__setattr__(self, "coeffs", c)

    @staticmethod
    def lag_offset(i: int) -> int:
        """Start index of lag ``i`` (1-based) within the stacked vector."""
        return (i - 1) * (i + 2) // 2

    def lag(self, i: int) -> np.ndarray:
        """Coefficients of lag ``i``: powers 0..i, so ``i + 1`` entries."""
        if not 1 <= i <= self.order:
            raise ValueError(f"lag must be in 1..{self.order}, got {i}")
        off = self.lag_offset(i)
        return self.coeffs[off : off + i + 1]

    @classmethod
    def from_lags(cls, lags: list[np.ndarray]) -> "PolyCoeffs":
        order = len(lags)
        for i, c in enumerate(lags, start=1):
            if np.asarray(c).size != i + 1:
                raise ValueError(f"lag {i} needs {i + 1} coefficients")
        return cls(order=order, coeffs=np.concatenate([np.ravel(c) for c in lags]))

    def filter_matrix(self, dag: DagMatrix | np.ndarray, i: int) -> np.ndarray:
        """The lag-``i`` polynomial filter evaluated on ``dag``."""
        w = dag.weights if isinstance(dag, DagMatrix) else np.asarray(dag, float)
        return graph_polynomial(w, self.lag(i))
