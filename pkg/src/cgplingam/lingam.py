"""Instantaneous-DAG recovery from i.i.d.-in-time residuals.

Pipeline: FastICA unmixing, permutation/scaling resolution, SEM coefficient
extraction, causal ordering, edge pruning. The data model is the linear SEM
``v = A v + e`` with non-Gaussian independent ``e``, so the unmixing matrix
is ``D P (I - A)`` up to estimation error and the DAG is identifiable.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    IdentifiabilityError,
    NonGaussianityWarning,
)
from .graphs import DagMatrix, is_dag

FASTICA_MAX_ITER = 500
FASTICA_TOL = 1e-6
FASTICA_RESTARTS = 5

# Exhaustive permutation search is cheap up to 8! = 40320.
EXHAUSTIVE_MAX_NODES = 8

DEFAULT_PRUNE_THRESH = 0.05

# Rows with excess kurtosis inside this band look Gaussian; identifiability
# of the SEM rests on at least some rows escaping it.
GAUSSIAN_KURTOSIS_BAND = 0.1


@dataclass
class IcaResult:
    """FastICA output. ``unmixing @ data_centered`` are the sources."""

    unmixing: np.ndarray
    whitener: np.ndarray
    n_iterations: int
    converged: bool


@dataclass
class LingamResult:
    """Instantaneous SEM estimate.

    ``pruned_mask[i, j]`` is True where a nonzero entry of the raw
    coefficient matrix was zeroed by pruning (order repair or threshold).
    """

    dag: DagMatrix
    causal_order: np.ndarray
    pruned_mask: np.ndarray
    b_raw: np.ndarray
    ica: IcaResult


def _excess_kurtosis_rows(x: np.ndarray) -> np.ndarray:
    c = x - x.mean(axis=1, keepdims=True)
    m2 = np.mean(c**2, axis=1)
    return np.mean(c**4, axis=1) / m2**2 - 3.0


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W')^{-1/2} W via eigendecomposition
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, 1e-18, None)
    return (u / np.sqrt(s)) @ u.T @ w


def fastica(data: np.ndarray, rng: np.random.Generator) -> IcaResult:
    """Symmetric fixed-point FastICA with the tanh contrast.

    Centers and eigen-whitens the rows, runs the fixed-point iteration to
    tolerance 1e-6 (max 500 iterations), restarting from fresh random
    rotations up to 5 times. The returned unmixing acts on centered data
    and produces unit-variance, maximally non-Gaussian rows.

    Raises DegenerateInputError on a rank-deficient covariance. When no
    restart converges: if every recovered source looks Gaussian the last
    iterate is returned with ``converged=False`` (identifiability is void
    there anyway and a NonGaussianityWarning flags it); otherwise a
    ConvergenceError is raised.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be an N x K matrix")
    n, k = x.shape
    if k <= n:
        raise ValueError(f"need more samples than nodes, got {n} x {k}")
    x = x - x.mean(axis=1, keepdims=True)

    cov = x @ x.T / k
    eigval, eigvec = np.linalg.eigh(cov)
    if eigval[-1] <= 0 or eigval[0] < 1e-10 * eigval[-1]:
        raise DegenerateInputError(
            "covariance is rank deficient; sources are not separable"
        )
    whitener = (eigvec / np.sqrt(eigval)).T  # rows scaled by 1/sqrt(eig)
    xw = whitener @ x

    w_rot = None
    n_total_iters = 0
    converged = False
    for _ in range(FASTICA_RESTARTS):
        w_rot = _sym_decorrelate(rng.standard_normal((n, n)))
        for it in range(FASTICA_MAX_ITER):
            u = w_rot @ xw
            g = np.tanh(u)
            g_prime = 1.0 - g**2
            w_new = (g @ xw.T) / k - g_prime.mean(axis=1)[:, None] * w_rot
            w_new = _sym_decorrelate(w_new)
            # rotation change, invariant to per-row sign flips
            delta = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w_rot)) - 1.0))
            w_rot = w_new
            n_total_iters += 1
            if delta < FASTICA_TOL:
                converged = True
                break
        if converged:
            break

    unmixing = w_rot @ whitener
    sources = unmixing @ x
    kurt = _excess_kurtosis_rows(sources)
    all_gaussian = bool(np.all(np.abs(kurt) < GAUSSIAN_KURTOSIS_BAND))
    if all_gaussian:
        warnings.warn(
            "all recovered sources have near-zero excess kurtosis; the "
            "instantaneous graph is not identifiable from this data",
            NonGaussianityWarning,
            stacklevel=2,
        )
    if not converged and not all_gaussian:
        raise ConvergenceError(
            f"fixed-point iteration failed to converge in "
            f"{FASTICA_RESTARTS} restarts x {FASTICA_MAX_ITER} iterations"
        )
    return IcaResult(
        unmixing=unmixing,
        whitener=whitener,
        n_iterations=n_total_iters,
        converged=converged,
    )


def resolve_permutation_scaling(w: np.ndarray) -> np.ndarray:
    """Permute rows of ``w`` to maximize the diagonal, then rescale it to 1.

    The row assignment minimizes sum(1/|diag|) — solved exactly as a linear
    assignment problem for every N. Raises IdentifiabilityError when every
    permutation leaves a zero on the diagonal.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("w must be square")
    with np.errstate(divide="ignore"):
        cost = 1.0 / np.abs(w)
    try:
        rows, cols = linear_sum_assignment(cost)
    except ValueError as exc:
        raise IdentifiabilityError(
            "no row permutation yields a nonzero diagonal"
        ) from exc
    order = rows[np.argsort(cols)]  # row placed at each diagonal position
    permuted = w[order]
    d = np.diag(permuted)
    if np.any(d == 0.0) or not np.all(np.isfinite(cost[order, np.arange(len(d))])):
        raise IdentifiabilityError(
            "no row permutation yields a nonzero diagonal"
        )
    return permuted / d[:, None]


def estimate_b_matrix(w_resolved: np.ndarray) -> np.ndarray:
    """SEM coefficients from a diagonal-one unmixing: B = I - W."""
    w = np.asarray(w_resolved, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("w_resolved must be square")
    if np.max(np.abs(np.diag(w) - 1.0)) > 1e-8:
        raise ValueError("w_resolved must have unit diagonal")
    return np.eye(w.shape[0]) - w


def _upper_mass(b: np.ndarray, order) -> float:
    p = b[np.ix_(order, order)]
    return float((np.triu(p, k=1) ** 2).sum())


def find_causal_order(b: np.ndarray) -> np.ndarray:
    """Permutation minimizing the squared mass above the diagonal of PBP'.

    Exhaustive search up to 8 nodes; beyond that, greedily peel the node
    with the smallest incoming squared mass among the remaining ones. Ties
    break toward the lowest node index.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n <= EXHAUSTIVE_MAX_NODES:
        best, best_cost = None, np.inf
        # lexicographic enumeration makes the first optimum the
        # lowest-index tie-break
        for perm in itertools.permutations(range(n)):
            cost = _upper_mass(b, list(perm))
            if cost < best_cost - 1e-15:
                best, best_cost = perm, cost
        return np.array(best)
    remaining = list(range(n))
    order = []
    while remaining:
        masses = [
            sum(b[i, j] ** 2 for j in remaining if j != i) for i in remaining
        ]
        pick = remaining[int(np.argmin(masses))]  # argmin takes first = lowest index
        order.append(pick)
        remaining.remove(pick)
    return np.array(order)


def prune_edges(b: np.ndarray, order: np.ndarray, thresh: float) -> DagMatrix:
    """Zero the acausal half (above the diagonal in the order frame) and
    every entry below ``thresh`` in magnitude; certify the result a DAG."""
    b = np.asarray(b, dtype=float).copy()
    order = np.asarray(order, dtype=int)
    n = b.shape[0]
    pos = np.empty(n, dtype=int)
    pos[order] = np.arange(n)
    # entry (i, j) survives only if j precedes i in the causal order
    causal = pos[:, None] > pos[None, :]
    b[~causal] = 0.0
    b[np.abs(b) < thresh] = 0.0
    return DagMatrix(b)


def lingam_fit(
    data: np.ndarray,
    thresh: float = DEFAULT_PRUNE_THRESH,
    rng: np.random.Generator | None = None,
) -> LingamResult:
    """Full instantaneous-graph estimate from i.i.d. rows of an SEM.

    Composes fastica, permutation/scaling resolution, B extraction, causal
    ordering and pruning. Warns when fewer than 10 samples per node are
    available.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(data, dtype=float)
    n, k = x.shape
    if k <= 10 * n:
        warnings.warn(
            f"only {k} samples for {n} nodes; estimates below ~10 samples "
            "per node are unreliable",
            UserWarning,
            stacklevel=2,
        )
    ica = fastica(x, rng)
    w_resolved = resolve_permutation_scaling(ica.unmixing)
    b_raw = estimate_b_matrix(w_resolved)
    order = find_causal_order(b_raw)
    dag = prune_edges(b_raw, order, thresh)
    pruned_mask = (b_raw != 0.0) & (dag.weights == 0.0)
    assert is_dag(dag.weights)
    return LingamResult(
        dag=dag,
        causal_order=order,
        pruned_mask=pruned_mask,
        b_raw=b_raw,
        ica=ica,
    )
