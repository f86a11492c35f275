"""Sparse and minimum-norm linear solvers shared by the estimation stages.

The l1 solver runs coordinate descent on the Gram system ``(D'D, D't)``, so
repeated solves over a penalty grid reuse one factorization-sized product.
The inner loop lives in a compiled extension (cgplingam._cd_fast) with a
pure-Python fallback; set ``CGPLINGAM_PURE_PYTHON=1`` to force the fallback.
The active choice is exposed as ``KERNEL_BACKEND``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError

if os.environ.get("CGPLINGAM_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _cd_numpy as _kernel

    KERNEL_BACKEND = "python"
else:
    try:
        from . import _cd_fast as _kernel  # type: ignore[attr-defined]

        KERNEL_BACKEND = "compiled"
    except ImportError:  # pragma: no cover - build-less installs
        from . import _cd_numpy as _kernel

        KERNEL_BACKEND = "python"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000

# A stalled run is still acceptable if the first-order violation is tiny.
KKT_RAISE_TOL = 1e-4


@dataclass
class LassoResult:
    """Outcome of one l1 solve."""

    w: np.ndarray
    n_iter: int
    converged: bool
    kkt_residual: float
    max_update: float


class GramLasso:
    """Reusable engine for 0.5*w'Gw - b'w + lam*||w||_1 with fixed (G, b).

    ``G = D'D`` and ``b = D't`` reproduce 0.5*||Dw - t||^2 + lam*||w||_1 up
    to a constant. Warm starts make penalty grids and alternating sweeps
    cheap: the Gram pair is built once.
    """

    def __init__(self, gram: np.ndarray, corr: np.ndarray,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
        g = np.ascontiguousarray(gram, dtype=np.float64)
        b = np.ascontiguousarray(np.ravel(corr), dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"gram matrix must be square, got {g.shape}")
        if b.shape[0] != g.shape[0]:
            raise ValueError("corr length does not match gram dimension")
        if not (np.isfinite(g).all() and np.isfinite(b).all()):
            raise ValueError("gram system contains non-finite entries")
        self.gram = g
        self.corr = b
        self.tol = float(tol)
        self.max_iter = int(max_iter)

    @property
    def n_features(self) -> int:
        return self.gram.shape[0]

    def kkt_residual(self, w: np.ndarray, lam: float) -> float:
        """Largest first-order violation of the l1 optimality conditions."""
        g = self.gram @ w - self.corr
        on = w != 0.0
        viol_on = np.abs(g[on] + lam * np.sign(w[on]))
        viol_off = np.maximum(np.abs(g[~on]) - lam, 0.0)
        worst = 0.0
        if viol_on.size:
            worst = max(worst, float(viol_on.max()))
        if viol_off.size:
            worst = max(worst, float(viol_off.max()))
        return worst

    def objective(self, w: np.ndarray, lam: float) -> float:
        """0.5*w'Gw - b'w + lam*||w||_1 (data constant dropped)."""
        w = np.asarray(w, float)
        return float(0.5 * w @ (self.gram @ w) - self.corr @ w
                     + lam * np.abs(w).sum())

    def solve(self, lam: float, w0: np.ndarray | None = None) -> LassoResult:
        if lam < 0:
            raise ValueError("lam must be >= 0")
        n = self.n_features
        if w0 is None:
            w = np.zeros(n, dtype=np.float64)
        else:
            w = np.ascontiguousarray(np.ravel(w0), dtype=np.float64).copy()
            if w.shape[0] != n:
                raise ValueError("warm start has wrong length")
        n_iter, max_update = _kernel.cd_lasso_gram(
            self.gram, self.corr, float(lam), self.tol, self.max_iter, w
        )
        converged = n_iter < self.max_iter or max_update < self.tol
        kkt = self.kkt_residual(w, lam)
        if not converged and kkt > KKT_RAISE_TOL:
            raise ConvergenceError(
                f"coordinate descent hit max_iter={self.max_iter} with "
                f"first-order violation {kkt:.3e}",
                kkt_residual=kkt,
            )
        return LassoResult(
            w=w,
            n_iter=n_iter,
            converged=converged,
            kkt_residual=kkt,
            max_update=max_update,
        )


@dataclass
class LassoProblem:
    """One l1-regularized least-squares instance.

    Minimize 0.5*||design @ w - target||^2 + lam*||w||_1.
    """

    design: np.ndarray
    target: np.ndarray
    lam: float
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        d = np.asarray(self.design, dtype=np.float64)
        t = np.ravel(np.asarray(self.target, dtype=np.float64))
        if d.ndim != 2:
            raise ValueError("design must be 2-D")
        if t.shape[0] != d.shape[0]:
            raise ValueError(
                f"target length {t.shape[0]} does not match {d.shape[0]} rows"
            )
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        self.design = d
        self.target = t

    def engine(self) -> GramLasso:
        return GramLasso(
            self.design.T @ self.design,
            self.design.T @ self.target,
            tol=self.tol,
            max_iter=self.max_iter,
        )


def lasso(prob: LassoProblem, w0: np.ndarray | None = None) -> LassoResult:
    """Solve one LassoProblem by cyclic coordinate descent."""
    return prob.engine().solve(prob.lam, w0=w0)


def pinv_solve(
    design: np.ndarray, target: np.ndarray, rcond: float = 1e-10
) -> np.ndarray:
    """Minimum-norm least-squares solution with SVD cutoff at rcond*sigma_max."""
    d = np.asarray(design, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if d.ndim != 2 or d.size == 0:
        raise ValueError("design must be a nonempty 2-D matrix")
    if t.shape[0] != d.shape[0]:
        raise ValueError("target rows do not match design rows")
    sol, _, _, _ = np.linalg.lstsq(d, t, rcond=rcond)
    return sol
