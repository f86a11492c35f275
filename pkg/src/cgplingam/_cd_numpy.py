"""Pure-Python fallback for the compiled coordinate-descent kernel.

Kept semantically identical to cgplingam._cd_fast.cd_lasso_gram so the two
backends are interchangeable; see benchmarks/bench_lasso.py for the speed
comparison.
"""

from __future__ import annotations

import numpy as np


def cd_lasso_gram(
    G: np.ndarray,
    b: np.ndarray,
    lam: float,
    tol: float,
    max_iter: int,
    w: np.ndarray,
) -> tuple[int, float]:
    """Cyclic coordinate descent on 0.5*w'Gw - b'w + lam*||w||_1, in place.

    Returns (n_iter, last_max_update); converged when the largest absolute
    coordinate change in a full sweep is below ``tol``.
    """
    n = G.shape[0]
    if G.shape[1] != n or b.shape[0] != n or w.shape[0] != n:
        raise ValueError("shape mismatch between G, b and w")

    s = G @ w
    max_update = 0.0
    for it in range(max_iter):
        max_update = 0.0
        for j in range(n):
            gjj = G[j, j]
            wj_old = w[j]
            if gjj <= 0.0:
                # zero column in the design: only the penalty sees w_j
                wj_new = 0.0
            else:
                rho = b[j] - s[j] + gjj * wj_old
                wj_new = np.sign(rho) * max(abs(rho) - lam, 0.0) / gjj
            d = wj_new - wj_old
            if d != 0.0:
                w[j] = wj_new
                s += G[:, j] * d
            max_update = max(max_update, abs(d))
        if max_update < tol:
            return it + 1, max_update
    return max_iter, max_update
