import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_dag_weights(n: int, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    """Strictly-lower-triangular random weights pushed through a random
    node relabeling. Oracle-side generator, independent of the package."""
    w = np.zeros((n, n))
    for i in range(1, n):
        for j in range(i):
            if rng.random() < p:
                w[i, j] = rng.uniform(0.3, 0.9) * rng.choice([-1.0, 1.0])
    perm = rng.permutation(n)
    return w[np.ix_(perm, perm)]
