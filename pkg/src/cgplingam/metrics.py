"""Recovery-quality metrics: graph SNR, coefficient error, excess
prediction error on held-out data, support Hamming distance.

All metrics are scale-free. The two prediction-error variants differ in
the predictor: ``err_eps`` scores the structural fit A x(k) + sum_i P_i
x(k-i), which keeps the current sample on the right-hand side, while
``err_eps_causal`` scores the one-step-ahead forecast
(I-A)^{-1} sum_i P_i x(k-i) built from past samples only. Both are
reported as the gap between the fitted parameters and the generating
ones, averaged over the test samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import DagMatrix, PolyCoeffs, support
from .pipeline import FitReport
from .synth import GroundTruth, TimeSeries


def _weights(a) -> np.ndarray:
    if isinstance(a, DagMatrix):
        return a.weights
    return np.asarray(a, dtype=float)


def _flat_coeffs(c) -> np.ndarray:
    if isinstance(c, PolyCoeffs):
        return c.coeffs
    return np.asarray(c, dtype=float).ravel()


@dataclass(frozen=True)
class Metrics:
    snr_a: float
    err_c: float
    err_eps: float
    err_eps_causal: float
    shd: int
    rmse_a: float
    order_mismatch: bool

    def as_dict(self) -> dict:
        return {
            "snr_a_db": self.snr_a,
            "err_c": self.err_c,
            "err_eps": self.err_eps,
            "err_eps_causal": self.err_eps_causal,
            "shd": self.shd,
            "rmse_a": self.rmse_a,
            "order_mismatch": self.order_mismatch,
        }


def snr_a(a_true, a_hat) -> float:
    """20 log10(||A||_F / ||A_hat - A||_F); +inf on exact recovery."""
    a, ahat = _weights(a_true), _weights(a_hat)
    gap = float(np.linalg.norm(ahat - a))
    if gap == 0.0:
        return np.inf
    return float(20.0 * np.log10(np.linalg.norm(a) / gap))


def rmse_a(a_true, a_hat) -> float:
    """||A_hat - A||_F / ||A||_F."""
    a, ahat = _weights(a_true), _weights(a_hat)
    return float(np.linalg.norm(ahat - a) / np.linalg.norm(a))


def err_c(c_true, c_hat) -> tuple[float, bool]:
    """Relative l2 error of the stacked coefficient vector.

    Vectors are stored lag-block first, so a lower-order vector is a
    prefix of a higher-order one; on an order mismatch the shorter side
    is zero-padded and the returned flag is set.
    """
    c, chat = _flat_coeffs(c_true), _flat_coeffs(c_hat)
    mismatch = c.size != chat.size
    width = max(c.size, chat.size)
    c = np.pad(c, (0, width - c.size))
    chat = np.pad(chat, (0, width - chat.size))
    return float(np.linalg.norm(chat - c) / np.linalg.norm(c)), mismatch


def shd(a_true, a_hat, thresh: float) -> int:
    """Entrywise support mismatches after thresholding both at |.| > thresh.

    A reversed edge counts as two mismatches (one missing, one spurious).
    """
    s_true = support(_weights(a_true), zero_tol=thresh)
    s_hat = support(_weights(a_hat), zero_tol=thresh)
    return int((s_true ^ s_hat).sum())


def _structural_residuals(x: np.ndarray, dag, coeffs, width: int) -> np.ndarray:
    """x(k) - A x(k) - sum_i P_i(A, c) x(k-i) over the last ``width`` samples."""
    a = _weights(dag)
    n, k = x.shape
    resid = (np.eye(n) - a) @ x[:, k - width :]
    for i in range(1, coeffs.order + 1):
        p_i = coeffs.filter_matrix(dag, i)
        resid -= p_i @ x[:, k - width - i : k - i]
    return resid


def _forecast_residuals(x: np.ndarray, dag, coeffs, width: int) -> np.ndarray:
    """x(k) minus the one-step forecast (I-A)^{-1} sum_i P_i x(k-i)."""
    a = _weights(dag)
    n, k = x.shape
    inv = np.linalg.inv(np.eye(n) - a)
    pred = np.zeros((n, width))
    for i in range(1, coeffs.order + 1):
        p_i = coeffs.filter_matrix(dag, i)
        pred += p_i @ x[:, k - width - i : k - i]
    return x[:, k - width :] - inv @ pred


def prediction_gap(
    x, dag_hat, coeffs_hat: PolyCoeffs, dag_true, coeffs_true: PolyCoeffs,
    causal: bool = False,
) -> float:
    """Mean squared per-node prediction error of the estimate minus the
    same quantity under the generating parameters, over a common sample
    window (both sides conditioned on max(M_hat, M_true) lags)."""
    data = x.data if isinstance(x, TimeSeries) else np.asarray(x, dtype=float)
    # canonical layout: strided views and transposed reads would otherwise
    # change BLAS summation order and the last bits of every metric
    data = np.ascontiguousarray(data)
    n, k = data.shape
    m_max = max(coeffs_hat.order, coeffs_true.order)
    width = k - m_max
    if width < 1:
        raise ValueError(f"test split needs more than {m_max} samples, got {k}")
    resid_fn = _forecast_residuals if causal else _structural_residuals
    got = resid_fn(data, dag_hat, coeffs_hat, width)
    ref = resid_fn(data, dag_true, coeffs_true, width)
    return float(np.mean((got**2).sum(axis=0) / n) - np.mean((ref**2).sum(axis=0) / n))


def compute_metrics(truth: GroundTruth, report: FitReport, test_split) -> Metrics:
    """All recovery metrics for one fitted report against its ground truth.

    ``test_split`` must be a contiguous block disjoint from the samples the
    report was fitted on; supports are thresholded at the report's
    prune_thresh on both sides.
    """
    a_true, a_hat = truth.dag, report.dag
    if a_true.n != a_hat.n:
        raise ValueError("node-count mismatch between truth and report")
    value, mismatch = err_c(truth.coeffs, report.coeffs)
    return Metrics(
        snr_a=snr_a(a_true, a_hat),
        err_c=value,
        err_eps=prediction_gap(
            test_split, a_hat, report.coeffs, a_true, truth.coeffs
        ),
        err_eps_causal=prediction_gap(
            test_split, a_hat, report.coeffs, a_true, truth.coeffs, causal=True
        ),
        shd=shd(a_true, a_hat, report.config.prune_thresh),
        rmse_a=rmse_a(a_true, a_hat),
        order_mismatch=mismatch,
    )
