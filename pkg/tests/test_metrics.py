"""Metric tests against hand formulas and naive per-sample oracles."""

import numpy as np
import pytest

from cgplingam.graphs import DagMatrix, PolyCoeffs
from cgplingam.metrics import (
    Metrics,
    compute_metrics,
    err_c,
    prediction_gap,
    rmse_a,
    shd,
    snr_a,
)
from cgplingam.pipeline import FitConfig, fit
from cgplingam.synth import GenConfig, make_ground_truth


def naive_gap(x, dag_hat, coeffs_hat, dag_true, coeffs_true, causal):
    """Per-sample loop directly transcribing the metric definition."""
    n, k = x.shape
    m_max = max(coeffs_hat.order, coeffs_true.order)

    def sq_err(dag, coeffs, t):
        a = dag.weights
        lagged = sum(
            coeffs.filter_matrix(dag, i) @ x[:, t - i]
            for i in range(1, coeffs.order + 1)
        )
        if causal:
            pred = np.linalg.inv(np.eye(n) - a) @ lagged
        else:
            pred = a @ x[:, t] + lagged
        return np.sum((x[:, t] - pred) ** 2) / n

    hat = np.mean([sq_err(dag_hat, coeffs_hat, t) for t in range(m_max, k)])
    ref = np.mean([sq_err(dag_true, coeffs_true, t) for t in range(m_max, k)])
    return hat - ref


class TestSnr:
    def test_exact_recovery_is_infinite(self):
        a = np.zeros((3, 3))
        a[1, 0] = 0.5
        assert snr_a(a, a.copy()) == np.inf

    def test_zero_estimate_is_zero_db(self):
        a = np.zeros((4, 4))
        a[2, 0], a[3, 1] = 0.7, -0.4
        assert snr_a(a, np.zeros((4, 4))) == 0.0

    def test_ten_percent_error_is_twenty_db(self):
        rng = np.random.default_rng(0)
        a = np.tril(rng.normal(size=(5, 5)), k=-1)
        e = np.tril(rng.normal(size=(5, 5)), k=-1)
        a_hat = a + 0.1 * np.linalg.norm(a) * e / np.linalg.norm(e)
        assert snr_a(a, a_hat) == pytest.approx(20.0, abs=1e-10)

    def test_accepts_dag_matrices(self):
        a = np.zeros((3, 3))
        a[1, 0] = 0.5
        assert snr_a(DagMatrix(a), DagMatrix(a.copy())) == np.inf

    def test_rmse_snr_identity(self):
        rng = np.random.default_rng(1)
        a = np.tril(rng.normal(size=(4, 4)), k=-1)
        a_hat = a + 0.03 * np.tril(rng.normal(size=(4, 4)), k=-1)
        assert rmse_a(a, a_hat) == pytest.approx(
            10.0 ** (-snr_a(a, a_hat) / 20.0), rel=1e-12
        )


class TestErrC:
    def test_exact_is_zero_without_flag(self):
        c = PolyCoeffs(order=2, coeffs=np.array([0.5, 0.1, 0.2, 0.0, 0.05]))
        value, mismatch = err_c(c, c)
        assert value == 0.0
        assert not mismatch

    def test_hand_value(self):
        c = np.array([3.0, 4.0])
        chat = np.array([3.0, 2.0])
        value, mismatch = err_c(c, chat)
        assert value == pytest.approx(2.0 / 5.0)
        assert not mismatch

    def test_order_mismatch_zero_pads_and_flags(self):
        c_true = PolyCoeffs(order=2, coeffs=np.array([0.5, 0.1, 0.2, 0.0, 0.05]))
        c_hat = PolyCoeffs(order=1, coeffs=np.array([0.5, 0.1]))
        value, mismatch = err_c(c_true, c_hat)
        expect = np.linalg.norm([0.2, 0.0, 0.05]) / np.linalg.norm(c_true.coeffs)
        assert value == pytest.approx(expect)
        assert mismatch

    def test_padding_is_symmetric(self):
        v1, f1 = err_c(np.array([1.0, 2.0]), np.array([1.0, 2.0, 3.0]))
        assert f1
        assert v1 == pytest.approx(3.0 / np.sqrt(5.0))


class TestShd:
    def test_identical_supports(self):
        a = np.zeros((3, 3))
        a[1, 0] = 0.5
        assert shd(a, a.copy(), 0.05) == 0

    def test_threshold_applies_to_both_sides(self):
        a = np.zeros((3, 3))
        a[1, 0] = 0.04  # below threshold: not an edge
        a_hat = np.zeros((3, 3))
        a_hat[2, 1] = 0.2
        assert shd(a, a_hat, 0.05) == 1

    def test_reversed_edge_counts_twice(self):
        a = np.zeros((2, 2))
        a[1, 0] = 0.5
        a_hat = np.zeros((2, 2))
        a_hat[0, 1] = 0.5
        assert shd(a, a_hat, 0.05) == 2


class TestPredictionGap:
    def make_instance(self, seed=0):
        gt = make_ground_truth(GenConfig(n_nodes=4, n_samples=260, order=2, seed=seed))
        x_test = gt.series.data[:, 200:]
        return gt, x_test

    def test_exact_parameters_give_zero(self):
        gt, x_test = self.make_instance()
        for causal in (False, True):
            assert (
                prediction_gap(
                    x_test, gt.dag, gt.coeffs, gt.dag, gt.coeffs, causal=causal
                )
                == 0.0
            )

    @pytest.mark.parametrize("causal", [False, True])
    def test_matches_naive_loop(self, causal):
        gt, x_test = self.make_instance(seed=3)
        rng = np.random.default_rng(7)
        dag_hat = DagMatrix(gt.dag.weights * 0.8)
        coeffs_hat = PolyCoeffs(
            order=2, coeffs=gt.coeffs.coeffs + 0.05 * rng.normal(size=5)
        )
        got = prediction_gap(x_test, dag_hat, coeffs_hat, gt.dag, gt.coeffs, causal)
        expect = naive_gap(x_test, dag_hat, coeffs_hat, gt.dag, gt.coeffs, causal)
        assert got == pytest.approx(expect, rel=1e-10)

    def test_order_mismatch_uses_common_window(self):
        gt, x_test = self.make_instance(seed=5)
        coeffs_hat = PolyCoeffs(order=3, coeffs=np.zeros(9))
        dag_hat = DagMatrix(np.zeros((4, 4)))
        got = prediction_gap(x_test, dag_hat, coeffs_hat, gt.dag, gt.coeffs)
        expect = naive_gap(x_test, dag_hat, coeffs_hat, gt.dag, gt.coeffs, False)
        assert got == pytest.approx(expect, rel=1e-10)

    def test_zero_model_is_worse_on_dependent_data(self):
        gt, x_test = self.make_instance(seed=1)
        dag_hat = DagMatrix(np.zeros((4, 4)))
        coeffs_hat = PolyCoeffs(order=2, coeffs=np.zeros(5))
        assert prediction_gap(x_test, dag_hat, coeffs_hat, gt.dag, gt.coeffs) > 0.0

    def test_too_short_split_raises(self):
        gt, _ = self.make_instance()
        with pytest.raises(ValueError, match="test split"):
            prediction_gap(
                gt.series.data[:, :2], gt.dag, gt.coeffs, gt.dag, gt.coeffs
            )


class TestComputeMetrics:
    def test_perfect_recovery(self):
        gt = make_ground_truth(GenConfig(n_nodes=4, n_samples=260, order=2, seed=2))
        report = fit(gt.series.data[:, :200], FitConfig(order=2, seed=2))
        perfect = Metrics(
            snr_a=np.inf, err_c=0.0, err_eps=0.0, err_eps_causal=0.0,
            shd=0, rmse_a=0.0, order_mismatch=False,
        )
        # feed the truth back through the assembler via a doctored report
        report.dag = gt.dag
        report.coeffs = gt.coeffs
        got = compute_metrics(gt, report, gt.series.data[:, 200:])
        assert got == perfect

    def test_fitted_report_fields(self):
        gt = make_ground_truth(GenConfig(n_nodes=5, n_samples=900, order=2, seed=4))
        report = fit(gt.series.data[:, :700], FitConfig(order=2, seed=4))
        got = compute_metrics(gt, report, gt.series.data[:, 700:])
        assert np.isfinite(got.snr_a)
        assert got.err_c >= 0.0
        assert isinstance(got.shd, int) and got.shd >= 0
        assert got.rmse_a == pytest.approx(10.0 ** (-got.snr_a / 20.0), rel=1e-12)
        assert not got.order_mismatch
        d = got.as_dict()
        assert set(d) == {
            "snr_a_db", "err_c", "err_eps", "err_eps_causal",
            "shd", "rmse_a", "order_mismatch",
        }

    def test_order_mismatch_flag_propagates(self):
        gt = make_ground_truth(GenConfig(n_nodes=4, n_samples=400, order=2, seed=6))
        report = fit(gt.series.data[:, :300], FitConfig(order=3, seed=6))
        got = compute_metrics(gt, report, gt.series.data[:, 300:])
        assert got.order_mismatch
        assert np.isfinite(got.err_c)

    def test_node_count_mismatch_raises(self):
        gt = make_ground_truth(GenConfig(n_nodes=4, n_samples=300, order=2, seed=0))
        gt3 = make_ground_truth(GenConfig(n_nodes=3, n_samples=300, order=2, seed=0))
        report = fit(gt3.series.data[:, :200], FitConfig(order=2, seed=0))
        with pytest.raises(ValueError, match="node-count"):
            compute_metrics(gt, report, gt.series.data[:, 200:])
