import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlbpf.errors import AssumptionError
from crlbpf.experiments import ExperimentConfig, dp_rows
from crlbpf.model import simulate
from crlbpf.threat import (
    adversary_errors, adversary_mse, dp_delta, dp_report, infer_input, q_function, sensitivity,
)

from conftest import scalar_model


class TestInferInput:
    def test_scalar(self):
        est = infer_input(np.array([5.0]), np.array([2.0]), [[0.75]], [[1.75]])
        assert est.d_hat[0] == pytest.approx(2.0)
        assert est.d_hat_rounded[0] == 2

    def test_rounds_half_away(self):
        est = infer_input(np.array([2.5, -2.5]), np.zeros(2), np.eye(2), np.eye(2))
        np.testing.assert_array_equal(est.d_hat_rounded, [3, -3])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dx=st.integers(1, 4), dd=st.integers(1, 4))
    def test_exact_on_noiseless_data(self, seed, dx, dd):
        dd = min(dd, dx)
        rng = np.random.default_rng(seed)
        F = rng.standard_normal((dx, dx))
        G = rng.standard_normal((dx, dd)) + 2 * np.eye(dx, dd)
        x_prev, d = rng.standard_normal(dx), rng.standard_normal(dd)
        est = infer_input(F @ x_prev + G @ d, x_prev, F, G)
        np.testing.assert_allclose(est.d_hat, d, atol=1e-8 * (1 + np.linalg.cond(G)))

    def test_batched_rows(self):
        x_k = np.array([[5.0], [3.75]])
        x_km1 = np.array([[2.0], [1.0]])
        np.testing.assert_allclose(infer_input(x_k, x_km1, [[0.75]], [[1.75]]).d_hat, [[2.0], [1.714285714]],
                                   rtol=1e-8)

    def test_rank_deficient_G(self):
        with pytest.raises(AssumptionError):
            infer_input(np.zeros(2), np.zeros(2), np.eye(2), np.zeros((2, 1)))


class TestAdversaryMse:
    def test_zero_on_noise_free_states(self, two_dim):
        model, signal = two_dim
        traj = simulate(model, signal, 12, 0, noise_free=True)
        mse = adversary_mse(traj.inputs[None], traj.states[None], model)
        np.testing.assert_allclose(mse, 0.0, atol=1e-18)

    def test_shapes(self, two_dim):
        model, signal = two_dim
        trajs = [simulate(model, signal, 6, s) for s in range(4)]
        d = np.stack([t.inputs for t in trajs])
        x = np.stack([t.states for t in trajs])
        assert adversary_errors(d, x, model).shape == (4, 6)
        assert adversary_mse(d, x, model).shape == (6,)

    def test_needs_two_estimates(self):
        with pytest.raises(ValueError):
            adversary_errors(np.zeros((1, 0, 1)), np.zeros((1, 1, 1)), scalar_model())


class TestSensitivity:
    def test_scalar_unbiased_gain(self):
        # K H G = G, so the sensitivity is rho |G| / sqrt(P).
        assert sensitivity([[0.5]], [[2.0]], [[1.75]], [[4.0]], rho=1.0) == pytest.approx(0.875)
        assert sensitivity([[0.5]], [[2.0]], [[1.75]], [[4.0]], rho=3.0) == pytest.approx(2.625)

    def test_zero_radius(self):
        assert sensitivity(np.eye(2), np.eye(2), np.ones((2, 1)), np.eye(2), rho=0.0) == 0.0

    def test_more_noise_lowers_sensitivity(self):
        rng = np.random.default_rng(0)
        K, H, G = rng.standard_normal((3, 2)), rng.standard_normal((2, 3)), rng.standard_normal((3, 1))
        P = np.eye(3) + 0.1 * np.ones((3, 3))
        Sigma = np.diag([0.5, 0.2, 0.3])
        assert sensitivity(K, H, G, P + 2 * Sigma) < sensitivity(K, H, G, P + Sigma)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            sensitivity(np.eye(1), np.eye(1), np.eye(1), np.eye(1), rho=-1.0)


class TestDelta:
    def test_q_at_zero(self):
        assert abs(q_function(0.0) - 0.5) <= 1e-14

    def test_reference_value(self):
        delta, xi = dp_delta(1.0, 2.0)
        assert xi == -0.5
        assert delta == pytest.approx(0.69146, abs=1e-4)
        assert delta == pytest.approx(0.5 * math.erfc(-0.5 / math.sqrt(2)), rel=1e-12)

    def test_median(self):
        assert dp_delta(2.0, 2.0)[0] == pytest.approx(0.5, abs=1e-14)

    @pytest.mark.parametrize("x", [0.0, 0.3, 1.7, 5.0, 12.0])
    def test_symmetry(self, x):
        assert abs(q_function(x) + q_function(-x) - 1) <= 1e-14

    @pytest.mark.parametrize("x", [0.5, 2.0, 8.0, 20.0])
    def test_against_math_erfc(self, x):
        ref = 0.5 * math.erfc(x / math.sqrt(2))
        assert q_function(x) == pytest.approx(ref, rel=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(dq=st.floats(1e-3, 50), e1=st.floats(0, 100), e2=st.floats(0, 100))
    def test_monotone_in_epsilon(self, dq, e1, e2):
        lo, hi = sorted([e1, e2])
        assert dp_delta(hi, dq)[0] <= dp_delta(lo, dq)[0] + 1e-15

    def test_limit(self):
        assert dp_delta(1e4, 1.0)[0] == 0.0

    def test_zero_sensitivity(self):
        assert dp_delta(0.5, 0.0) == (0.0, math.inf)

    def test_zero_epsilon_at_least_half(self):
        assert dp_delta(0.0, 0.3)[0] >= 0.5

    def test_report(self):
        r = dp_report(1.0, [[0.5]], [[2.0]], [[1.75]], [[4.0]])
        assert r.sensitivity == pytest.approx(0.875)
        assert r.delta == pytest.approx(dp_delta(1.0, 0.875)[0])


def test_delta_non_increasing_in_gamma():
    cfg = ExperimentConfig(gamma=[9.0, 10.0, 11.0, 12.0, 13.0])
    rows = dp_rows(cfg)
    for eps in cfg.epsilon_grid:
        deltas = [r[2] for r in rows if r[1] == eps]
        assert all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))
