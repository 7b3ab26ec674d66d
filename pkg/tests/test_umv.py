import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlbpf import umv
from crlbpf.errors import AssumptionError, DimensionError
from crlbpf.model import SystemModel, random_model, simulate, simulate_batch

from conftest import scalar_model


class TestGain:
    def test_scalar_full_measurement(self):
        # H = 1: the constraint K H G = G forces K = 1 and the error is R.
        model = scalar_model()
        st0 = umv.init(model, [0.3])
        assert st0.gain[0, 0] == pytest.approx(1.0)
        assert st0.S_hat_umv[0, 0] == pytest.approx(0.05)
        st1 = umv.step(st0, [0.7], model)
        assert st1.x_hat_umv[0] == pytest.approx(0.7)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dx=st.integers(1, 4), dd=st.integers(1, 2))
    def test_unbiasedness_constraint(self, seed, dx, dd):
        dd = min(dd, dx)
        rng = np.random.default_rng(seed)
        dy = int(rng.integers(dd, dx + 1))
        model = random_model(rng, dx, dy, dd)
        gains, covs = umv.gain_sequence(model, 5)
        for k, K in enumerate(gains):
            G = model.G(max(k - 1, 0))
            np.testing.assert_allclose(K @ model.H(k) @ G, G, atol=1e-8)
            np.testing.assert_allclose(covs[k], covs[k].T, atol=1e-12)
            assert np.linalg.eigvalsh(covs[k]).min() > -1e-10

    def test_two_dim_gain(self, two_dim):
        model, _ = two_dim
        gains, covs = umv.gain_sequence(model, 60)
        # Steady state: error covariance trace converges.
        assert abs(np.trace(covs[-1]) - np.trace(covs[-2])) < 1e-10
        np.testing.assert_allclose(gains[1] @ model.G(0), model.G(0), atol=1e-12)

    def test_rank_condition_violation(self):
        model = SystemModel.time_invariant(np.eye(2), [[1.0], [0.0]], [[0.0, 1.0]], np.eye(2), [[1.0]],
                                           [0, 0], np.eye(2))
        with pytest.raises(AssumptionError):
            umv.init(model, [0.0])

    def test_measurement_shape(self, two_dim):
        model, _ = two_dim
        with pytest.raises(DimensionError):
            umv.init(model, [1.0, 2.0, 3.0])


class TestEstimates:
    def test_noise_free_data_is_recovered_exactly(self, two_dim):
        model, signal = two_dim
        tr = simulate(model, signal, 30, seed=2, noise_free=True)
        states = umv.run_filter(model, tr.measurements)
        est = np.array([s.x_hat_umv for s in states])
        np.testing.assert_allclose(est, tr.states, atol=1e-9)

    def test_batch_matches_sequential(self, two_dim):
        model, signal = two_dim
        trs = [simulate(model, signal, 15, seed=s) for s in range(4)]
        ys = np.stack([t.measurements for t in trs])
        batch = umv.filter_batch(model, ys)
        for r, t in enumerate(trs):
            seq = np.array([s.x_hat_umv for s in umv.run_filter(model, t.measurements)])
            np.testing.assert_allclose(batch[r], seq, atol=1e-12)

    def test_gain_history_window(self, two_dim):
        model, signal = two_dim
        tr = simulate(model, signal, 6, seed=0)
        states = umv.run_filter(model, tr.measurements, window=3)
        assert len(states[0].gain_history) == 1
        assert len(states[-1].gain_history) == 3
        np.testing.assert_array_equal(states[-1].gain_history[-2], states[-2].gain)

    def test_error_covariance_matches_monte_carlo(self, two_dim):
        model, signal = two_dim
        d = signal.sequence(10, np.random.default_rng(0))
        xs, ys = simulate_batch(model, d, 40_000, np.random.default_rng(1))
        est = umv.filter_batch(model, ys)
        err = est[:, 10] - xs[:, 10]
        _, covs = umv.gain_sequence(model, 10)
        assert np.abs(err.mean(axis=0)).max() < 0.03  # unbiased despite the unknown input
        np.testing.assert_allclose(np.cov(err.T), covs[10], rtol=0.05, atol=0.02)
