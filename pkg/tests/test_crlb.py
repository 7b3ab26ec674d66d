import numpy as np
import pytest

from crlbpf import crlb, umv
from crlbpf.errors import OracleHorizonError
from crlbpf.pipeline import PrivacyConfig, run_pipeline

from conftest import random_instances, random_sigmas, scalar_model, window_setup

INSTANCES = random_instances(20, seed=7)


class TestTildeL:
    def test_scalar_two_window(self):
        m = scalar_model(F=0.75, G=1.75)
        ws = crlb.build_tilde_L(m, [np.eye(1)] * 2, 2)
        np.testing.assert_allclose(ws.L_tilde, [[1.75, 0.0], [0.75 * 1.75, 1.75]])
        assert ws.first_input == 0

    def test_window_at_origin_drops_missing_input(self):
        m = scalar_model()
        ws = crlb.build_tilde_L(m, [np.eye(1)] * 2, 1)
        assert ws.L_tilde.shape == (2, 1)
        assert ws.L11.shape == (1, 0)

    @pytest.mark.parametrize("model, window, k", INSTANCES[:10])
    def test_matches_full_sensitivity(self, model, window, k):
        gains, _ = umv.gain_sequence(model, k)
        ws = crlb.build_tilde_L(model, gains, k, window)
        L = crlb.full_L(model, gains, k, window)
        np.testing.assert_allclose(ws.L_tilde, L[:, -window * model.dim_d:], atol=1e-10)

    def test_too_few_gains(self):
        with pytest.raises(ValueError):
            crlb.build_tilde_L(scalar_model(), [np.eye(1)], 3, window=2)


class TestPcrlb:
    def test_scalar_value(self):
        PB, tr = crlb.pcrlb(np.array([[0.24]]), np.array([[0.25]]), np.array([[1.75]]))
        assert tr == pytest.approx(0.16)
        assert PB.shape == (1, 1)

    @pytest.mark.parametrize("model, window, k", INSTANCES[:8])
    def test_equals_windowed_fisher_inverse(self, model, window, k):
        sig = random_sigmas(np.random.default_rng(k), model.dim_x, k + 1)
        _, wb, ws, _, PB = window_setup(model, window, k, sig)
        info = ws.L_tilde.T @ np.linalg.solve(wb.p_priv, ws.L_tilde)
        dd = model.dim_d
        np.testing.assert_allclose(PB, np.linalg.inv(info)[-dd:, -dd:], rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("model, window, k", INSTANCES[:8])
    def test_A_dominates_schur_complement(self, model, window, k):
        sig = random_sigmas(np.random.default_rng(k + 1), model.dim_x, k + 1)
        _, wb, _, A, _ = window_setup(model, window, k, sig)
        schur = wb.p_now - wb.cross @ np.linalg.solve(wb.p_past, wb.cross.T)
        assert np.linalg.eigvalsh(A - schur).min() >= -1e-9

    @pytest.mark.parametrize("model, window, k", INSTANCES[:8])
    def test_A_by_brute_force_conditioning(self, model, window, k):
        # Treat the older inputs as a flat prior with variance t and condition
        # the current estimate on the past window; t -> inf recovers A~.
        sig = random_sigmas(np.random.default_rng(k + 2), model.dim_x, k + 1)
        _, wb, ws, A, _ = window_setup(model, window, k, sig)
        L = np.vstack([ws.L11, ws.L21])
        t = 1e7
        C = wb.p_priv + t * L @ L.T
        C[-model.dim_x:, -model.dim_x:] -= sig[k]
        m = wb.p_past.shape[0]
        brute = C[m:, m:] - C[m:, :m] @ np.linalg.solve(C[:m, :m], C[:m, m:])
        np.testing.assert_allclose(brute, A, rtol=1e-4, atol=1e-5)

    def test_more_noise_means_larger_bound(self, two_dim):
        model, _ = two_dim
        A = np.diag([0.3, 0.7])
        G = model.G(0)
        small, _ = crlb.pcrlb(0.1 * np.eye(2), A, G)
        big, _ = crlb.pcrlb(np.diag([0.5, 0.2]), A, G)
        assert np.linalg.eigvalsh(big - small).min() >= -1e-12

    def test_steady_state(self, two_dim):
        model, signal = two_dim
        run = run_pipeline(model, signal, 80, PrivacyConfig(gamma=0.0, N_s=3))
        tr = np.array([o.trace_pcrlb for o in run.outputs[30:]])
        assert np.max(np.abs(tr / tr[0] - 1)) < 0.01


class TestOracle:
    def test_scalar_fisher(self):
        # One input observed through one perfect-gain estimate: I = G^2 / var.
        m = scalar_model(F=0.0, G=2.0, H=1.0, Q=0.0, R=0.5, P0=1e-9)
        gains = [np.eye(1), np.eye(1)]
        info = crlb.fisher_oracle(m, gains, [0.5 * np.eye(1)], 1, 1)
        assert info[0, 0] == pytest.approx(4.0 / 1.0)

    def test_horizon_guard(self, two_dim):
        model, _ = two_dim
        gains, _ = umv.gain_sequence(model, 13)
        with pytest.raises(OracleHorizonError):
            crlb.full_L(model, gains, 13, 3)
        with pytest.raises(ValueError):
            crlb.full_L(model, gains, 0, 3)
        assert crlb.full_L(model, gains, 13, 3, k_max=13).shape == (6, 13 * model.dim_d)

    @pytest.mark.parametrize("model, window, k", INSTANCES)
    def test_fisher_matches_finite_differences(self, model, window, k):
        gains, _ = umv.gain_sequence(model, k)
        sig = random_sigmas(np.random.default_rng(k + 3), model.dim_x, min(window, k + 1))
        info = crlb.fisher_oracle(model, gains, sig, k, window)
        d = np.random.default_rng(k).standard_normal((k, model.dim_d))
        fd = crlb.fisher_finite_difference(model, gains, sig, k, window, d, step=1e-5)
        assert np.linalg.norm(fd - info) <= 1e-4 * np.linalg.norm(info)

    @pytest.mark.parametrize("model, window, k", INSTANCES)
    def test_closed_form_matches_inverse_block(self, model, window, k):
        gains, _ = umv.gain_sequence(model, k)
        sig = random_sigmas(np.random.default_rng(k + 4), model.dim_x, window)
        B, _ = crlb.crlb_oracle(model, gains, sig, k, window)
        info = crlb.fisher_oracle(model, gains, sig, k, window)
        np.testing.assert_allclose(B, np.linalg.inv(info)[-model.dim_d:, -model.dim_d:],
                                   rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("model, window, k", INSTANCES[:5])
    def test_fisher_independent_of_inputs(self, model, window, k):
        gains, _ = umv.gain_sequence(model, k)
        sig = random_sigmas(np.random.default_rng(0), model.dim_x, window)
        rng = np.random.default_rng(1)
        a = crlb.fisher_finite_difference(model, gains, sig, k, window, np.zeros((k, model.dim_d)))
        b = crlb.fisher_finite_difference(model, gains, sig, k, window,
                                          100 * rng.standard_normal((k, model.dim_d)))
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(a)

    def test_singular_fisher_still_bounds_last_input(self, two_dim):
        # Four window inputs against a 2-dim state: the older ones are not all
        # identifiable but the last one is.
        model, _ = two_dim
        gains, _ = umv.gain_sequence(model, 6)
        sig = [1e-2 * np.eye(2)] * 3
        info = crlb.fisher_oracle(model, gains, sig, 6, 3)
        B, tr = crlb.crlb_oracle(model, gains, sig, 6, 3)
        np.testing.assert_allclose(B, crlb.crlb_from_fisher(info, model.dim_d), rtol=1e-6, atol=1e-9)


class TestApproximationError:
    @pytest.mark.parametrize("model, window, k", INSTANCES)
    def test_gap_equals_approximation_error(self, model, window, k):
        sig = random_sigmas(np.random.default_rng(k + 5), model.dim_x, k + 1)
        gains, _, _, _, PB = window_setup(model, window, k, sig)
        info = crlb.fisher_oracle(model, gains, sig[-window:], k, window)
        B = crlb.crlb_from_fisher(info, model.dim_d)
        e = crlb.approximation_error(info, window, model.dim_d)
        assert np.trace(B) >= np.trace(PB) - 1e-10
        # Some random draws are nearly unidentifiable with bounds near 1e6, so
        # the 1e-8 tolerance is taken relative to the size of the bound.
        scale = max(1.0, float(np.abs(B).max()))
        assert np.abs(B - PB - e).max() <= 1e-8 * scale
        assert np.linalg.eigvalsh(e).min() >= -1e-10

    def test_windowed_bound_from_fisher(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((6, 6))
        info = a @ a.T + np.eye(6)
        full = np.linalg.inv(info)[-1:, -1:]
        win = crlb.windowed_bound_from_fisher(info, 2, 1)
        np.testing.assert_allclose(full - win, crlb.approximation_error(info, 2, 1), atol=1e-12)

    def test_zero_when_decoupled(self):
        info = np.diag([2.0, 3.0, 5.0])
        np.testing.assert_array_equal(crlb.approximation_error(info, 2, 1), np.zeros((1, 1)))

    def test_zero_when_window_covers_everything(self):
        np.testing.assert_array_equal(crlb.approximation_error(np.eye(4), 4, 1), np.zeros((1, 1)))
