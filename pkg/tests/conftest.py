import numpy as np
import pytest

from crlbpf import crlb, umv
from crlbpf.model import SystemModel, building_occupancy_scenario, random_model, two_dim_scenario
from crlbpf.moments import assemble_window, init_moments, record_sigma, step_moments


@pytest.fixture
def two_dim():
    return two_dim_scenario()


@pytest.fixture
def building():
    return building_occupancy_scenario()


def scalar_model(F=0.75, G=1.75, H=1.0, Q=0.1, R=0.05, x0=0.01, P0=0.01) -> SystemModel:
    return SystemModel.time_invariant([[F]], [[G]], [[H]], [[Q]], [[R]], [x0], [[P0]], name="scalar")


def random_instances(n: int, seed: int, max_dx: int = 4, max_dd: int = 2, max_ns: int = 4,
                     max_k: int = 8, identifiable: bool = True):
    """Random time-varying systems with a window and horizon.

    With ``identifiable`` the horizon keeps ``(k - N_s + 1) * dim_d <= dim_x``
    so the Fisher matrix of all past inputs is nonsingular.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        dx = int(rng.integers(1, max_dx + 1))
        dd = int(rng.integers(1, min(dx, max_dd) + 1))
        dy = int(rng.integers(dd, dx + 1))
        ns = int(rng.integers(2, max_ns + 1))
        k_hi = max_k
        if identifiable:
            k_hi = min(max_k, ns - 1 + dx // dd)
        if k_hi < ns:
            continue
        k = int(rng.integers(ns, k_hi + 1))
        out.append((random_model(rng, dx, dy, dd), ns, k))
    return out


def random_sigmas(rng, dim, n):
    out = []
    for _ in range(n):
        a = rng.standard_normal((dim, dim))
        out.append(a @ a.T / dim + 0.05 * np.eye(dim))
    return out


def window_setup(model, window, k, sigmas):
    """Moments, workspace and windowed bound for step ``k``."""
    gains, _ = umv.gain_sequence(model, k)
    mw = record_sigma(init_moments(model, gains[0], window), sigmas[0])
    for t in range(1, k + 1):
        mw = record_sigma(step_moments(mw, model, gains[t], t), sigmas[t])
    wb = assemble_window(mw)
    ws = crlb.build_tilde_L(model, gains[-window:], k)
    A = crlb.pcrlb_A(wb, ws)
    PB, _ = crlb.pcrlb(sigmas[k], A, model.G(k - 1))
    return gains, wb, ws, A, PB


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts collected by ``test_acceptance``."""
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
