"""Privacy-preserving estimation loop.

Each step runs the unbiased filter, advances the window moments, designs
the perturbation covariance from the windowed input bound, and publishes the
filter estimate plus a Gaussian perturbation drawn with that covariance.

Everything except the estimate itself and the perturbation draw is
independent of the data. :func:`plan` computes that part once for a model
and configuration; :func:`apply_plan` then replays it on any number of
trajectories and gives the same numbers as stepping :func:`pipeline_step`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import crlb, umv
from ._linalg import eig_sqrt
from .design import DEFAULT_SIGMA_FLOOR, design_noise
from .model import InputSignal, SystemModel, Trajectory, seed_streams, simulate
from .moments import MomentWindow, assemble_window, init_moments, record_sigma, step_moments


@dataclass(frozen=True)
class PrivacyConfig:
    gamma: float = 0.0
    N_s: int = 2
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    seed: int = 0
    oracle_check: bool = False
    k_max_oracle: int = crlb.K_MAX_ORACLE

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.N_s < 2:
            raise ValueError(f"window length must be at least 2, got {self.N_s}")
        if self.sigma_floor <= 0:
            raise ValueError(f"sigma_floor must be positive, got {self.sigma_floor}")


@dataclass(frozen=True)
class StepPlan:
    """Data-independent quantities of one step."""

    k: int
    gain: np.ndarray
    S_hat_umv: np.ndarray
    cov_estimate: np.ndarray  # Cov(xh[k], xh[k]) of the unperturbed estimate
    Sigma_k: np.ndarray
    noise_root: np.ndarray
    trace_pcrlb: float
    trace_crlb: float | None
    designed: bool
    active: bool


@dataclass(frozen=True)
class StepOutput:
    k: int
    x_hat: np.ndarray
    S_hat: np.ndarray
    Sigma_k: np.ndarray
    trace_pcrlb: float
    trace_crlb: float | None
    x_hat_umv: np.ndarray
    S_hat_umv: np.ndarray
    designed: bool = False
    active: bool = False


@dataclass(frozen=True)
class PipelineState:
    filter: umv.FilterState
    moments: MomentWindow
    gains: tuple[np.ndarray, ...] = ()  # full gain history, kept only for the oracle


@dataclass(frozen=True)
class PipelineRun:
    outputs: list[StepOutput]
    trajectory: Trajectory

    @property
    def published(self) -> np.ndarray:
        return np.array([o.x_hat for o in self.outputs])

    @property
    def umv_estimates(self) -> np.ndarray:
        return np.array([o.x_hat_umv for o in self.outputs])


def _plan_step(fs: umv.FilterState, mw: MomentWindow, gains: tuple, model: SystemModel,
               cfg: PrivacyConfig) -> tuple[MomentWindow, StepPlan]:
    """Design the perturbation for step ``fs.k`` given the advanced moments."""
    k = fs.k
    G_prev = model.G(k - 1) if k > 0 else None
    designed = active = False
    trace_pcrlb = math.nan
    if mw.full:
        wb = assemble_window(mw)
        ws = crlb.build_tilde_L(model, fs.gain_history, k)
        nd = design_noise(wb, ws, G_prev, cfg.gamma, cfg.sigma_floor)
        Sigma, designed, active = nd.Sigma_k, True, nd.active
        trace_pcrlb = crlb.pcrlb(Sigma, nd.A_tilde, G_prev)[1]
    else:
        Sigma = cfg.sigma_floor * np.eye(model.dim_x)
        if k > 0:
            wb = assemble_window(mw, allow_partial=True)
            ws = crlb.build_tilde_L(model, fs.gain_history[-wb.length:], k)
            trace_pcrlb = crlb.pcrlb(Sigma, crlb.pcrlb_A(wb, ws), G_prev)[1]
    mw = record_sigma(mw, Sigma)

    trace_crlb = None
    if cfg.oracle_check and 1 <= k <= cfg.k_max_oracle:
        n = min(k + 1, cfg.N_s)
        trace_crlb = crlb.crlb_oracle(model, gains, mw.sigma_history[-n:], k, cfg.N_s,
                                      cfg.k_max_oracle)[1]
    plan = StepPlan(k, fs.gain, fs.S_hat_umv, mw.cov_hathat_diag, Sigma, eig_sqrt(Sigma),
                    trace_pcrlb, trace_crlb, designed, active)
    return mw, plan


def pipeline_step(state: PipelineState | None, y_k: np.ndarray, model: SystemModel,
                  cfg: PrivacyConfig, rng: np.random.Generator) -> tuple[PipelineState, StepOutput]:
    """Absorb ``y[k]`` and publish the perturbed estimate for step ``k``.

    Pass ``state=None`` for ``k = 0``.
    """
    if state is None:
        fs = umv.init(model, y_k, cfg.N_s)
        mw = init_moments(model, fs.gain, cfg.N_s)
    else:
        fs = umv.step(state.filter, y_k, model)
        mw = step_moments(state.moments, model, fs.gain, fs.k)
    gains = ()
    if cfg.oracle_check and fs.k <= cfg.k_max_oracle:
        gains = (state.gains if state is not None else ()) + (fs.gain,)
    mw, p = _plan_step(fs, mw, gains, model, cfg)
    alpha = p.noise_root @ rng.standard_normal(model.dim_x)
    out = StepOutput(fs.k, fs.x_hat_umv + alpha, p.S_hat_umv + p.Sigma_k, p.Sigma_k,
                     p.trace_pcrlb, p.trace_crlb, fs.x_hat_umv, p.S_hat_umv, p.designed, p.active)
    return PipelineState(fs, mw, gains), out


def run_pipeline(model: SystemModel, signal: InputSignal, horizon: int, cfg: PrivacyConfig,
                 trajectory: Trajectory | None = None) -> PipelineRun:
    """Simulate ``horizon`` steps with ``cfg.seed`` and run the pipeline on them."""
    if trajectory is None:
        trajectory = simulate(model, signal, horizon, cfg.seed)
    rng = seed_streams(cfg.seed)[2]
    state = None
    outputs = []
    for y in trajectory.measurements:
        state, out = pipeline_step(state, y, model, cfg, rng)
        outputs.append(out)
    return PipelineRun(outputs, trajectory)


def plan(model: SystemModel, horizon: int, cfg: PrivacyConfig) -> list[StepPlan]:
    """The data-independent part of every step ``0 .. horizon``."""
    plans = []
    fs = mw = None
    gains: tuple = ()
    zero_y = np.zeros(model.dim_y)
    for k in range(horizon + 1):
        if fs is None:
            fs = umv.init(model, zero_y, cfg.N_s)
            mw = init_moments(model, fs.gain, cfg.N_s)
        else:
            fs = umv.step(fs, zero_y, model)
            mw = step_moments(mw, model, fs.gain, k)
        if cfg.oracle_check and k <= cfg.k_max_oracle:
            gains = gains + (fs.gain,)
        mw, p = _plan_step(fs, mw, gains, model, cfg)
        plans.append(p)
    return plans


def apply_plan(plans: list[StepPlan], measurements: np.ndarray, model: SystemModel,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Replay a plan on one measurement sequence.

    Returns the filter estimates and the published estimates, each of shape
    ``(K+1, dim_x)``.
    """
    n = len(measurements)
    x_umv = np.empty((n, model.dim_x))
    x_pub = np.empty((n, model.dim_x))
    x_pred = np.array(model.x0_mean, dtype=float)
    for k in range(n):
        if k > 0:
            x_pred = model.F(k - 1) @ x_umv[k - 1]
        p = plans[k]
        x = umv.correct(x_pred, measurements[k], p.gain, model.H(k))
        x_umv[k] = x
        x_pub[k] = x + p.noise_root @ rng.standard_normal(model.dim_x)
    return x_umv, x_pub


def apply_plan_batch(plans: list[StepPlan], measurements: np.ndarray, model: SystemModel,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`apply_plan` over ``(runs, K+1, dim_y)`` measurements."""
    runs, n, _ = measurements.shape
    x_umv = np.empty((runs, n, model.dim_x))
    x_pub = np.empty_like(x_umv)
    x_pred = np.broadcast_to(np.asarray(model.x0_mean, dtype=float), (runs, model.dim_x))
    for k in range(n):
        if k > 0:
            x_pred = x_umv[:, k - 1] @ model.F(k - 1).T
        p = plans[k]
        x = x_pred + (measurements[:, k] - x_pred @ model.H(k).T) @ p.gain.T
        x_umv[:, k] = x
        x_pub[:, k] = x + rng.standard_normal((runs, model.dim_x)) @ p.noise_root.T
    return x_umv, x_pub


def replay_run(plans: list[StepPlan], model: SystemModel, signal: InputSignal, horizon: int,
               seed: int) -> tuple[Trajectory, np.ndarray, np.ndarray]:
    """Simulate with ``seed`` and replay ``plans``; matches :func:`run_pipeline`."""
    traj = simulate(model, signal, horizon, seed)
    x_umv, x_pub = apply_plan(plans, traj.measurements, model, seed_streams(seed)[2])
    return traj, x_umv, x_pub
