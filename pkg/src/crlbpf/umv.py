"""Unbiased minimum-variance filter for systems with unknown inputs.

The gain solves the constrained problem min trace(S) s.t. K H G = G, which
removes any dependence of the estimate's bias on the unknown input. At
``k = 0`` the prior acts as the prediction and ``G(0)`` stands in for the
(nonexistent) ``G(-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import spd_factor, spd_solve, sym
from .errors import AssumptionError, DimensionError
from .model import SystemModel


@dataclass(frozen=True)
class Prediction:
    k: int
    x_pred: np.ndarray
    S_pred: np.ndarray


@dataclass(frozen=True)
class FilterState:
    """Estimate after the update at step ``k``.

    ``gain_history`` holds the most recent gains, oldest first, ending with
    ``K[k]``; its length is capped at ``window``.
    """

    k: int
    x_hat_umv: np.ndarray
    S_hat_umv: np.ndarray
    gain_history: tuple[np.ndarray, ...]
    window: int = 2

    @property
    def gain(self) -> np.ndarray:
        return self.gain_history[-1]


def prior(model: SystemModel) -> Prediction:
    """The Gaussian prior, used as the prediction for ``k = 0``."""
    return Prediction(0, np.array(model.x0_mean, dtype=float), sym(np.array(model.P0, dtype=float)))


def predict(state: FilterState, model: SystemModel) -> Prediction:
    """One-step prediction ``x- = F x``, ``S- = F S F' + Q``."""
    F = model.F(state.k)
    x_pred = F @ state.x_hat_umv
    S_pred = sym(F @ state.S_hat_umv @ F.T + model.Q(state.k))
    return Prediction(state.k + 1, x_pred, S_pred)


def _gain_terms(S_pred: np.ndarray, model: SystemModel, k: int):
    H = model.H(k)
    Gp = model.G(max(k - 1, 0))
    C = sym(H @ S_pred @ H.T + model.R(k))
    cf = spd_factor(C, f"innovation covariance C({k})")
    HG = H @ Gp
    Ci_HG = spd_solve(cf, HG)
    mf = spd_factor(sym(HG.T @ Ci_HG), f"G'H'C^-1HG at k={k}", error=AssumptionError)
    Ci_HS = spd_solve(cf, H @ S_pred)  # C^-1 H S
    B = Gp - Ci_HS.T @ HG  # G - S H' C^-1 H G
    K = Ci_HS.T + B @ spd_solve(mf, Ci_HG.T)
    return H, C, K, Ci_HS, B, mf


def gain(S_pred: np.ndarray, model: SystemModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Constrained gain ``K[k]`` and innovation covariance ``C[k]``.

    ``K = S H' C^-1 + (G - S H' C^-1 H G)(G' H' C^-1 H G)^-1 G' H' C^-1``.
    Raises :class:`AssumptionError` when ``G' H' C^-1 H G`` is singular or
    too badly conditioned to invert.
    """
    _, C, K, *_ = _gain_terms(S_pred, model, k)
    return K, C


def correct(x_pred: np.ndarray, y: np.ndarray, K: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Measurement correction ``x- + K (y - H x-)``."""
    return x_pred + K @ (y - H @ x_pred)


def update(pred: Prediction, y: np.ndarray, model: SystemModel, k: int | None = None,
           state: FilterState | None = None, window: int = 2) -> FilterState:
    """Update the prediction with measurement ``y``.

    ``state`` (the previous filter state) only supplies the gain history to
    extend; pass ``None`` at ``k = 0``.
    """
    k = pred.k if k is None else k
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (model.dim_y,):
        raise DimensionError(f"measurement has shape {y.shape}, expected ({model.dim_y},)")
    H, _, K, Ci_HS, B, mf = _gain_terms(pred.S_pred, model, k)
    S = pred.S_pred - pred.S_pred @ H.T @ Ci_HS + B @ spd_solve(mf, B.T)
    x = correct(pred.x_pred, y, K, H)
    if state is None:
        hist: tuple[np.ndarray, ...] = (K,)
    else:
        window = state.window
        hist = (state.gain_history + (K,))[-window:]
    return FilterState(k, x, sym(S), hist, window)


def init(model: SystemModel, y0: np.ndarray, window: int = 2) -> FilterState:
    """Filter state at ``k = 0`` after absorbing ``y[0]``."""
    return update(prior(model), y0, model, 0, None, window)


def step(state: FilterState, y: np.ndarray, model: SystemModel) -> FilterState:
    return update(predict(state, model), y, model, state.k + 1, state)


def run_filter(model: SystemModel, measurements: np.ndarray, window: int = 2) -> list[FilterState]:
    """Run the filter over ``y[0..K]`` and return every state."""
    out = [init(model, measurements[0], window)]
    for y in measurements[1:]:
        out.append(step(out[-1], y, model))
    return out


def gain_sequence(model: SystemModel, horizon: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gains ``K[0..horizon]`` and error covariances, which do not depend on data."""
    pred = prior(model)
    gains, covs = [], []
    S = None
    for k in range(horizon + 1):
        if k > 0:
            F = model.F(k - 1)
            pred = Prediction(k, np.zeros(model.dim_x), sym(F @ S @ F.T + model.Q(k - 1)))
        st = update(pred, np.zeros(model.dim_y), model, k)
        gains.append(st.gain)
        covs.append(st.S_hat_umv)
        S = st.S_hat_umv
    return gains, covs


def filter_batch(model: SystemModel, measurements: np.ndarray,
                 gains: list[np.ndarray] | None = None) -> np.ndarray:
    """Vectorised filter over many runs.

    ``measurements`` has shape ``(runs, K+1, dim_y)``; the gain sequence is
    shared by every run because it depends only on the model.
    """
    runs, n, _ = measurements.shape
    if gains is None:
        gains, _ = gain_sequence(model, n - 1)
    out = np.empty((runs, n, model.dim_x))
    x = np.broadcast_to(model.x0_mean, (runs, model.dim_x))
    for k in range(n):
        if k > 0:
            x = x @ model.F(k - 1).T
        H = model.H(k)
        x = x + (measurements[:, k] - x @ H.T) @ gains[k].T
        out[:, k] = x
    return out
