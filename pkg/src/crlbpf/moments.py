"""Constant-memory recursions for the second moments of a sliding window of estimates.

The joint covariance of the last ``N_s`` filter estimates is needed at every
step by the privacy bound. Instead of rebuilding it from the whole history,
each step advances a fixed set of blocks:

* ``Cov(x[k], x[k])``, ``Cov(x[k], xh[k])`` and ``Cov(xh[k], xh[k])``;
* for each lag ``j < N_s`` the pair ``Cov(x[k], xh[k-j])`` and
  ``Cov(xh[k], xh[k-j])``;
* the lag rows of the previous ``N_s - 1`` steps, so that every block
  ``Cov(xh[i], xh[j])`` inside the window is available.

With ``D[k] = (I - K[k] H[k]) F[k-1]`` the estimate obeys
``xh[k] = D[k] xh[k-1] + K[k] y[k]``, from which all recursions follow.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import block_diag, sym
from .errors import WindowNotReadyError
from .model import SystemModel


@dataclass(frozen=True)
class LagPair:
    """Cross moments of the current step with the estimate ``j`` steps back."""

    cov_x_hat: np.ndarray  # Cov(x[k], xh[k-j])
    cov_hat_hat: np.ndarray  # Cov(xh[k], xh[k-j])


@dataclass(frozen=True)
class EstimateRow:
    """Moments of ``xh[t]`` with itself and with ``xh[t-1], xh[t-2], ...``."""

    k: int
    cov_hathat: np.ndarray
    lags: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class MomentWindow:
    """Moment state after step ``k``.

    ``rows`` holds the estimate rows for times ``k - len(rows) + 1 .. k``
    (at most ``N_s``). ``sigma_history`` holds the perturbation covariances
    recorded so far for the most recent times, the last one belonging to
    ``sigma_upto``.
    """

    N_s: int
    k: int
    cov_xx: np.ndarray
    cov_xhat: np.ndarray
    cov_hathat_diag: np.ndarray
    window_cross: tuple[LagPair, ...]
    rows: tuple[EstimateRow, ...]
    sigma_history: tuple[np.ndarray, ...] = ()
    sigma_upto: int = -1

    @property
    def dim_x(self) -> int:
        return self.cov_xx.shape[0]

    @property
    def full(self) -> bool:
        return self.k >= self.N_s - 1


@dataclass(frozen=True)
class WindowBlocks:
    """Joint covariance of the estimates in the window ``k0 .. k``.

    ``p_umv`` is the covariance of the unperturbed estimates. ``p_past`` is
    the covariance of the published estimates ``k0 .. k-1`` (perturbations
    included), ``cross`` is ``Cov(xh[k], xh[k0:k])`` and ``p_now`` is
    ``Cov(xh[k], xh[k])`` without perturbation. ``p_priv`` adds every
    perturbation in the window and is ``None`` until ``Sigma[k]`` is known.
    """

    k0: int
    k: int
    p_umv: np.ndarray
    p_past: np.ndarray
    cross: np.ndarray
    p_now: np.ndarray
    p_priv: np.ndarray | None

    @property
    def length(self) -> int:
        return self.k - self.k0 + 1


def init_moments(model: SystemModel, K0: np.ndarray, window: int = 2) -> MomentWindow:
    """Moments at ``k = 0``."""
    if window < 2:
        raise ValueError(f"window length must be at least 2, got {window}")
    P0 = np.asarray(model.P0, dtype=float)
    H0 = model.H(0)
    cov_xhat = P0 @ H0.T @ K0.T
    KH = K0 @ H0
    hathat = sym(KH @ P0 @ KH.T + K0 @ model.R(0) @ K0.T)
    row = EstimateRow(0, hathat, ())
    return MomentWindow(window, 0, sym(P0), cov_xhat, hathat, (), (row,))


def step_moments(mw: MomentWindow, model: SystemModel, K_k: np.ndarray, k: int | None = None) -> MomentWindow:
    """Advance every stored block from ``k - 1`` to ``k`` using gain ``K[k]``."""
    k = mw.k + 1 if k is None else k
    if k != mw.k + 1:
        raise ValueError(f"moments are at step {mw.k}; cannot advance to {k}")
    F = model.F(k - 1)
    H = model.H(k)
    KH = K_k @ H
    D = F - KH @ F
    KHF = KH @ F

    cov_xx = sym(F @ mw.cov_xx @ F.T + model.Q(k - 1))
    hat_x_prev = mw.cov_xhat.T  # Cov(xh[k-1], x[k-1])
    t = D @ hat_x_prev @ F.T @ KH.T
    hathat = sym(D @ mw.cov_hathat_diag @ D.T + t + t.T
                 + KH @ cov_xx @ KH.T + K_k @ model.R(k) @ K_k.T)
    cov_xhat = F @ mw.cov_xhat @ D.T + cov_xx @ KH.T

    # Lag j uses Cov(x[k-1], xh[k-j]) and Cov(xh[k-1], xh[k-j]); the j = 1
    # entries of those are the previous diagonal moments.
    prev_x = (mw.cov_xhat,) + tuple(p.cov_x_hat for p in mw.window_cross)
    prev_hat = (mw.cov_hathat_diag,) + tuple(p.cov_hat_hat for p in mw.window_cross)
    n_lags = min(k, mw.N_s - 1)
    cross = tuple(
        LagPair(F @ prev_x[j], D @ prev_hat[j] + KHF @ prev_x[j])
        for j in range(n_lags)
    )
    row = EstimateRow(k, hathat, tuple(p.cov_hat_hat for p in cross))
    rows = (mw.rows + (row,))[-mw.N_s:]
    return replace(mw, k=k, cov_xx=cov_xx, cov_xhat=cov_xhat, cov_hathat_diag=hathat,
                   window_cross=cross, rows=rows)


def record_sigma(mw: MomentWindow, sigma: np.ndarray) -> MomentWindow:
    """Store the perturbation covariance used at the current step."""
    if mw.sigma_upto != mw.k - 1:
        raise ValueError(f"perturbation for step {mw.sigma_upto + 1} is missing")
    hist = (mw.sigma_history + (np.asarray(sigma, dtype=float),))[-mw.N_s:]
    return replace(mw, sigma_history=hist, sigma_upto=mw.k)


def _umv_window(rows: tuple[EstimateRow, ...]) -> np.ndarray:
    n = len(rows)
    dx = rows[0].cov_hathat.shape[0]
    P = np.empty((n * dx, n * dx))
    for a, row in enumerate(rows):
        P[a * dx:(a + 1) * dx, a * dx:(a + 1) * dx] = row.cov_hathat
        for j in range(1, a + 1):
            b = a - j
            blk = row.lags[j - 1]
            P[a * dx:(a + 1) * dx, b * dx:(b + 1) * dx] = blk
            P[b * dx:(b + 1) * dx, a * dx:(a + 1) * dx] = blk.T
    return sym(P)


def assemble_window(mw: MomentWindow, allow_partial: bool = False) -> WindowBlocks:
    """Joint covariance of ``xh[k-N_s+1 .. k]`` and its partition.

    Before the window is full a :class:`WindowNotReadyError` is raised unless
    ``allow_partial`` is set, in which case the available estimates
    ``xh[0 .. k]`` form the window.
    """
    if not mw.full and not allow_partial:
        raise WindowNotReadyError(f"window of length {mw.N_s} is not full at k={mw.k}")
    rows = mw.rows
    n = len(rows)
    dx = mw.dim_x
    k0 = mw.k - n + 1
    p_umv = _umv_window(rows)
    m = (n - 1) * dx

    # Perturbations for times k0 .. sigma_upto; sigma_history ends at sigma_upto.
    n_sig = mw.sigma_upto - k0 + 1
    if n_sig < n - 1:
        raise ValueError(f"perturbations before step {mw.k} are missing")
    sig = mw.sigma_history[len(mw.sigma_history) - n_sig:]
    p_past = p_umv[:m, :m] + block_diag(sig[:n - 1])
    p_priv = p_umv + block_diag(sig) if n_sig == n else None
    return WindowBlocks(k0, mw.k, p_umv, sym(p_past), p_umv[m:, :m], p_umv[m:, m:], p_priv)
