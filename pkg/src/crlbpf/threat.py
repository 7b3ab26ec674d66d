"""The adversary's input-inference attack and differential-privacy accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from ._linalg import numerical_rank, spd_factor, sym
from .errors import AssumptionError
from .model import round_half_away

DEFAULT_RHO = 1.0


@dataclass(frozen=True)
class InputEstimate:
    d_hat: np.ndarray
    d_hat_rounded: np.ndarray


@dataclass(frozen=True)
class DpReport:
    epsilon: float
    delta: float
    sensitivity: float
    xi: float
    adjacency_radius: float = DEFAULT_RHO


def infer_input(x_hat_k, x_hat_km1, F_prev, G_prev) -> InputEstimate:
    """Least-squares inversion ``d = (G'G)^-1 G' (xh[k] - F xh[k-1])``.

    Accepts a single pair of estimates or stacked rows (leading batch axes).
    """
    G = np.atleast_2d(np.asarray(G_prev, dtype=float))
    if numerical_rank(G) < G.shape[1]:
        raise AssumptionError("G must have full column rank")
    F = np.atleast_2d(np.asarray(F_prev, dtype=float))
    resid = np.asarray(x_hat_k, dtype=float) - np.asarray(x_hat_km1, dtype=float) @ F.T
    pinv = np.linalg.solve(G.T @ G, G.T)
    d = resid @ pinv.T
    return InputEstimate(d, round_half_away(d).astype(np.int64))


def adversary_errors(d_true: np.ndarray, x_pub: np.ndarray, model) -> np.ndarray:
    """Squared error ``||d_hat[k-1] - d[k-1]||^2`` per run and step.

    ``d_true`` has shape ``(runs, K, dim_d)`` and ``x_pub`` ``(runs, K+1, dim_x)``.
    """
    d_true = np.asarray(d_true, dtype=float)
    x_pub = np.asarray(x_pub, dtype=float)
    if x_pub.shape[1] < 2:
        raise ValueError("need at least two published estimates per run")
    out = np.empty(d_true.shape[:2])
    for k in range(1, x_pub.shape[1]):
        est = infer_input(x_pub[:, k], x_pub[:, k - 1], model.F(k - 1), model.G(k - 1))
        out[:, k - 1] = np.sum((est.d_hat - d_true[:, k - 1]) ** 2, axis=-1)
    return out


def adversary_mse(d_true: np.ndarray, x_pub: np.ndarray, model) -> np.ndarray:
    """Mean over runs of the adversary's squared error, one value per input ``d[k-1]``."""
    err = adversary_errors(d_true, x_pub, model)
    return err.sum(axis=0) / err.shape[0]


def sensitivity(K_k, H_k, G_prev, P_hat_k, rho: float = DEFAULT_RHO) -> float:
    """Largest ``P^-1``-weighted change of ``K H G d`` over ``||d - d'|| <= rho``.

    Equals ``rho * s_max(P^-1/2 K H G)``.
    """
    if rho < 0:
        raise ValueError("adjacency radius must be non-negative")
    P = sym(np.asarray(P_hat_k, dtype=float))
    spd_factor(P, "published covariance")
    w, v = np.linalg.eigh(P)
    P_isqrt = (v / np.sqrt(w)) @ v.T
    S = P_isqrt @ np.asarray(K_k) @ np.asarray(H_k) @ np.asarray(G_prev)
    return float(rho * np.linalg.norm(S, 2))


def q_function(x):
    """Standard normal upper tail ``Q(x) = erfc(x / sqrt 2) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def dp_delta(epsilon: float, delta_q: float) -> tuple[float, float]:
    """``delta`` of the Gaussian mechanism and the tail argument ``xi``.

    ``xi = -dq/2 + eps/dq`` and ``delta = Q(xi)``; with zero sensitivity the
    mechanism leaks nothing, reported as ``delta = 0`` and ``xi = inf``.
    """
    if epsilon < 0 or delta_q < 0:
        raise ValueError("epsilon and sensitivity must be non-negative")
    if delta_q == 0:
        return 0.0, math.inf
    xi = -delta_q / 2 + epsilon / delta_q
    return float(q_function(xi)), xi


def dp_report(epsilon: float, K_k, H_k, G_prev, P_hat_k, rho: float = DEFAULT_RHO) -> DpReport:
    dq = sensitivity(K_k, H_k, G_prev, P_hat_k, rho)
    delta, xi = dp_delta(epsilon, dq)
    return DpReport(epsilon, delta, dq, xi, rho)
