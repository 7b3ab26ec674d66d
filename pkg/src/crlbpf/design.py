"""Design of the perturbation covariance that keeps the input bound above a threshold.

The relaxed problem is

    min trace(Sigma)  s.t.  trace(PB(Sigma)) >= gamma,  Sigma >= sigma I.

Rotating by the left singular vectors of ``G = U [Y; 0] V`` and writing
``M = U' (A~ + sigma I) U = [[A11, A12], [A21, A22]]`` reduces it to

    min trace(S11)  s.t.  trace(W (S11 - A12 A22^-1 A21)) >= gamma,  S11 >= A11

with ``W = Y^-2`` diagonal. Substituting ``S11 = A11 + Y`` leaves
``min trace(Y)`` subject to ``trace(W Y) >= c'`` and ``Y >= 0``. Since
``trace(W Y) <= w_max trace(Y)`` for every PSD ``Y``, the optimum puts all of
``c' / w_max`` on the direction of the largest weight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import numerical_rank, spd_factor, spd_solve, sym
from .crlb import CrlbWorkspace, pcrlb_A
from .errors import AssumptionError, IllConditionedError
from .moments import WindowBlocks

DEFAULT_SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class DesignProblem:
    G_prev: np.ndarray
    A_tilde: np.ndarray
    gamma: float
    sigma_floor: float = DEFAULT_SIGMA_FLOOR

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.sigma_floor <= 0:
            raise ValueError(f"sigma_floor must be positive, got {self.sigma_floor}")


@dataclass(frozen=True)
class NoiseDesign:
    Sigma_k: np.ndarray
    U: np.ndarray
    Upsilon: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    Sigma11_star: np.ndarray
    active: bool
    A_tilde: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / np.diag(self.Upsilon) ** 2


def svd_G(G_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``G = U [Upsilon; 0] V`` with singular values in non-increasing order."""
    G = np.atleast_2d(np.asarray(G_prev, dtype=float))
    if numerical_rank(G) < G.shape[1]:
        raise AssumptionError("G must have full column rank")
    U, s, V = np.linalg.svd(G, full_matrices=True)
    return U, np.diag(s), V


def partition_M(A_tilde: np.ndarray, sigma_floor: float, U: np.ndarray, dim_d: int):
    """Blocks of ``U' (A~ + sigma I) U`` split after the first ``dim_d`` rows."""
    M = sym(U.T @ (A_tilde + sigma_floor * np.eye(A_tilde.shape[0])) @ U)
    return M[:dim_d, :dim_d], M[:dim_d, dim_d:], M[dim_d:, :dim_d], M[dim_d:, dim_d:]


def _explained(A12: np.ndarray, A22: np.ndarray) -> np.ndarray:
    """``A12 A22^-1 A21``; zero when the second block is empty."""
    if A22.size == 0:
        return np.zeros((A12.shape[0], A12.shape[0]))
    f = spd_factor(A22, "A22", error=IllConditionedError)
    return sym(A12 @ spd_solve(f, A12.T))


def solve_sdp(A11: np.ndarray, A12: np.ndarray, A22: np.ndarray, Upsilon: np.ndarray,
              gamma: float) -> tuple[np.ndarray, bool]:
    """Closed-form optimum of the reduced trace-minimisation problem.

    Returns ``(Sigma11_star, active)``; ``active`` tells whether the bound
    constraint forced noise beyond ``A11``.
    """
    w = 1.0 / np.diag(Upsilon) ** 2
    c = gamma + float(w @ np.diag(_explained(A12, A22))) - float(w @ np.diag(A11))
    if c <= 0:
        return A11.copy(), False
    j = int(np.argmax(w))  # first index among ties
    S = A11.copy()
    S[j, j] += c / w[j]
    return S, True


def assemble_sigma(Sigma11_star: np.ndarray, A11: np.ndarray, sigma_floor: float,
                   U: np.ndarray) -> np.ndarray:
    """``Sigma = U blkdiag(S11 - A11 + sigma I, sigma I) U'``."""
    n = U.shape[0]
    d = A11.shape[0]
    inner = sigma_floor * np.eye(n)
    inner[:d, :d] += Sigma11_star - A11
    return sym(U @ inner @ U.T)


def design_from_A(problem: DesignProblem) -> NoiseDesign:
    """Run the rotation, the reduced problem and the reconstruction for a given ``A~``."""
    U, Y, _ = svd_G(problem.G_prev)
    d = Y.shape[0]
    A11, A12, A21, A22 = partition_M(problem.A_tilde, problem.sigma_floor, U, d)
    if problem.gamma == 0:
        S11, active = A11.copy(), False
    else:
        S11, active = solve_sdp(A11, A12, A22, Y, problem.gamma)
    Sigma = assemble_sigma(S11, A11, problem.sigma_floor, U)
    return NoiseDesign(Sigma, U, Y, A11, A12, A21, A22, S11, active, problem.A_tilde)


def design_noise(window: WindowBlocks, ws: CrlbWorkspace, G_prev: np.ndarray, gamma: float,
                 sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> NoiseDesign:
    """Perturbation covariance for the current step from the window moments."""
    A = pcrlb_A(window, ws)
    return design_from_A(DesignProblem(np.asarray(G_prev, dtype=float), A, gamma, sigma_floor))


def bound_slack(design: NoiseDesign, gamma: float) -> float:
    """``trace(W (S11 - A12 A22^-1 A21)) - gamma`` for a design."""
    w = design.weights
    return float(w @ np.diag(design.Sigma11_star - _explained(design.A12, design.A22))) - gamma
