"""Cramer-Rao bounds on the adversary's estimate of the most recent input.

Two routes compute the bound on ``d[k-1]`` from the published window
``xh[k-N_s+1 .. k]``:

* the windowed (pseudo) bound keeps only the last ``N_s`` inputs as unknowns.
  Its matrices have a size fixed by ``N_s`` so the cost per step is constant;
* the batch oracle builds the full sensitivity matrix of the window mean with
  respect to ``d[0 .. k-1]`` and inverts the ``k * dim_d`` Fisher matrix,
  which costs ``O(k^3)``. It is meant for small horizons and for checking.

Both treat the window as Gaussian with input-independent covariance, so the
Fisher information is ``L' P^-1 L`` with ``L`` the Jacobian of the mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import block_diag, numerical_rank, spd_factor, spd_solve, sym
from .errors import IdentifiabilityError, OracleHorizonError
from .model import SystemModel
from .moments import WindowBlocks

#: Largest horizon the batch oracle accepts unless told otherwise.
K_MAX_ORACLE = 12


@dataclass(frozen=True)
class CrlbWorkspace:
    """Sensitivity of the window estimates to the windowed inputs.

    Row blocks follow the estimates ``xh[k0 .. k]``; column blocks follow the
    inputs ``d[first_input .. k-1]``. ``L11`` is the past-estimates by
    older-inputs part, ``L21`` the current estimate by older inputs.
    """

    k: int
    first_input: int
    L_tilde: np.ndarray
    L11: np.ndarray
    L21: np.ndarray


def _d_matrix(model: SystemModel, K: np.ndarray, t: int) -> np.ndarray:
    F = model.F(t - 1)
    return F - K @ model.H(t) @ F


def build_tilde_L(model: SystemModel, gains, k: int, window: int | None = None) -> CrlbWorkspace:
    """Windowed sensitivity ``L~ = L~_DK L~_HF blkdiag(G)``.

    ``gains`` are the most recent gains, oldest first, ending with ``K[k]``;
    their count sets the window length unless ``window`` trims it. When the
    window reaches back to ``k = 0`` the input column for ``d[-1]`` does not
    exist and is dropped.
    """
    gains = list(gains)
    n = len(gains) if window is None else window
    if n < 1 or len(gains) < n:
        raise ValueError(f"need {n} gains ending at step {k}, got {len(gains)}")
    gains = gains[-n:]
    k0 = k - n + 1
    if k0 < 0:
        raise ValueError(f"window of length {n} does not fit at step {k}")
    dx, dy, dd = model.dim_x, model.dim_y, model.dim_d

    # L~_DK: block (a, b) = D[t_a] ... D[t_b + 1] K[t_b] for b <= a.
    Ds = [_d_matrix(model, gains[a], k0 + a) for a in range(n)]
    LDK = np.zeros((n * dx, n * dy))
    for b in range(n):
        blk = gains[b]
        LDK[b * dx:(b + 1) * dx, b * dy:(b + 1) * dy] = blk
        for a in range(b + 1, n):
            blk = Ds[a] @ blk
            LDK[a * dx:(a + 1) * dx, b * dy:(b + 1) * dy] = blk

    # L~_HF: block (a, b) = H[t_a] F[t_a - 1] ... F[t_b] for b <= a, where
    # column b carries G[t_b - 1] d[t_b - 1] into x[t_b].
    LF = np.zeros((n * dx, n * dx))
    for b in range(n):
        blk = np.eye(dx)
        LF[b * dx:(b + 1) * dx, b * dx:(b + 1) * dx] = blk
        for a in range(b + 1, n):
            blk = model.F(k0 + a - 1) @ blk
            LF[a * dx:(a + 1) * dx, b * dx:(b + 1) * dx] = blk
    LH = block_diag(model.H(k0 + a) for a in range(n))
    first = max(k0 - 1, 0)
    LG = block_diag(model.G(t) for t in range(first, k))
    rows_used = LF[:, (n - (k - first)) * dx:]
    L = LDK @ (LH @ rows_used) @ LG
    m = (n - 1) * dx
    c = L.shape[1] - dd
    return CrlbWorkspace(k, first, L, L[:m, :c], L[m:, :c])


def pcrlb_A(window: WindowBlocks, ws: CrlbWorkspace) -> np.ndarray:
    """Effective covariance ``A~`` seen by the windowed bound.

    Conditioning the current estimate on the past published window leaves
    the Schur complement; the older inputs, being unknown, add back the part
    of the past that they could explain.
    """
    pf = spd_factor(window.p_past, "past window covariance")
    X = spd_solve(pf, window.cross.T).T  # cross P^-1
    A = window.p_now - X @ window.cross.T
    if ws.L11.shape[1]:
        Z = ws.L21 - X @ ws.L11
        mf = spd_factor(ws.L11.T @ spd_solve(pf, ws.L11), "L11' P^-1 L11", error=IdentifiabilityError)
        A = A + Z @ spd_solve(mf, Z.T)
    return sym(A)


def pcrlb(Sigma_k: np.ndarray, A_tilde: np.ndarray, G_prev: np.ndarray) -> tuple[np.ndarray, float]:
    """``PB = (G' (Sigma + A~)^-1 G)^-1`` and its trace."""
    f = spd_factor(Sigma_k + A_tilde, "Sigma + A")
    info = sym(G_prev.T @ spd_solve(f, G_prev))
    PB = sym(np.linalg.inv(info))
    return PB, float(np.trace(PB))


# --------------------------------------------------------------------------
# Batch oracle


def _check_horizon(k: int, k_max: int) -> None:
    if k > k_max:
        raise OracleHorizonError(f"batch oracle limited to k <= {k_max}, got {k}")
    if k < 1:
        raise ValueError("the bound on d[k-1] needs k >= 1")


def _transition_stack(model: SystemModel, k: int) -> np.ndarray:
    """``L_F``: maps ``(x0, w[0..k-1])`` (or ``G d``) to ``x[0..k]``."""
    dx = model.dim_x
    L = np.zeros(((k + 1) * dx, (k + 1) * dx))
    for b in range(k + 1):
        blk = np.eye(dx)
        L[b * dx:(b + 1) * dx, b * dx:(b + 1) * dx] = blk
        for a in range(b + 1, k + 1):
            blk = model.F(a - 1) @ blk
            L[a * dx:(a + 1) * dx, b * dx:(b + 1) * dx] = blk
    return L


def _gain_stack(model: SystemModel, gains, k: int, window: int) -> np.ndarray:
    """``L_DK``: maps ``y[0..k]`` to the window estimates."""
    dx, dy = model.dim_x, model.dim_y
    k0 = max(k - window + 1, 0)
    L = np.zeros(((k - k0 + 1) * dx, (k + 1) * dy))
    for b in range(k + 1):
        blk = gains[b]
        for t in range(b, k + 1):
            if t > b:
                blk = _d_matrix(model, gains[t], t) @ blk
            if t >= k0:
                a = t - k0
                L[a * dx:(a + 1) * dx, b * dy:(b + 1) * dy] = blk
    return L


def full_L(model: SystemModel, gains, k: int, window: int, k_max: int = K_MAX_ORACLE) -> np.ndarray:
    """Jacobian of the window mean with respect to ``d[0 .. k-1]``.

    ``gains`` is the full sequence ``K[0 .. k]``.
    """
    _check_horizon(k, k_max)
    dx = model.dim_x
    LF = _transition_stack(model, k)
    LHF = block_diag(model.H(t) for t in range(k + 1)) @ LF[:, dx:]
    LG = block_diag(model.G(t) for t in range(k))
    return _gain_stack(model, gains, k, window) @ LHF @ LG


def batch_window_cov(model: SystemModel, gains, k: int, window: int,
                     k_max: int = K_MAX_ORACLE) -> np.ndarray:
    """Covariance of the unperturbed window estimates from the stacked system."""
    _check_horizon(k, k_max)
    LF = _transition_stack(model, k)
    P = LF @ block_diag([model.P0] + [model.Q(t) for t in range(k)]) @ LF.T
    LH = block_diag(model.H(t) for t in range(k + 1))
    LR = block_diag(model.R(t) for t in range(k + 1))
    LDK = _gain_stack(model, gains, k, window)
    return sym(LDK @ (LR + LH @ P @ LH.T) @ LDK.T)


def _private_window(model, gains, sigmas, k, window, k_max) -> np.ndarray:
    P = batch_window_cov(model, gains, k, window, k_max)
    sigmas = list(sigmas)
    n = P.shape[0] // model.dim_x
    if len(sigmas) != n:
        raise ValueError(f"need {n} perturbation covariances, got {len(sigmas)}")
    return P + block_diag(sigmas)


def gaussian_fisher(jacobian: np.ndarray, cov: np.ndarray, cov_derivs=()) -> np.ndarray:
    """Fisher information of ``N(mu(theta), C(theta))``.

    ``I_ij = dmu_i' C^-1 dmu_j + tr(C^-1 dC_i C^-1 dC_j) / 2`` where ``dmu_i``
    is column ``i`` of ``jacobian`` and ``cov_derivs`` lists ``dC_i`` (empty
    when the covariance does not depend on ``theta``).
    """
    J = np.atleast_2d(np.asarray(jacobian, dtype=float))
    f = spd_factor(cov, "covariance")
    info = J.T @ spd_solve(f, J)
    if len(cov_derivs):
        W = [spd_solve(f, np.asarray(d, dtype=float)) for d in cov_derivs]
        info = info + 0.5 * np.array([[np.trace(a @ b) for b in W] for a in W])
    return sym(info)


def fisher_oracle(model: SystemModel, gains, sigmas, k: int, window: int,
                  k_max: int = K_MAX_ORACLE) -> np.ndarray:
    """Fisher information of ``d[0 .. k-1]`` carried by the published window.

    ``sigmas`` are the perturbation covariances of the window estimates.
    """
    L = full_L(model, gains, k, window, k_max)
    return gaussian_fisher(L, _private_window(model, gains, sigmas, k, window, k_max))


def crlb_from_fisher(info: np.ndarray, dim_d: int) -> np.ndarray:
    """Bound on the last input block: trailing block of the (pseudo-)inverse.

    A singular Fisher matrix is allowed as long as the last input remains
    estimable, i.e. its selector lies in the row space of ``info``.
    """
    n = info.shape[0]
    if numerical_rank(info) == n:
        inv = np.linalg.inv(info)
    else:
        inv = np.linalg.pinv(info, rcond=1e-10, hermitian=True)
        sel = np.zeros((n, dim_d))
        sel[n - dim_d:] = np.eye(dim_d)
        resid = info @ (inv @ sel) - sel
        if np.linalg.norm(resid) > 1e-6 * max(1.0, np.linalg.norm(sel)):
            raise IdentifiabilityError("the last input is not estimable from the window")
    return sym(inv[n - dim_d:, n - dim_d:])


def crlb_oracle(model: SystemModel, gains, sigmas, k: int, window: int,
                k_max: int = K_MAX_ORACLE) -> tuple[np.ndarray, float]:
    """Exact bound ``B = (G' (Sigma[k] + A[k])^-1 G)^-1`` from the batch matrices.

    ``A[k]`` is built like the windowed ``A~`` but with the sensitivity to
    every past input. If those older inputs cannot all be resolved from the
    window, a pseudo-inverse keeps the projection onto what they can explain,
    which yields the bound for the still-estimable ``d[k-1]``.
    """
    L = full_L(model, gains, k, window, k_max)
    P = _private_window(model, gains, sigmas, k, window, k_max)
    dx, dd = model.dim_x, model.dim_d
    m = P.shape[0] - dx
    P_past, cross = P[:m, :m], P[m:, :m]
    now_umv = P[m:, m:] - sigmas[-1]
    L11, L21 = L[:m, :-dd], L[m:, :-dd]
    pf = spd_factor(P_past, "past window covariance")
    X = spd_solve(pf, cross.T).T
    A = now_umv - X @ cross.T
    if L11.shape[1]:
        Z = L21 - X @ L11
        M = sym(L11.T @ spd_solve(pf, L11))
        if numerical_rank(M) == M.shape[0]:
            A = A + Z @ np.linalg.solve(M, Z.T)
        else:
            A = A + Z @ np.linalg.pinv(M, rcond=1e-10, hermitian=True) @ Z.T
    G = model.G(k - 1)
    B, tr = pcrlb(sigmas[-1], sym(A), G)
    return B, tr


def approximation_error(info: np.ndarray, window_inputs: int, dim_d: int) -> np.ndarray:
    """Gap between the full bound and the windowed bound on the last input.

    With ``info = [[A, B], [B', C]]`` and ``C`` covering the last
    ``window_inputs`` inputs, the gap is the trailing block of
    ``C^-1 B' (A - B C^-1 B')^-1 B C^-1``.
    """
    c = window_inputs * dim_d
    n = info.shape[0]
    if c >= n:
        return np.zeros((dim_d, dim_d))
    A, B, C = info[:n - c, :n - c], info[:n - c, n - c:], info[n - c:, n - c:]
    cf = spd_factor(C, "windowed Fisher block")
    CiBt = spd_solve(cf, B.T)  # C^-1 B'
    S = A - B @ CiBt
    sf = spd_factor(S, "Schur complement of the windowed Fisher block", error=IdentifiabilityError)
    E = CiBt.T[:, c - dim_d:]  # B C^-1, trailing columns
    return sym(E.T @ spd_solve(sf, E))


def windowed_bound_from_fisher(info: np.ndarray, window_inputs: int, dim_d: int) -> np.ndarray:
    """Windowed bound computed from the full Fisher matrix: ``sel C^-1 sel'``."""
    c = window_inputs * dim_d
    C = info[-c:, -c:]
    return sym(np.linalg.inv(C)[c - dim_d:, c - dim_d:])


def fisher_finite_difference(model: SystemModel, gains, sigmas, k: int, window: int,
                             inputs: np.ndarray, step: float = 1e-5,
                             k_max: int = K_MAX_ORACLE) -> np.ndarray:
    """Fisher information from a numerically differentiated window mean.

    The mean of the window estimates is obtained by running the filter
    recursion on the noise-free response to ``inputs``; central differences
    give its Jacobian. The window covariance does not involve the inputs, so
    only the mean term of the Gaussian Fisher formula remains.
    """
    _check_horizon(k, k_max)
    inputs = np.asarray(inputs, dtype=float).reshape(k, model.dim_d)
    P = _private_window(model, gains, sigmas, k, window, k_max)

    def mean(d):
        x = np.asarray(model.x0_mean, dtype=float)
        xh = x.copy()  # noise-free y[0] equals the prior prediction
        out = [xh]
        for t in range(1, k + 1):
            x = model.F(t - 1) @ x + model.G(t - 1) @ d[t - 1]
            pred = model.F(t - 1) @ xh
            xh = pred + gains[t] @ (model.H(t) @ x - model.H(t) @ pred)
            out.append(xh)
        k0 = max(k - window + 1, 0)
        return np.concatenate(out[k0:])

    cols = []
    for i in range(inputs.size):
        e = np.zeros(inputs.size)
        e[i] = step
        plus = mean(inputs + e.reshape(inputs.shape))
        minus = mean(inputs - e.reshape(inputs.shape))
        cols.append((plus - minus) / (2 * step))
    return gaussian_fisher(np.column_stack(cols), P)


__all__ = [
    "K_MAX_ORACLE", "CrlbWorkspace", "build_tilde_L", "pcrlb_A", "pcrlb",
    "full_L", "batch_window_cov", "gaussian_fisher", "fisher_oracle", "crlb_from_fisher", "crlb_oracle",
    "approximation_error", "windowed_bound_from_fisher", "fisher_finite_difference",
]
