"""Small dense linear-algebra helpers shared by the estimator modules."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

from .errors import IllConditionedError

#: Condition number above which a solve is refused.
MAX_CONDITION = 1e12


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def numerical_rank(a: np.ndarray) -> int:
    """Rank with the threshold ``max(shape) * s_max * 2**-40``."""
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    tol = max(a.shape) * s[0] * 2.0**-40
    return int(np.sum(s > tol))


def condition(a: np.ndarray) -> float:
    """2-norm condition number of a symmetric matrix (inf if singular)."""
    if a.size == 0:
        return 1.0
    w = np.abs(np.linalg.eigvalsh(sym(a)))
    if w.min() == 0.0:
        return np.inf
    return float(w.max() / w.min())


def spd_factor(a: np.ndarray, what: str = "matrix", max_cond: float = MAX_CONDITION,
               error: type[Exception] = IllConditionedError):
    """Cholesky factor of a symmetric positive-definite matrix.

    Raises ``error`` if the matrix is not positive definite or its
    condition number exceeds ``max_cond``.
    """
    a = sym(np.asarray(a, dtype=float))
    if a.size == 0:
        return None
    c = condition(a)
    if not np.isfinite(c) or c > max_cond:
        raise error(f"{what} is ill-conditioned (cond={c:.3g})")
    try:
        return la.cho_factor(a, lower=True, check_finite=False)
    except la.LinAlgError as exc:
        raise error(f"{what} is not positive definite") from exc


def spd_solve(factor, b: np.ndarray) -> np.ndarray:
    """Solve with a factor from :func:`spd_factor` (empty system passes through)."""
    if factor is None:
        return np.zeros((0,) + np.shape(b)[1:])
    return la.cho_solve(factor, b, check_finite=False)


def spd_inv(a: np.ndarray, what: str = "matrix", **kw) -> np.ndarray:
    f = spd_factor(a, what, **kw)
    return sym(spd_solve(f, np.eye(a.shape[0])))


def block_diag(blocks) -> np.ndarray:
    blocks = list(blocks)
    if not blocks:
        return np.zeros((0, 0))
    return la.block_diag(*blocks)


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Factor ``S`` with ``S @ S.T == cov``.

    Cholesky when ``cov`` is positive definite, otherwise an eigen square
    root with negative eigenvalues clipped to zero.
    """
    cov = sym(np.atleast_2d(np.asarray(cov, dtype=float)))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def eig_sqrt(cov: np.ndarray) -> np.ndarray:
    """Eigendecomposition square root; handles singular PSD matrices."""
    w, v = np.linalg.eigh(sym(np.atleast_2d(cov)))
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(rng: np.random.Generator, cov: np.ndarray, size=None) -> np.ndarray:
    """Zero-mean Gaussian draw(s) with covariance ``cov``."""
    root = psd_sqrt(cov)
    n = root.shape[0]
    shape = (n,) if size is None else (size, n)
    z = rng.standard_normal(shape)
    return z @ root.T
