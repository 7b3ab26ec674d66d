"""Linear time-varying Gaussian system driven by an unknown exogenous input.

    x[k] = F(k-1) x[k-1] + G(k-1) d[k-1] + w[k-1],   w ~ N(0, Q(k-1))
    y[k] = H(k) x[k] + v[k],                         v ~ N(0, R(k))
    x[0] ~ N(x0_mean, P0)

Matrices are supplied as functions of the time index so time-varying models
are first class; :meth:`SystemModel.time_invariant` wraps constants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from ._linalg import numerical_rank, sample_gaussian, sym
from .errors import DimensionError

MatrixFn = Callable[[int], np.ndarray]


def _const(a) -> MatrixFn:
    m = np.atleast_2d(np.asarray(a, dtype=float)).copy()
    m.setflags(write=False)
    return lambda k: m


@dataclass(frozen=True)
class SystemModel:
    """Immutable description of the system and its Gaussian prior."""

    dim_x: int
    dim_y: int
    dim_d: int
    F: MatrixFn
    G: MatrixFn
    H: MatrixFn
    Q: MatrixFn
    R: MatrixFn
    x0_mean: np.ndarray
    P0: np.ndarray
    name: str = "custom"

    @classmethod
    def time_invariant(cls, F, G, H, Q, R, x0_mean, P0, name: str = "custom") -> "SystemModel":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        H = np.atleast_2d(np.asarray(H, dtype=float))
        x0 = np.atleast_1d(np.asarray(x0_mean, dtype=float)).copy()
        P0 = np.atleast_2d(np.asarray(P0, dtype=float)).copy()
        dim_x, dim_d = G.shape
        dim_y = H.shape[0]
        if F.shape != (dim_x, dim_x) or H.shape[1] != dim_x:
            raise DimensionError(f"F {F.shape}, G {G.shape}, H {H.shape} are inconsistent")
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        if Q.shape != (dim_x, dim_x) or R.shape != (dim_y, dim_y):
            raise DimensionError(f"Q {Q.shape} or R {R.shape} has the wrong shape")
        if x0.shape != (dim_x,) or P0.shape != (dim_x, dim_x):
            raise DimensionError("prior mean/covariance do not match dim_x")
        x0.setflags(write=False)
        P0.setflags(write=False)
        return cls(dim_x, dim_y, dim_d, _const(F), _const(G), _const(H), _const(Q), _const(R),
                   x0, P0, name)


class Violation(NamedTuple):
    k: int | None
    message: str


def validate_model(model: SystemModel, horizon: int) -> list[Violation]:
    """List every violated structural condition over ``k = 0..horizon``.

    Checks the rank condition rank(H(k) G(k-1)) = rank(G(k-1)) = dim_d
    (with G(0) standing in for G(-1) at k = 0, which is what the filter
    uses for its first gain), definiteness of Q, R and P0, and the
    dimension inequalities that follow from the rank condition. An empty
    list means the model is usable.
    """
    out: list[Violation] = []
    nx, ny, nd = model.dim_x, model.dim_y, model.dim_d
    if nx < nd:
        out.append(Violation(None, f"dim_x={nx} < dim_d={nd}"))
    if ny < nd:
        out.append(Violation(None, f"dim_y={ny} < dim_d={nd}"))
    P0 = np.asarray(model.P0)
    if not np.allclose(P0, P0.T) or np.linalg.eigvalsh(sym(P0)).min() < -1e-12 * max(1.0, np.abs(P0).max()):
        out.append(Violation(None, "P0 is not symmetric PSD"))
    for k in range(horizon + 1):
        Gp = model.G(max(k - 1, 0))
        H = model.H(k)
        rg = numerical_rank(Gp)
        rhg = numerical_rank(H @ Gp)
        if rg != nd:
            out.append(Violation(k, f"rank(G({max(k - 1, 0)}))={rg} != dim_d={nd}"))
        if rhg != nd:
            out.append(Violation(k, f"rank(H({k}) G({max(k - 1, 0)}))={rhg} != dim_d={nd}"))
        Q = model.Q(k)
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(sym(Q)).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            out.append(Violation(k, f"Q({k}) is not symmetric PSD"))
        R = model.R(k)
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(sym(R)).min() <= 0.0:
            out.append(Violation(k, f"R({k}) is not symmetric positive definite"))
    return out


def round_half_away(x):
    """Nearest integer with ties away from zero (unlike ``np.round``)."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(int)


@dataclass(frozen=True)
class InputSignal:
    """Generator of the exogenous input sequence ``d[0], d[1], ...``.

    ``kind`` is one of

    * ``"formula"`` -- ``d[j] = amplitude * cos(frequency * (j + 1)) + offset``,
      optionally rounded (half away from zero); ``j + 1`` is the step the
      input drives.
    * ``"uniform"`` -- i.i.d. uniform on ``[low, high]`` per component.
    * ``"constant"`` -- ``value`` at every step.
    * ``"callable"`` -- ``params["fn"](j)`` returns the vector.
    """

    dim_d: int
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def is_random(self) -> bool:
        return self.kind == "uniform"

    def sequence(self, horizon: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Inputs ``d[0..horizon-1]`` as an array of shape ``(horizon, dim_d)``."""
        p = self.params
        if self.kind == "formula":
            k = np.arange(1, horizon + 1, dtype=float)
            val = p.get("amplitude", 1.0) * np.cos(p.get("frequency", 1.0) * k) + p.get("offset", 0.0)
            if p.get("round", False):
                val = round_half_away(val).astype(float)
            d = np.repeat(val[:, None], self.dim_d, axis=1)
        elif self.kind == "uniform":
            if rng is None:
                raise ValueError("a random input needs a generator")
            d = rng.uniform(p.get("low", 0.0), p.get("high", 1.0), size=(horizon, self.dim_d))
        elif self.kind == "constant":
            v = np.broadcast_to(np.asarray(p.get("value", 0.0), dtype=float), (self.dim_d,))
            d = np.tile(v, (horizon, 1))
        elif self.kind == "callable":
            fn = p["fn"]
            d = np.array([np.atleast_1d(np.asarray(fn(j), dtype=float)) for j in range(horizon)])
            d = d.reshape(horizon, -1)
        else:
            raise ValueError(f"unknown input kind {self.kind!r}")
        if d.shape != (horizon, self.dim_d):
            raise DimensionError(f"input generator produced shape {d.shape}, expected {(horizon, self.dim_d)}")
        return d


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (K+1, dim_x)
    measurements: np.ndarray  # (K+1, dim_y)
    inputs: np.ndarray  # (K, dim_d)

    def __post_init__(self):
        if not (len(self.states) == len(self.measurements) == len(self.inputs) + 1):
            raise DimensionError("trajectory lengths are inconsistent")

    @property
    def horizon(self) -> int:
        return len(self.inputs)


def seed_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent generators derived from one seed.

    Stream 0 drives the input sequence, stream 1 the process and
    measurement noise and stream 2 the privacy perturbation. Child ``i`` does
    not depend on ``n``, so asking for fewer streams yields a prefix.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64)
    return [np.random.default_rng(c) for c in ss.spawn(n)]


def simulate(model: SystemModel, signal: InputSignal, horizon: int, seed: int = 0,
             noise_free: bool = False, inputs: np.ndarray | None = None) -> Trajectory:
    """Draw one trajectory of length ``horizon`` (states ``x[0..horizon]``).

    The input sequence and the noise use independent child streams of
    ``seed``, so the same seed yields the same inputs with or without noise.
    ``inputs`` overrides the generator when given.
    """
    if signal.dim_d != model.dim_d:
        raise DimensionError(f"input dimension {signal.dim_d} != model dim_d {model.dim_d}")
    in_rng, noise_rng = seed_streams(seed, 2)
    d = signal.sequence(horizon, in_rng) if inputs is None else np.asarray(inputs, dtype=float)
    if d.shape != (horizon, model.dim_d):
        raise DimensionError(f"inputs have shape {d.shape}")

    xs = np.empty((horizon + 1, model.dim_x))
    ys = np.empty((horizon + 1, model.dim_y))
    if noise_free:
        x = np.array(model.x0_mean, dtype=float)
    else:
        x = model.x0_mean + sample_gaussian(noise_rng, model.P0)
    xs[0] = x
    ys[0] = model.H(0) @ x + (0.0 if noise_free else sample_gaussian(noise_rng, model.R(0)))
    for k in range(1, horizon + 1):
        x = model.F(k - 1) @ x + model.G(k - 1) @ d[k - 1]
        if not noise_free:
            x = x + sample_gaussian(noise_rng, model.Q(k - 1))
        xs[k] = x
        y = model.H(k) @ x
        if not noise_free:
            y = y + sample_gaussian(noise_rng, model.R(k))
        ys[k] = y
    return Trajectory(xs, ys, d)


def simulate_batch(model: SystemModel, inputs: np.ndarray, runs: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Many noisy trajectories driven by one input sequence, drawn jointly.

    Returns states ``(runs, K+1, dim_x)`` and measurements ``(runs, K+1, dim_y)``.
    The draws differ from per-run :func:`simulate` calls; this is meant for
    large-sample statistics.
    """
    inputs = np.asarray(inputs, dtype=float)
    horizon = len(inputs)
    xs = np.empty((runs, horizon + 1, model.dim_x))
    ys = np.empty((runs, horizon + 1, model.dim_y))
    x = model.x0_mean + sample_gaussian(rng, model.P0, runs)
    for k in range(horizon + 1):
        if k > 0:
            x = x @ model.F(k - 1).T + model.G(k - 1) @ inputs[k - 1] + sample_gaussian(rng, model.Q(k - 1), runs)
        xs[:, k] = x
        ys[:, k] = x @ model.H(k).T + sample_gaussian(rng, model.R(k), runs)
    return xs, ys


def building_occupancy_scenario() -> tuple[SystemModel, InputSignal]:
    """Scalar CO2 model: x[k] = 0.75 x[k-1] + 1.75 d[k-1] + w, y = x + v.

    Occupancy is ``d[k-1] = round(0.5 cos(k) + 5)``.
    """
    model = SystemModel.time_invariant(
        F=[[0.75]], G=[[1.75]], H=[[1.0]], Q=[[0.1]], R=[[0.05]],
        x0_mean=[0.01], P0=[[0.01]], name="building",
    )
    signal = InputSignal(1, "formula", {"amplitude": 0.5, "frequency": 1.0, "offset": 5.0, "round": True})
    return model, signal


def two_dim_scenario() -> tuple[SystemModel, InputSignal]:
    """Double-integrator-like model with a scalar input uniform on [0, 5]."""
    model = SystemModel.time_invariant(
        F=[[1.0, 1.0], [0.0, 1.0]], G=[[0.5], [0.5]], H=np.eye(2), Q=2.0 * np.eye(2),
        R=np.eye(2), x0_mean=[2.0, 2.0], P0=0.1 * np.eye(2), name="two_dim",
    )
    signal = InputSignal(1, "uniform", {"low": 0.0, "high": 5.0})
    return model, signal


SCENARIOS = {
    "building": building_occupancy_scenario,
    "two_dim": two_dim_scenario,
}


def _matrix(v, rows: int | None = None) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(rows, -1) if rows else a.reshape(1, -1)
    return a


def model_from_dict(doc: dict, name: str = "custom") -> tuple[SystemModel, InputSignal]:
    """Build a model and input from the JSON ``model``/``input`` sections.

    Matrices are nested row-major lists; scalars are accepted for 1x1
    entries. ``G`` given as a flat list is read as a column.
    """
    m = doc["model"]
    F = _matrix(m["F"])
    n = F.shape[0]
    G = np.asarray(m["G"], dtype=float)
    G = G.reshape(n, -1) if G.ndim < 2 else G
    model = SystemModel.time_invariant(
        F=F, G=G, H=_matrix(m["H"]), Q=_matrix(m["Q"]), R=_matrix(m["R"]),
        x0_mean=np.atleast_1d(np.asarray(m["x0_mean"], dtype=float)), P0=_matrix(m["P0"], n),
        name=name,
    )
    inp = doc.get("input", {"kind": "constant", "params": {"value": 0.0}})
    signal = InputSignal(model.dim_d, inp["kind"], dict(inp.get("params", {})))
    return model, signal


def load_scenario(config: str | Path | dict) -> tuple[SystemModel, InputSignal]:
    """Resolve a scenario name, a JSON file path, or an already-parsed dict."""
    if isinstance(config, dict):
        if "scenario" in config and "model" not in config:
            return load_scenario(config["scenario"])
        return model_from_dict(config)
    if str(config) in SCENARIOS:
        return SCENARIOS[str(config)]()
    path = Path(config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "model" not in doc and "scenario" in doc:
        return load_scenario(doc["scenario"])
    return model_from_dict(doc, name=path.stem)


def random_model(rng: np.random.Generator, dim_x: int, dim_y: int, dim_d: int,
                 time_varying: bool = True, spectral_radius: float = 0.95,
                 name: str = "random") -> SystemModel:
    """Random stable model satisfying the rank condition (test and bench fixture).

    Time-varying models get a fresh matrix set per step, derived
    deterministically from the generator state at construction time.
    """
    base_seed = int(rng.integers(0, 2**63 - 1))

    def draw(k: int):
        r = np.random.default_rng([base_seed, k if time_varying else 0])
        A = r.standard_normal((dim_x, dim_x))
        A *= spectral_radius / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
        G = r.standard_normal((dim_x, dim_d))
        H = r.standard_normal((dim_y, dim_x))
        Lq = r.standard_normal((dim_x, dim_x)) * 0.5
        Lr = r.standard_normal((dim_y, dim_y)) * 0.3
        Q = Lq @ Lq.T + 0.05 * np.eye(dim_x)
        R = Lr @ Lr.T + 0.2 * np.eye(dim_y)
        return A, G, H, Q, R

    cache: dict[int, tuple] = {}

    def get(k: int, i: int) -> np.ndarray:
        kk = k if time_varying else 0
        if kk not in cache:
            cache[kk] = draw(kk)
        return cache[kk][i]

    r0 = np.random.default_rng([base_seed, 10**9])
    x0 = r0.standard_normal(dim_x)
    L0 = r0.standard_normal((dim_x, dim_x)) * 0.4
    P0 = L0 @ L0.T + 0.1 * np.eye(dim_x)
    return SystemModel(dim_x, dim_y, dim_d,
                       F=lambda k: get(k, 0), G=lambda k: get(k, 1), H=lambda k: get(k, 2),
                       Q=lambda k: get(k, 3), R=lambda k: get(k, 4),
                       x0_mean=x0, P0=P0, name=name)


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 mixing function on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def run_seed(master_seed: int, run_index: int) -> int:
    """Per-run seed derived from the master seed and run index."""
    return splitmix64((splitmix64(int(master_seed) & 0xFFFFFFFFFFFFFFFF) + int(run_index)) & 0xFFFFFFFFFFFFFFFF)


__all__ = [
    "SystemModel", "InputSignal", "Trajectory", "Violation", "validate_model", "simulate", "simulate_batch",
    "building_occupancy_scenario", "two_dim_scenario", "load_scenario", "model_from_dict",
    "random_model", "round_half_away", "run_seed", "seed_streams", "splitmix64", "SCENARIOS",
]
