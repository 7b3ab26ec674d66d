"""Experiment drivers behind the command line: single runs, Monte Carlo
averages, the bound-cost benchmark and (epsilon, delta) curves.

All outputs are CSV with ``.`` decimals and ``\\n`` line endings; floats are
written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import crlb, umv
from .design import DEFAULT_SIGMA_FLOOR
from .model import InputSignal, SystemModel, load_scenario, random_model, run_seed
from .moments import assemble_window, init_moments, record_sigma, step_moments
from .pipeline import PrivacyConfig, plan, replay_run
from .threat import DEFAULT_RHO, adversary_errors, dp_delta, infer_input, sensitivity

RUN_FILE = "run_gamma={gamma}.csv"
MC_FILE = "mc.csv"
BENCH_FILE = "bench.csv"
DP_FILE = "dp.csv"


#: Settings that differ from the generic defaults for the built-in scenarios.
SCENARIO_DEFAULTS = {
    "building": {"gamma": [0.5], "N_s": 2},
    "two_dim": {"N_s": 3},
}


@dataclass
class ExperimentConfig:
    scenario: str | dict = "two_dim"
    gamma: list[float] = field(default_factory=lambda: [11.0])
    N_s: int = 3
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    horizon: int = 50
    runs: int = 500
    master_seed: int = 0
    epsilon_grid: list[float] = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])
    output_dir: str = "."
    workers: int = 1
    rho: float = DEFAULT_RHO
    bench_dims: tuple[int, int, int] = (24, 16, 4)
    bench_k: list[int] = field(default_factory=lambda: [8, 16, 32, 50, 64, 1000])
    bench_oracle_max: int = 64
    bench_repeats: int = 5

    def __post_init__(self):
        if not isinstance(self.gamma, list):
            self.gamma = [float(self.gamma)]
        self.gamma = [float(g) for g in self.gamma]
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.horizon < self.N_s:
            raise ValueError(f"horizon {self.horizon} is shorter than the window {self.N_s}")

    @classmethod
    def from_json(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        kw = config_fields(path)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def privacy(self, gamma: float, seed: int | None = None) -> PrivacyConfig:
        return PrivacyConfig(gamma, self.N_s, self.sigma_floor,
                             self.master_seed if seed is None else seed)

    def load(self) -> tuple[SystemModel, InputSignal]:
        return load_scenario(self.scenario)


def config_fields(path: str | Path) -> dict:
    """Experiment fields set in a JSON config file.

    A ``model`` section (with optional ``input``) defines a custom scenario;
    ``seed`` is accepted for ``master_seed``.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    names = {f.name for f in fields(ExperimentConfig)}
    kw = {k: v for k, v in doc.items() if k in names}
    if "model" in doc:
        kw["scenario"] = {"model": doc["model"], **({"input": doc["input"]} if "input" in doc else {})}
    if "seed" in doc:
        kw["master_seed"] = doc["seed"]
    if "bench_dims" in kw:
        kw["bench_dims"] = tuple(kw["bench_dims"])
    return kw


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _gamma_tag(g: float) -> str:
    return repr(float(g))


def _map_runs(fn, n: int, workers: int) -> list:
    """``[fn(0), ..., fn(n-1)]`` in index order, optionally on worker threads."""
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


# --------------------------------------------------------------------------
# run


def run_rows(cfg: ExperimentConfig, gamma: float, model: SystemModel, signal: InputSignal) -> list[list]:
    plans = plan(model, cfg.horizon, cfg.privacy(gamma))

    def one(i: int) -> list[list]:
        traj, x_umv, x_pub = replay_run(plans, model, signal, cfg.horizon, run_seed(cfg.master_seed, i))
        rows = []
        for k in range(1, cfg.horizon + 1):
            est = infer_input(x_pub[k], x_pub[k - 1], model.F(k - 1), model.G(k - 1))
            p = plans[k]
            rows.append([i, k, *traj.states[k], *traj.measurements[k], *x_umv[k], *x_pub[k],
                         *traj.inputs[k - 1], *est.d_hat, *est.d_hat_rounded,
                         p.trace_pcrlb, float(np.trace(p.Sigma_k))])
        return rows

    return [r for rows in _map_runs(one, cfg.runs, cfg.workers) for r in rows]


def run_header(model: SystemModel) -> list[str]:
    def cols(prefix, n):
        return [f"{prefix}_{i}" for i in range(n)]
    dx, dy, dd = model.dim_x, model.dim_y, model.dim_d
    return (["run", "k"] + cols("x_true", dx) + cols("y", dy) + cols("x_umv", dx) + cols("x_priv", dx)
            + cols("d_true", dd) + cols("d_hat", dd) + cols("d_hat_round", dd) + ["trace_pcrlb", "trace_sigma"])


def cmd_run(cfg: ExperimentConfig) -> list[Path]:
    model, signal = cfg.load()
    out = Path(cfg.output_dir)
    paths = []
    for g in cfg.gamma:
        rows = run_rows(cfg, g, model, signal)
        paths.append(write_csv(out / RUN_FILE.format(gamma=_gamma_tag(g)), run_header(model), rows))
    return paths


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McResult:
    gamma: float
    mse_x: float
    mse_d: float
    runs: int
    horizon: int
    err_x: np.ndarray  # (runs, horizon) squared state errors at k = 1..horizon
    err_d: np.ndarray  # (runs, horizon) squared input errors for d[0..horizon-1]


def monte_carlo(cfg: ExperimentConfig, gamma: float, model: SystemModel | None = None,
                signal: InputSignal | None = None, umv_only: bool = False) -> McResult:
    """Average published-state and adversary errors over ``cfg.runs`` runs.

    ``umv_only`` publishes the filter estimate without any perturbation.
    Averages run over ``k = 1 .. horizon`` and ``d[0 .. horizon-1]``.
    """
    if model is None:
        model, signal = cfg.load()
    plans = plan(model, cfg.horizon, cfg.privacy(gamma))

    def one(i: int):
        traj, x_umv, x_pub = replay_run(plans, model, signal, cfg.horizon, run_seed(cfg.master_seed, i))
        x = x_umv if umv_only else x_pub
        ex = np.sum((x[1:] - traj.states[1:]) ** 2, axis=1)
        ed = adversary_errors(traj.inputs[None], x[None], model)[0]
        return ex, ed

    res = _map_runs(one, cfg.runs, cfg.workers)
    err_x = np.array([r[0] for r in res])
    err_d = np.array([r[1] for r in res])
    return McResult(gamma, float(err_x.mean()), float(err_d.mean()), cfg.runs, cfg.horizon, err_x, err_d)


def cmd_mc(cfg: ExperimentConfig) -> Path:
    model, signal = cfg.load()
    rows = []
    for g in cfg.gamma:
        r = monte_carlo(cfg, g, model, signal)
        rows.append([g, r.mse_x, r.mse_d, r.runs, r.horizon])
    return write_csv(Path(cfg.output_dir) / MC_FILE, ["gamma", "mse_x", "mse_d", "runs", "horizon"], rows)


# --------------------------------------------------------------------------
# benchmark


def pcrlb_flops(dim_x: int, dim_y: int, dim_d: int, N_s: int) -> int:
    """Leading-order multiply-add count of one windowed-bound evaluation."""
    n = N_s * dim_x
    build = 2 * N_s * N_s * dim_x * dim_x * (dim_x + dim_y) + 2 * n * n * N_s * dim_d
    solve = n ** 3 // 3 + 2 * n * n * (dim_x + N_s * dim_d) + (N_s * dim_d) ** 3
    return int(build + solve + 2 * dim_x ** 3)


def oracle_flops(dim_x: int, dim_y: int, dim_d: int, N_s: int, k: int) -> int:
    """Leading-order multiply-add count of one batch-oracle evaluation."""
    N = (k + 1) * dim_x
    ny = (k + 1) * dim_y
    n = N_s * dim_x
    stacked = 4 * N ** 3 + 4 * ny * N * N + 2 * n * ny * ny
    fisher = n ** 3 // 3 + 2 * n * n * k * dim_d + 2 * n * (k * dim_d) ** 2 + 9 * (k * dim_d) ** 3
    return int(stacked + fisher)


def _median_ns(fn, repeats: int) -> int:
    fn()  # warm caches
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        ts.append(time.perf_counter_ns() - t0)
    return int(np.median(ts))


def bench_model(cfg: ExperimentConfig) -> SystemModel:
    dx, dy, dd = cfg.bench_dims
    return random_model(np.random.default_rng(cfg.master_seed), dx, dy, dd, time_varying=True,
                        name="bench")


def bench_rows(cfg: ExperimentConfig) -> list[list]:
    """Median wall time of the two bound evaluations at each ``k``."""
    model = bench_model(cfg)
    dx, dy, dd = cfg.bench_dims
    N_s = cfg.N_s
    k_top = max(cfg.bench_k)
    sigma = cfg.sigma_floor * np.eye(dx)
    gains, _ = umv.gain_sequence(model, k_top)

    # Advance the moments once, keeping a snapshot at every requested k.
    snaps = {}
    mw = record_sigma(init_moments(model, gains[0], N_s), sigma)
    for k in range(1, k_top + 1):
        mw = record_sigma(step_moments(mw, model, gains[k], k), sigma)
        if k in cfg.bench_k:
            snaps[k] = mw

    rows = []
    for k in sorted(cfg.bench_k):
        mwk = snaps[k]
        hist = gains[k - N_s + 1:k + 1]

        def windowed():
            wb = assemble_window(mwk)
            ws = crlb.build_tilde_L(model, hist, k)
            return crlb.pcrlb(sigma, crlb.pcrlb_A(wb, ws), model.G(k - 1))

        rows.append([k, "pcrlb", _median_ns(windowed, cfg.bench_repeats), pcrlb_flops(dx, dy, dd, N_s)])
        if k <= cfg.bench_oracle_max:
            sigmas = [sigma] * N_s

            def oracle():
                return crlb.crlb_oracle(model, gains[:k + 1], sigmas, k, N_s, k_max=cfg.bench_oracle_max)

            rows.append([k, "crlb_oracle", _median_ns(oracle, cfg.bench_repeats),
                         oracle_flops(dx, dy, dd, N_s, k)])
    return rows


def cmd_bench(cfg: ExperimentConfig) -> Path:
    return write_csv(Path(cfg.output_dir) / BENCH_FILE, ["k", "path", "wall_ns", "flop_est"], bench_rows(cfg))


def loglog_slope(ks: Sequence[float], ts: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ks), np.log(ts), 1)[0])


# --------------------------------------------------------------------------
# differential privacy


def dp_rows(cfg: ExperimentConfig, model: SystemModel | None = None) -> list[list]:
    """``delta`` for each ``(gamma, epsilon)`` at the last step of the horizon."""
    if model is None:
        model, _ = cfg.load()
    k = cfg.horizon
    rows = []
    for g in cfg.gamma:
        p = plan(model, k, cfg.privacy(g))[k]
        dq = sensitivity(p.gain, model.H(k), model.G(k - 1), p.cov_estimate + p.Sigma_k, cfg.rho)
        for eps in cfg.epsilon_grid:
            rows.append([g, float(eps), dp_delta(float(eps), dq)[0], dq])
    return rows


def cmd_dp_curve(cfg: ExperimentConfig) -> Path:
    if not cfg.epsilon_grid:
        raise ValueError("epsilon grid is empty")
    return write_csv(Path(cfg.output_dir) / DP_FILE, ["gamma", "epsilon", "delta", "sensitivity"], dp_rows(cfg))
