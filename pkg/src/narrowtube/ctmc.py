"""Birth-death chain for the limiting glued diffusion, plus the 1d
width-driven bridge process.

The chain discretizes the generator built from a scale function u and a
speed measure v: interior states jump to neighbors at rates read off the
divided-difference form of D_v D_u, the atom of v sits entirely in the cell
of the grid point 0, and both ends of the grid absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .geometry import CrossSectionFamily
from .scale_speed import ScaleSpeedTable
from .simulate2d import ExitObservation, MonteCarloSummary, ReflectedPathState

__all__ = [
    "CtmcModel",
    "CtmcExitSolve",
    "make_ctmc_grid",
    "build_ctmc",
    "simulate_ctmc",
    "ctmc_exit_batch",
    "ctmc_marginal_batch",
    "exit_stats_linear_solve",
    "simulate_hat_process",
    "hat_exit_batch",
    "hat_marginal_batch",
    "default_hat_step_size",
    "DEFAULT_DRIFT_CAP",
]

DEFAULT_DRIFT_CAP = 1e7


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """Absorbing birth-death chain on a spatial grid.

    dv holds the per-state speed-cell masses (atom included at 0); the end
    states carry no dynamics and absorb.
    """

    grid: np.ndarray
    rate_up: np.ndarray
    rate_down: np.ndarray
    hold_rate: np.ndarray
    up_prob: np.ndarray
    down_prob: np.ndarray
    dv: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        for name in ("grid", "rate_up", "rate_down", "hold_rate", "up_prob",
                     "down_prob", "dv", "du"):
            getattr(self, name).setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.grid.size

    def state_index(self, x: float) -> int:
        i = int(np.argmin(np.abs(self.grid - x)))
        return i

    def generator_apply(self, f_values: np.ndarray) -> np.ndarray:
        """Discrete generator action; zero at the absorbing ends."""
        f = np.asarray(f_values, dtype=float)
        out = np.zeros_like(f)
        out[1:-1] = (self.rate_up[1:-1] * (f[2:] - f[1:-1])
                     + self.rate_down[1:-1] * (f[:-2] - f[1:-1]))
        return out

    def to_csv(self, path: str, header: str = "") -> None:
        with open(path, "w") as fh:
            if header:
                fh.write(header if header.endswith("\n") else header + "\n")
            fh.write("state,up_prob,hold_rate,dv\n")
            for i in range(self.n_states):
                fh.write(f"{float(self.grid[i])!r},{float(self.up_prob[i])!r},"
                         f"{float(self.hold_rate[i])!r},{float(self.dv[i])!r}\n")


def make_ctmc_grid(table: ScaleSpeedTable, n_nodes: int = 2001,
                   bounds: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Grid uniform in the u-scale with 0 forced in as a node.

    Equal u-increments make the interior jump probabilities 1/2 away from
    the junction, which keeps the chain well conditioned.
    """
    if n_nodes < 5:
        raise ValueError("need at least 5 grid nodes")
    lo, hi = bounds if bounds is not None else (table.grid[0], table.grid[-1])
    if not lo < 0.0 < hi:
        raise ValueError("grid bounds must straddle 0")
    scout = np.unique(np.concatenate([
        np.linspace(lo, hi, max(8 * n_nodes, 20001)), [0.0]]))
    u_scout = np.array([table.u_at(x) for x in scout])
    u_targets = np.linspace(u_scout[0], u_scout[-1], n_nodes)
    xs = np.interp(u_targets, u_scout, scout)
    xs[0], xs[-1] = lo, hi
    # snap the node nearest to 0 onto 0 exactly
    xs[int(np.argmin(np.abs(xs)))] = 0.0
    xs = np.unique(xs)
    if xs.size < 5:
        raise ValueError("grid collapsed; widen bounds or add nodes")
    return xs


def build_ctmc(table: ScaleSpeedTable, grid: Optional[np.ndarray] = None) -> CtmcModel:
    """Chain whose generator is the divided-difference form of D_v D_u."""
    if grid is None:
        grid = make_ctmc_grid(table)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 5:
        raise ValueError("grid must be a 1d array with at least 5 nodes")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing without duplicates")
    if not np.any(grid == 0.0):
        raise ValueError("grid must contain 0 as a node")

    u = np.array([table.u_at(x) for x in grid])
    du = np.diff(u)
    if np.any(du <= 0.0):
        raise ValueError("u must be strictly increasing on the grid")

    mids = 0.5 * (grid[:-1] + grid[1:])
    v_mid = np.array([table.v_cont_at(m) for m in mids])
    n = grid.size
    dv = np.zeros(n)
    dv[1:-1] = v_mid[1:] - v_mid[:-1]
    atom_idx = int(np.nonzero(grid == table.atom_location)[0][0]) \
        if np.any(grid == table.atom_location) else -1
    if table.atom_mass > 0.0 and 0 < atom_idx < n - 1:
        dv[atom_idx] += table.atom_mass
    if np.any(dv[1:-1] <= 0.0):
        raise ValueError("nonpositive speed cell; refine the table or grid")

    rate_up = np.zeros(n)
    rate_down = np.zeros(n)
    rate_up[1:-1] = (1.0 / du[1:]) / dv[1:-1]
    rate_down[1:-1] = (1.0 / du[:-1]) / dv[1:-1]
    hold = rate_up + rate_down
    up_prob = np.zeros(n)
    up_prob[1:-1] = rate_up[1:-1] / hold[1:-1]
    down_prob = np.zeros(n)
    down_prob[1:-1] = 1.0 - up_prob[1:-1]
    return CtmcModel(grid=grid, rate_up=rate_up, rate_down=rate_down,
                     hold_rate=hold, up_prob=up_prob, down_prob=down_prob,
                     dv=dv, du=du)


def _interval_indices(model: CtmcModel, interval: Tuple[float, float]) -> Tuple[int, int]:
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval must be increasing")
    ia = int(np.argmin(np.abs(model.grid - a)))
    ib = int(np.argmin(np.abs(model.grid - b)))
    span = model.grid[-1] - model.grid[0]
    if abs(model.grid[ia] - a) > 1e-9 * span or abs(model.grid[ib] - b) > 1e-9 * span:
        raise ValueError("interval endpoints must be grid points")
    if ib - ia < 2:
        raise ValueError("interval must contain interior states")
    return ia, ib


def _start_index(model: CtmcModel, start: float) -> int:
    i = model.state_index(float(start))
    if not 0 < i < model.n_states - 1:
        raise ValueError("start state must be interior")
    return i


def simulate_ctmc(model: CtmcModel, start_state: float, rng,
                  T: Optional[float] = None,
                  interval: Optional[Tuple[float, float]] = None,
                  ) -> Union[float, ExitObservation]:
    """One chain path: marginal value at T, or absorption record on interval.

    Exactly one of T and interval must be given. start_state snaps to the
    nearest grid node.
    """
    if (T is None) == (interval is None):
        raise ValueError("pass exactly one of T or interval")
    seed = rng if isinstance(rng, (int, np.integer)) else int(
        rng.integers(0, 2**63 - 1))
    i0 = _start_index(model, start_state)
    if T is not None:
        out = np.empty(1, dtype=np.int64)
        kernels.kctmc_marginal(model.hold_rate, model.up_prob, i0, float(T),
                               np.uint64(seed), out)
        return float(model.grid[out[0]])
    ia, ib = _interval_indices(model, interval)
    if not ia < i0 < ib:
        raise ValueError("start state must be strictly inside the interval")
    out = np.empty((1, 2), dtype=np.float64)
    kernels.kctmc_exit(model.hold_rate, model.up_prob, i0, ia, ib,
                       np.uint64(seed), out)
    side = "right" if out[0, 1] > 0 else "left"
    x_end = float(model.grid[ib] if out[0, 1] > 0 else model.grid[ia])
    final = ReflectedPathState(t=float(out[0, 0]), x=x_end, y=0.0)
    return ExitObservation(exit_time=float(out[0, 0]), exit_side=side,
                           final_state=final, censored=False)


def ctmc_exit_batch(model: CtmcModel, start_state: float,
                    interval: Tuple[float, float], n_paths: int,
                    rng_seed: int, workers: int = 1,
                    ) -> Tuple[MonteCarloSummary, MonteCarloSummary]:
    """Absorption probability (right side) and mean absorption time."""
    ia, ib = _interval_indices(model, interval)
    i0 = _start_index(model, start_state)
    if not ia < i0 < ib:
        raise ValueError("start state must be strictly inside the interval")
    kernels.apply_workers(workers)
    out = np.empty((int(n_paths), 2), dtype=np.float64)
    kernels.kctmc_exit(model.hold_rate, model.up_prob, i0, ia, ib,
                       np.uint64(rng_seed), out)
    right = (out[:, 1] > 0).astype(float)
    return (MonteCarloSummary.from_samples(right),
            MonteCarloSummary.from_samples(out[:, 0]))


def ctmc_marginal_batch(model: CtmcModel, start_state: float, T: float,
                        n_paths: int, rng_seed: int,
                        workers: int = 1) -> np.ndarray:
    """Chain positions at time T for n_paths independent paths."""
    if T <= 0.0:
        raise ValueError("T must be positive")
    i0 = _start_index(model, start_state)
    kernels.apply_workers(workers)
    out = np.empty(int(n_paths), dtype=np.int64)
    kernels.kctmc_marginal(model.hold_rate, model.up_prob, i0, float(T),
                           np.uint64(rng_seed), out)
    return model.grid[out]


@dataclass(frozen=True)
class CtmcExitSolve:
    """Per-state absorption statistics on a subinterval of the grid."""

    states: np.ndarray
    prob_right: np.ndarray
    mean_time: np.ndarray


def exit_stats_linear_solve(model: CtmcModel,
                            interval: Tuple[float, float]) -> CtmcExitSolve:
    """Solve the absorbed-chain boundary problems on the interval.

    prob_right solves Lg = 0 with g(a)=0, g(b)=1; mean_time solves
    Lg = -1 with zero boundary data.
    """
    ia, ib = _interval_indices(model, interval)
    idx = np.arange(ia + 1, ib)
    m = idx.size
    # interior rows over the restricted chain; rates at ia+1..ib-1 are the
    # same as in the full model because cells only depend on neighbors
    up = model.rate_up[idx]
    dn = model.rate_down[idx]
    ab = np.zeros((3, m))
    ab[0, 1:] = up[:-1]
    ab[1, :] = -(up + dn)
    ab[2, :-1] = dn[1:]

    rhs_p = np.zeros(m)
    rhs_p[-1] = -up[-1]  # boundary value 1 at ib
    rhs_t = -np.ones(m)
    sol_p = solve_banded((1, 1), ab, rhs_p)
    sol_t = solve_banded((1, 1), ab, rhs_t)

    states = model.grid[ia:ib + 1]
    prob = np.concatenate([[0.0], sol_p, [1.0]])
    times = np.concatenate([[0.0], sol_t, [0.0]])
    return CtmcExitSolve(states=states, prob_right=prob, mean_time=times)


def default_hat_step_size(family: CrossSectionFamily) -> float:
    """Resolve the drift feature of width delta."""
    delta = float(family.descriptor[1])
    if delta <= 0.0:
        delta = 1.0
    return min(1e-6, (delta / 10.0) ** 2)


def simulate_hat_process(family: CrossSectionFamily, start: float, dt: float,
                         rng, T: Optional[float] = None,
                         interval: Optional[Tuple[float, float]] = None,
                         drift_cap: float = DEFAULT_DRIFT_CAP,
                         t_max: Optional[float] = None,
                         ) -> Union[float, ExitObservation]:
    """One path of the 1d process with drift width'/(2 width).

    Exactly one of T and interval must be given.
    """
    if (T is None) == (interval is None):
        raise ValueError("pass exactly one of T or interval")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    seed = rng if isinstance(rng, (int, np.integer)) else int(
        rng.integers(0, 2**63 - 1))
    if T is not None:
        out = np.empty(1, dtype=np.float64)
        n_steps = max(1, int(round(T / dt)))
        kernels.khat_marginal(family.descriptor, float(start), n_steps,
                              float(dt), float(drift_cap), np.uint64(seed), out)
        return float(out[0])
    a, b = float(interval[0]), float(interval[1])
    if not a < float(start) < b:
        raise ValueError("start must lie strictly inside the interval")
    if t_max is None:
        t_max = 200.0 * (b - a) ** 2
    out = np.empty((1, 3), dtype=np.float64)
    kernels.khat_exit(family.descriptor, float(start), a, b, float(dt),
                      float(t_max), float(drift_cap), np.uint64(seed), out)
    row = out[0]
    if row[2] > 0.0:
        raise RuntimeError("drift bound exceeded; the path was aborted")
    censored = row[1] == 0.0
    side = "none" if censored else ("right" if row[1] > 0 else "left")
    x_end = b if row[1] > 0 else (a if row[1] < 0 else float("nan"))
    final = ReflectedPathState(t=float(row[0]), x=x_end, y=0.0)
    return ExitObservation(exit_time=float(row[0]), exit_side=side,
                           final_state=final, censored=bool(censored))


def hat_exit_batch(family: CrossSectionFamily, start: float,
                   interval: Tuple[float, float], dt: float, n_paths: int,
                   rng_seed: int, workers: int = 1,
                   t_max: Optional[float] = None,
                   drift_cap: float = DEFAULT_DRIFT_CAP,
                   ) -> Tuple[MonteCarloSummary, MonteCarloSummary]:
    """Exit-probability and mean-exit-time summaries for the 1d process."""
    a, b = float(interval[0]), float(interval[1])
    if not a < float(start) < b:
        raise ValueError("start must lie strictly inside the interval")
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    if t_max is None:
        t_max = 200.0 * (b - a) ** 2
    kernels.apply_workers(workers)
    out = np.empty((int(n_paths), 3), dtype=np.float64)
    kernels.khat_exit(family.descriptor, float(start), a, b, float(dt),
                      float(t_max), float(drift_cap), np.uint64(rng_seed), out)
    aborted = int((out[:, 2] > 0).sum())
    if aborted:
        raise RuntimeError(f"{aborted} paths hit the drift bound")
    censored = out[:, 1] == 0.0
    n_cens = int(censored.sum())
    if n_cens > 0.01 * n_paths:
        raise RuntimeError(f"{n_cens}/{n_paths} paths censored")
    keep = ~censored
    prob = MonteCarloSummary.from_samples((out[keep, 1] > 0).astype(float),
                                          n_cens)
    mean_time = MonteCarloSummary.from_samples(out[keep, 0], n_cens)
    return prob, mean_time


def hat_marginal_batch(family: CrossSectionFamily, start: float, T: float,
                       dt: float, n_paths: int, rng_seed: int,
                       workers: int = 1,
                       drift_cap: float = DEFAULT_DRIFT_CAP) -> np.ndarray:
    if T <= 0.0:
        raise ValueError("T must be positive")
    n_steps = max(1, int(round(T / dt)))
    kernels.apply_workers(workers)
    out = np.empty(int(n_paths), dtype=np.float64)
    kernels.khat_marginal(family.descriptor, float(start), n_steps, float(dt),
                          float(drift_cap), np.uint64(rng_seed), out)
    return out
