"""Reflected planar Wiener process in a narrow tube.

Euler proposals with mirror reflection at the walls; up to 8 mirror passes
per step, then a clamping projection so containment is exact. Batch runs go
through the compiled kernels with one RNG stream per path, so results do not
depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .geometry import CrossSectionFamily

__all__ = [
    "ReflectedPathState",
    "ExitObservation",
    "MonteCarloSummary",
    "step",
    "sample_exit",
    "mc_exit_statistics",
    "sample_marginal",
    "local_time_diagnostic",
    "default_step_size",
]


@dataclass
class ReflectedPathState:
    """Snapshot of one reflected path.

    local_time_proxy accumulates the displacement length removed by
    reflections; scaled by the tube thickness it estimates the boundary
    local time (calibration constant 1, see the local-time diagnostic).
    """

    t: float
    x: float
    y: float
    local_time_proxy: float = 0.0
    reflections: int = 0


@dataclass
class ExitObservation:
    exit_time: float
    exit_side: str  # "left" | "right" | "none" when censored
    final_state: ReflectedPathState
    censored: bool = False


@dataclass
class MonteCarloSummary:
    n_paths: int
    mean: float
    std_error: float
    confidence_radius: float
    tail_file: Optional[str] = None
    n_censored: int = 0

    @classmethod
    def from_samples(cls, values: np.ndarray, n_censored: int = 0) -> "MonteCarloSummary":
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError("need at least 2 samples for a summary")
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(values.size))
        return cls(int(values.size), mean, se, 1.96 * se, None, n_censored)


def default_step_size(eps: float) -> float:
    """Step size small enough to resolve reflections in an eps-thick tube."""
    return min(1e-6, eps * eps / 25.0)


def _require_inside(family: CrossSectionFamily, x: float, y: float) -> None:
    lo = family.lower(x)
    up = family.upper(x)
    if not (-lo[0] <= y <= up[0]):
        raise ValueError(f"start ({x}, {y}) lies outside the tube")


def _coerce_seed(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    raise TypeError("rng must be an integer seed or numpy Generator")


def step(state: ReflectedPathState, family: CrossSectionFamily, dt: float,
         rng: np.random.Generator) -> ReflectedPathState:
    """One Euler-with-reflection increment."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    _require_inside(family, state.x, state.y)
    z = rng.standard_normal(2)
    sq = math.sqrt(dt)
    nx, ny, removed, events = kernels.reflect_move(
        family.descriptor, state.x, state.y, sq * z[0], sq * z[1],
        family.domain_halfwidth)
    if not (math.isfinite(nx) and math.isfinite(ny)):
        raise RuntimeError("non-finite coordinates produced by stepping")
    lo = family.lower(nx)[0]
    up = family.upper(nx)[0]
    assert -lo <= ny <= up, "containment violated after reflection"
    return ReflectedPathState(
        t=state.t + dt,
        x=float(nx),
        y=float(ny),
        local_time_proxy=state.local_time_proxy + float(removed),
        reflections=state.reflections + int(events),
    )


def _validate_exit_args(family, start, interval, dt):
    a, b = float(interval[0]), float(interval[1])
    if not a < float(start[0]) < b:
        raise ValueError(f"start x {start[0]} not strictly inside ({a}, {b})")
    if dt <= 0.0 or dt > (b - a) ** 2 / 100.0:
        raise ValueError("dt must satisfy 0 < dt <= (b-a)^2/100")
    hw = family.domain_halfwidth
    if a < -hw or b > hw:
        raise ValueError("interval must lie inside the family window")
    _require_inside(family, float(start[0]), float(start[1]))
    return a, b


def sample_exit(family: CrossSectionFamily, start: Tuple[float, float],
                interval: Tuple[float, float], dt: float, t_max: float,
                rng) -> ExitObservation:
    """Run a single path until X leaves (a, b) or t_max is hit."""
    a, b = _validate_exit_args(family, start, interval, dt)
    seed = _coerce_seed(rng)
    out = np.empty((1, 7), dtype=np.float64)
    kernels.k2d_exit(family.descriptor, float(start[0]), float(start[1]),
                     a, b, float(dt), float(t_max), 0.0, np.uint64(seed), out)
    return _exit_row_to_observation(out[0])


def _exit_row_to_observation(row: np.ndarray) -> ExitObservation:
    side_code = row[1]
    censored = side_code == 0.0
    side = "none" if censored else ("right" if side_code > 0 else "left")
    final = ReflectedPathState(t=float(row[0]), x=float(row[5]), y=float(row[6]),
                               local_time_proxy=float(row[3]),
                               reflections=int(row[2]))
    return ExitObservation(exit_time=float(row[0]), exit_side=side,
                           final_state=final, censored=bool(censored))


def _run_exit_batch(family, start, interval, dt, n_paths, rng_seed, t_max,
                    workers, lam=0.0):
    a, b = _validate_exit_args(family, start, interval, dt)
    if t_max is None:
        t_max = 200.0 * (b - a) ** 2
    kernels.apply_workers(workers)
    out = np.empty((int(n_paths), 7), dtype=np.float64)
    kernels.k2d_exit(family.descriptor, float(start[0]), float(start[1]),
                     a, b, float(dt), float(t_max), float(lam),
                     np.uint64(rng_seed), out)
    if not np.isfinite(out).all():
        raise RuntimeError("non-finite values in exit batch")
    return out


def mc_exit_statistics(family: CrossSectionFamily, start: Tuple[float, float],
                       interval: Tuple[float, float], dt: float, n_paths: int,
                       rng_seed: int, workers: int = 1,
                       t_max: Optional[float] = None,
                       ) -> Tuple[MonteCarloSummary, MonteCarloSummary]:
    """Exit-probability and mean-exit-time estimates over n_paths runs.

    Censored paths are excluded from both estimators and reported on the
    summaries; more than 1% censoring fails the run.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    out = _run_exit_batch(family, start, interval, dt, n_paths, rng_seed,
                          t_max, workers)
    censored = out[:, 1] == 0.0
    n_cens = int(censored.sum())
    if n_cens > 0.01 * n_paths:
        raise RuntimeError(
            f"{n_cens}/{n_paths} paths censored; raise t_max or shrink dt")
    keep = ~censored
    right = (out[keep, 1] > 0).astype(float)
    times = out[keep, 0]
    prob = MonteCarloSummary.from_samples(right, n_cens)
    mean_time = MonteCarloSummary.from_samples(times, n_cens)
    return prob, mean_time


def sample_marginal(family: CrossSectionFamily, start: Tuple[float, float],
                    T: float, dt: float, n_paths: int, rng_seed: int,
                    workers: int = 1, return_y: bool = False) -> np.ndarray:
    """x-coordinates of n_paths independent paths at time T."""
    if T <= 0.0:
        raise ValueError("T must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    _require_inside(family, float(start[0]), float(start[1]))
    n_steps = max(1, int(round(T / dt)))
    kernels.apply_workers(workers)
    out = np.empty((int(n_paths), 2), dtype=np.float64)
    kernels.k2d_marginal(family.descriptor, float(start[0]), float(start[1]),
                         n_steps, float(dt), np.uint64(rng_seed), out)
    if not np.isfinite(out).all():
        raise RuntimeError("non-finite values in marginal batch")
    if return_y:
        return out[:, 0].copy(), out[:, 1].copy()
    return out[:, 0].copy()


def local_time_diagnostic(family: CrossSectionFamily,
                          interval: Tuple[float, float], dt: float,
                          n_paths: int, rate: float, rng_seed: int,
                          workers: int = 1,
                          t_max: Optional[float] = None) -> MonteCarloSummary:
    """Estimate E∫ e^{-rate·t} ε dL over the exit time from the interval.

    The interval must sit on one side of the origin. Start is the interval
    midpoint. The reported quantity is the thickness-scaled reflection
    displacement, whose expectation matches the boundary local time.
    """
    a, b = float(interval[0]), float(interval[1])
    if not (a < b and a * b > 0.0):
        raise ValueError("interval endpoints must be on one side of 0")
    if rate < 0.0:
        raise ValueError("rate must be nonnegative")
    mid = 0.5 * (a + b)
    y_mid = 0.5 * (family.upper(mid)[0] - family.lower(mid)[0])
    out = _run_exit_batch(family, (mid, y_mid), (a, b), dt, n_paths, rng_seed,
                          t_max, workers, lam=rate)
    # a censored path still carries the integral up to t_max, which is the
    # quantity of interest here, so keep all paths and report the count
    n_cens = int((out[:, 1] == 0.0).sum())
    values = family.eps * out[:, 4]
    return MonteCarloSummary.from_samples(values, n_cens)
