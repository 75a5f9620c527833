"""Scale functions, speed measures, and gluing parameters.

For a finite-eps tube the pair is u(x) = int_0^x 2*eps/V, v(x) = int_0^x V/eps.
In the eps -> 0 limit of the example family the scale derivative jumps at 0
(2/v1 on the left, 2/(v1+beta) on the right) and the speed measure gains an
atom of mass mu there. Conventions: u(0) = 0, v(0-) = 0, v right-continuous,
so v(0+) equals the atom mass.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .geometry import (
    BUMP_HALFWIDTH,
    STEP_HALFWIDTH,
    CrossSectionFamily,
    ExampleFamilySpec,
    desc_total,
)

__all__ = [
    "ScaleSpeedTable",
    "GluingParameters",
    "compute_scale_speed_eps",
    "feature_breakpoints",
    "limiting_scale_speed",
    "gluing_parameters",
    "hat_exit_time_formula",
    "default_table_grid",
]

TABLE_QUAD_ABS = 1e-9
EXIT_QUAD_ABS = 1e-8


def _side_pieces(grid, values):
    """Piecewise interpolants split at 0 so a kink or jump is never bridged."""
    i0 = int(np.searchsorted(grid, 0.0, side="right"))
    pieces = []
    for lo, hi in ((0, i0), (i0 - 1 if i0 > 0 and grid[i0 - 1] == 0.0 else i0,
                    len(grid))):
        lo = max(lo, 0)
        if hi - lo >= 2:
            f = PchipInterpolator(grid[lo:hi], values[lo:hi])
            pieces.append((grid[lo], grid[hi - 1], f, f.derivative()))
    return pieces


def _piece_eval(pieces, values, x, use_derivative=False):
    for a, b, f, fd in pieces:
        if a <= x <= b:
            return float(fd(x)) if use_derivative else float(f(x))
    if use_derivative:
        return 0.0
    # constant extension outside the tabulated range
    if not pieces or x < pieces[0][0]:
        return float(values[0])
    return float(values[-1])


@dataclasses.dataclass(frozen=True, eq=False)
class ScaleSpeedTable:
    """Tabulated scale u and speed v with an optional atom at 0.

    v_values store right limits, so at a grid point exactly 0 the entry
    already includes the atom. u_fn / v_density_fn, when attached by the
    constructors, evaluate the underlying closed forms between grid points;
    otherwise monotone interpolation of the stored columns is used.
    """

    grid: np.ndarray
    u_values: np.ndarray
    v_values: np.ndarray
    atom_location: float
    atom_mass: float
    u_left_deriv_at0: float
    u_right_deriv_at0: float
    u_fn: Callable[[float], float] | None = None
    v_density_fn: Callable[[float], float] | None = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        u = np.asarray(self.u_values, dtype=float)
        v = np.asarray(self.v_values, dtype=float)
        if grid.ndim != 1 or grid.shape != u.shape or grid.shape != v.shape:
            raise ValueError("grid, u_values, v_values must be equal-length 1d")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.diff(u) <= 0):
            raise ValueError("u_values must be strictly increasing")
        if np.any(np.diff(v) < -1e-15 * max(1.0, float(np.max(np.abs(v))))):
            raise ValueError("v_values must be nondecreasing")
        if self.atom_mass < 0:
            raise ValueError("atom_mass must be nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "u_values", u)
        object.__setattr__(self, "v_values", v)
        # continuous part of v; interpolable across 0
        vc = v - self.atom_mass * (grid >= self.atom_location)
        object.__setattr__(self, "_v_cont", vc)
        object.__setattr__(self, "_u_pieces", _side_pieces(grid, u))
        object.__setattr__(self, "_vc_pieces", _side_pieces(grid, vc))

    def u_at(self, x: float) -> float:
        if self.u_fn is not None:
            return self.u_fn(float(x))
        return _piece_eval(self._u_pieces, self.u_values, float(x))

    def v_cont_at(self, x: float) -> float:
        return _piece_eval(self._vc_pieces, self._v_cont, float(x))

    def v_density_at(self, x: float) -> float:
        """Density of the continuous part of v."""
        if self.v_density_fn is not None:
            return float(self.v_density_fn(float(x)))
        return _piece_eval(self._vc_pieces, self._v_cont, float(x),
                           use_derivative=True)

    def v_at(self, x: float) -> float:
        """Right-continuous v."""
        jump = self.atom_mass if x >= self.atom_location else 0.0
        return self.v_cont_at(x) + jump

    def rescaled(self, c: float) -> "ScaleSpeedTable":
        """Gauge transform (u, v) -> (c*u, v/c); the process is unchanged."""
        if c <= 0:
            raise ValueError("gauge factor must be positive")
        u_fn = self.u_fn
        v_fn = self.v_density_fn
        return ScaleSpeedTable(
            grid=self.grid.copy(),
            u_values=self.u_values * c,
            v_values=self.v_values / c,
            atom_location=self.atom_location,
            atom_mass=self.atom_mass / c,
            u_left_deriv_at0=self.u_left_deriv_at0 * c,
            u_right_deriv_at0=self.u_right_deriv_at0 * c,
            u_fn=(None if u_fn is None else (lambda x, f=u_fn: c * f(x))),
            v_density_fn=(None if v_fn is None
                          else (lambda x, f=v_fn: f(x) / c)),
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# atom_location={self.atom_location!r} "
                     f"atom_mass={self.atom_mass!r} "
                     f"u_left_deriv_at0={self.u_left_deriv_at0!r} "
                     f"u_right_deriv_at0={self.u_right_deriv_at0!r}\n")
            fh.write("x,u,v\n")
            for x, u, v in zip(self.grid, self.u_values, self.v_values):
                fh.write(f"{float(x)!r},{float(u)!r},{float(v)!r}\n")


@dataclasses.dataclass(frozen=True)
class GluingParameters:
    """Derived junction constants of the limit process."""

    inv_u_right: float
    inv_u_left: float
    v_jump: float
    theta: float
    p_plus: float
    p_minus: float


def feature_breakpoints(family: CrossSectionFamily, a: float, b: float) -> list:
    """Abscissae inside (a, b) where the walls change character."""
    pts = {0.0}
    desc = family.descriptor
    if desc is not None:
        delta = desc[1]
        for w in (STEP_HALFWIDTH, BUMP_HALFWIDTH):
            pts.add(w * delta)
            pts.add(-w * delta)
    return sorted(p for p in pts if a < p < b)


def _total_width(family: CrossSectionFamily):
    desc = family.descriptor
    if desc is not None:
        return lambda y: desc_total(desc, y)[0]
    lo, up = family.lower, family.upper
    return lambda y: lo(y)[0] + up(y)[0]


def _quad(f, a, b, points, epsabs):
    if a == b:
        return 0.0
    sign = 1.0
    if a > b:
        a, b = b, a
        sign = -1.0
    pts = [p for p in points if a < p < b]
    val, err = integrate.quad(f, a, b, points=pts or None,
                              epsabs=epsabs, epsrel=epsabs, limit=200)
    if err > max(100.0 * epsabs, 1e-13 * abs(val)):
        raise RuntimeError(
            f"quadrature did not converge on [{a}, {b}]: err={err:.3g}")
    return sign * val


def _cumulative(f, knots, points, epsabs):
    """Values of int_{k0}^{k} f at every knot, by per-segment quadrature."""
    out = np.zeros(len(knots))
    for j in range(len(knots) - 1):
        out[j + 1] = out[j] + _quad(f, knots[j], knots[j + 1], points, epsabs)
    return out


def compute_scale_speed_eps(family: CrossSectionFamily,
                            grid: np.ndarray) -> ScaleSpeedTable:
    """Finite-eps table: u = int_0 2*eps/V, v = int_0 V/eps, no atom."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.max(np.abs(grid)) > family.domain_halfwidth * (1.0 + 1e-12):
        raise ValueError("grid exceeds the family window")
    eps = family.eps
    V = _total_width(family)
    pts = feature_breakpoints(family, float(grid[0]) - 1.0, float(grid[-1]) + 1.0)

    knots = np.unique(np.concatenate([grid, [0.0]]))
    fu = lambda y: 2.0 * eps / V(y)
    fv = lambda y: V(y) / eps
    cu = _cumulative(fu, knots, pts, TABLE_QUAD_ABS)
    cv = _cumulative(fv, knots, pts, TABLE_QUAD_ABS)
    i0 = int(np.searchsorted(knots, 0.0))
    cu -= cu[i0]
    cv -= cv[i0]
    sel = np.searchsorted(knots, grid)
    d0 = 2.0 * eps / V(0.0)
    return ScaleSpeedTable(grid=grid, u_values=cu[sel], v_values=cv[sel],
                           atom_location=0.0, atom_mass=0.0,
                           u_left_deriv_at0=d0, u_right_deriv_at0=d0,
                           u_fn=None, v_density_fn=fv)


def _limit_pieces(spec: ExampleFamilySpec):
    v1 = spec.v1_at
    beta = spec.beta

    def u_prime(y):
        return 2.0 / (v1(y) + (beta if y > 0 else 0.0))

    def v_density(y):
        return v1(y) + (beta if y > 0 else 0.0)

    return u_prime, v_density


def limiting_scale_speed(spec: ExampleFamilySpec,
                         grid: np.ndarray) -> ScaleSpeedTable:
    """Limit table: u' = 2/v1 (x<0), 2/(v1+beta) (x>0); atom mu at 0."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    u_prime, v_density = _limit_pieces(spec)

    knots = np.unique(np.concatenate([grid, [0.0]]))
    cu = _cumulative(u_prime, knots, [0.0], TABLE_QUAD_ABS)
    cvc = _cumulative(v_density, knots, [0.0], TABLE_QUAD_ABS)
    i0 = int(np.searchsorted(knots, 0.0))
    cu -= cu[i0]
    cvc -= cvc[i0]
    sel = np.searchsorted(knots, grid)
    v_vals = cvc[sel] + spec.mu * (grid >= 0.0)

    # cache cumulative u on the knots for fast interior evaluation
    def u_fn(x, _k=knots, _c=cu, _up=u_prime):
        j = int(np.searchsorted(_k, x))
        j = min(max(j, 1), len(_k) - 1)
        base = _k[j - 1] if abs(x - _k[j - 1]) <= abs(_k[j] - x) else _k[j]
        cbase = _c[j - 1] if base == _k[j - 1] else _c[j]
        if x == base:
            return float(cbase)
        val, _ = integrate.quad(_up, base, x, epsabs=1e-12, epsrel=1e-12,
                                limit=100)
        return float(cbase + val)

    alpha = spec.v1_at(0.0)
    return ScaleSpeedTable(grid=grid, u_values=cu[sel], v_values=v_vals,
                           atom_location=0.0, atom_mass=spec.mu,
                           u_left_deriv_at0=2.0 / alpha,
                           u_right_deriv_at0=2.0 / (alpha + spec.beta),
                           u_fn=u_fn, v_density_fn=v_density)


def gluing_parameters(table: ScaleSpeedTable) -> GluingParameters:
    """Junction constants from the one-sided scale derivatives and the atom."""
    dl = table.u_left_deriv_at0
    dr = table.u_right_deriv_at0
    if not (dl > 0.0 and dr > 0.0):
        raise ValueError("one-sided scale derivatives at 0 must be positive")
    inv_r = 1.0 / dr
    inv_l = 1.0 / dl
    total = inv_r + inv_l
    p_plus = inv_r / total
    return GluingParameters(inv_u_right=inv_r, inv_u_left=inv_l,
                            v_jump=table.atom_mass,
                            theta=table.atom_mass / total,
                            p_plus=p_plus, p_minus=1.0 - p_plus)


def hat_exit_time_formula(family: CrossSectionFamily, kappa: float,
                          x: float) -> float:
    """Expected exit time of the width-driven 1d process from (-kappa, kappa).

    Evaluates the closed double-quadrature solution of the stationary
    boundary-value problem for the generator D_v D_u of the finite-eps pair;
    the eps factors cancel, so the formula is written in terms of V alone:

        phi(x) = -int_{-k}^{x} (2/V(y)) W(y) dy + C * int_{-k}^{x} dy/V(y),
        W(y) = int_{-k}^{y} V,  C = [int_{-k}^{k} (2/V) W] / [int_{-k}^{k} 1/V].
    """
    if not 0.0 < kappa <= family.domain_halfwidth * (1.0 + 1e-12):
        raise ValueError("need 0 < kappa <= window halfwidth")
    if abs(x) > kappa:
        raise ValueError("need |x| <= kappa")
    V = _total_width(family)
    pts = feature_breakpoints(family, -kappa, kappa)

    # cumulative antiderivative of V on a dense knot set; inside a segment
    # the remainder is integrated directly so no interpolation error enters
    knots = np.unique(np.concatenate([
        np.linspace(-kappa, kappa, 801),
        np.asarray(pts, dtype=float),
    ]))
    cumv = _cumulative(V, knots, pts, 1e-12)

    def W(y):
        j = int(np.searchsorted(knots, y))
        j = min(max(j, 1), len(knots) - 1)
        base = j - 1 if abs(y - knots[j - 1]) <= abs(knots[j] - y) else j
        if y == knots[base]:
            return cumv[base]
        val, _ = integrate.quad(V, knots[base], y, epsabs=1e-13, epsrel=1e-13,
                                limit=60)
        return cumv[base] + val

    f_num = lambda y: 2.0 * W(y) / V(y)
    f_den = lambda y: 1.0 / V(y)
    num = _quad(f_num, -kappa, kappa, pts, EXIT_QUAD_ABS * 0.1)
    den = _quad(f_den, -kappa, kappa, pts, EXIT_QUAD_ABS * 0.1)
    c = num / den
    part1 = _quad(f_num, -kappa, x, pts, EXIT_QUAD_ABS * 0.1)
    part2 = _quad(f_den, -kappa, x, pts, EXIT_QUAD_ABS * 0.1)
    return -part1 + c * part2


def default_table_grid(family: CrossSectionFamily, n: int = 2001) -> np.ndarray:
    """Window-covering grid with refinement across the junction features."""
    w = family.domain_halfwidth
    parts = [np.linspace(-w, w, n)]
    desc = family.descriptor
    if desc is not None:
        reach = min(5.0 * desc[1], w)
        parts.append(np.linspace(-reach, reach, 401))
    return np.unique(np.concatenate(parts))
