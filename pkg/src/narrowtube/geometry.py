"""Cross-section families for epsilon-narrow planar tubes.

A tube is the set {(x, y): -lower(x) <= y <= upper(x)}. Families carry exact
derivatives up to third order because the wall-regularity functional needs
third derivatives and finite differences across the narrow features are too
noisy to substitute for them.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numba import njit

__all__ = [
    "CrossSectionFamily",
    "ExampleFamilySpec",
    "AssumptionReport",
    "CrossSection",
    "build_example_family",
    "eval_cross_section",
    "inward_normal",
    "check_assumptions",
    "STEP_HALFWIDTH",
    "BUMP_HALFWIDTH",
    "DEFAULT_WINDOW",
]

# Mollifier half-widths, in units of the transition scale delta. Both are
# deliberately narrow: the step width controls the finite-eps bias of the
# scale function near 0, and the bump width controls how much the needle
# dents the scale function. Wider shapes push the eps=0.01 runs outside
# their comparison bands against the limit model.
STEP_HALFWIDTH = 0.125
BUMP_HALFWIDTH = 1.0 / 32.0
# tanh step scale a = STEP_HALFWIDTH/4 keeps the visible transition inside
# the poly step's support (tails < 1e-50 beyond |s| = STEP_HALFWIDTH).
TANH_SCALE = STEP_HALFWIDTH / 4.0

DEFAULT_WINDOW = 1.0
DEFAULT_ZETA = 0.1
DEFAULT_C_BOUND = 100.0
DEFAULT_REGION = (0.1, 1.0)
# per-step slack for the decay verdict on the wall-regularity functional
XI_DECAY_SLACK = 0.05

_STEP_KINDS = {"smoothed-step-tanh": 0, "smoothed-step-poly": 1}
_BUMP_KINDS = {"cosine-bump": 0, "quartic-bump": 1}
_SPLIT_KINDS = {"lower-zero": 0, "symmetric": 1}

# Descriptor slots: the compiled family form consumed by the numba kernels.
_D_EPS = 0
_D_DELTA = 1
_D_BETA = 2
_D_MU = 3
_D_STEPK = 4
_D_BUMPK = 5
_D_WSTEP = 6
_D_WBUMP = 7
_D_SPLIT = 8
_D_XMAX = 9
_D_NV1 = 10
_D_V1C = 11
V1_MAX_COEFFS = 5
DESC_LEN = _D_V1C + V1_MAX_COEFFS


@njit(cache=True)
def _step_shape(kind, s, w):
    """Smoothed unit step and its first three derivatives in s.

    Rises from 0 to 1. kind 1 is a septic smoothstep supported on [-w, w]
    whose first three derivatives vanish at the seams; kind 0 is a tanh
    profile with scale w/4 (smooth everywhere, tails negligible past |s|=w).
    """
    if kind == 1:
        if s <= -w:
            return 0.0, 0.0, 0.0, 0.0
        if s >= w:
            return 1.0, 0.0, 0.0, 0.0
        t = (s + w) / (2.0 * w)
        dt = 1.0 / (2.0 * w)
        omt = 1.0 - t
        p = t ** 4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t ** 3)
        p1 = 140.0 * t ** 3 * omt ** 3
        p2 = 420.0 * t * t * omt * omt * (1.0 - 2.0 * t)
        p3 = 840.0 * t * omt * ((1.0 - 2.0 * t) ** 2 - t * omt)
        return p, p1 * dt, p2 * dt * dt, p3 * dt ** 3
    a = w / 4.0
    arg = s / a
    if arg > 350.0:
        return 1.0, 0.0, 0.0, 0.0
    if arg < -350.0:
        return 0.0, 0.0, 0.0, 0.0
    T = math.tanh(arg)
    sech2 = 1.0 - T * T
    v = 0.5 * (1.0 + T)
    d1 = 0.5 * sech2 / a
    d2 = -T * sech2 / (a * a)
    d3 = -sech2 * (1.0 - 3.0 * T * T) / (a ** 3)
    return v, d1, d2, d3


@njit(cache=True)
def _bump_shape(kind, s, w):
    """Unit-integral bump on [-w, w] and first three derivatives in s.

    kind 0: (4/(3w)) cos^4(pi s / (2w)); kind 1: (315/(256 w)) (1-(s/w)^2)^4.
    Both have first three derivatives vanishing at the seams.
    """
    if s <= -w or s >= w:
        return 0.0, 0.0, 0.0, 0.0
    if kind == 0:
        q = math.pi / (2.0 * w)
        amp = 4.0 / (3.0 * w)
        c = math.cos(q * s)
        sn = math.sin(q * s)
        v = amp * c ** 4
        d1 = -4.0 * amp * q * c ** 3 * sn
        d2 = -4.0 * amp * q * q * c * c * (c * c - 3.0 * sn * sn)
        d3 = -8.0 * amp * q ** 3 * c * sn * (3.0 * sn * sn - 5.0 * c * c)
        return v, d1, d2, d3
    amp = 315.0 / (256.0 * w)
    t = s / w
    om = 1.0 - t * t
    v = amp * om ** 4
    d1 = amp * (-8.0) * t * om ** 3 / w
    d2 = amp * 8.0 * om * om * (7.0 * t * t - 1.0) / (w * w)
    d3 = amp * 16.0 * t * om * (9.0 - 21.0 * t * t) / (w ** 3)
    return v, d1, d2, d3


@njit(cache=True)
def desc_total(desc, x):
    """Total width V(x) = lower + upper and first three x-derivatives."""
    eps = desc[_D_EPS]
    delta = desc[_D_DELTA]
    beta = desc[_D_BETA]
    mu = desc[_D_MU]
    n = int(desc[_D_NV1])
    # Horner with simultaneous derivative accumulation; old values must be
    # consumed before they are overwritten, hence the update order.
    v1 = 0.0
    v1d = 0.0
    v1dd = 0.0
    v1ddd = 0.0
    for k in range(n - 1, -1, -1):
        v1ddd = v1ddd * x + 3.0 * v1dd
        v1dd = v1dd * x + 2.0 * v1d
        v1d = v1d * x + v1
        v1 = v1 * x + desc[_D_V1C + k]
    v = eps * v1
    d1 = eps * v1d
    d2 = eps * v1dd
    d3 = eps * v1ddd
    if beta != 0.0:
        s = x / delta
        sv, s1, s2, s3 = _step_shape(int(desc[_D_STEPK]), s, desc[_D_WSTEP])
        eb = eps * beta
        v += eb * sv
        d1 += eb * s1 / delta
        d2 += eb * s2 / (delta * delta)
        d3 += eb * s3 / (delta ** 3)
    if mu != 0.0:
        s = x / delta
        bv, b1, b2, b3 = _bump_shape(int(desc[_D_BUMPK]), s, desc[_D_WBUMP])
        em = eps * mu / delta
        v += em * bv
        d1 += em * b1 / delta
        d2 += em * b2 / (delta * delta)
        d3 += em * b3 / (delta ** 3)
    return v, d1, d2, d3


@njit(cache=True)
def desc_walls(desc, x):
    """Both walls with derivatives: (lo, lo', lo'', lo''', up, up', up'', up''')."""
    v, d1, d2, d3 = desc_total(desc, x)
    if int(desc[_D_SPLIT]) == 0:
        return 0.0, 0.0, 0.0, 0.0, v, d1, d2, d3
    return (0.5 * v, 0.5 * d1, 0.5 * d2, 0.5 * d3,
            0.5 * v, 0.5 * d1, 0.5 * d2, 0.5 * d3)


@njit(cache=True)
def _desc_eval_grid(desc, xs, out):
    for i in range(xs.shape[0]):
        lo, l1, l2, l3, up, u1, u2, u3 = desc_walls(desc, xs[i])
        out[i, 0] = lo
        out[i, 1] = l1
        out[i, 2] = l2
        out[i, 3] = l3
        out[i, 4] = up
        out[i, 5] = u1
        out[i, 6] = u2
        out[i, 7] = u3


@dataclasses.dataclass(frozen=True, eq=False)
class CrossSectionFamily:
    """Tube walls y in [-lower(x), upper(x)], |x| <= domain_halfwidth.

    lower and upper map x to (value, d1, d2, d3) with exact derivatives.
    eps is the width parameter. descriptor, when present, is the compiled
    array form that the numba path kernels evaluate directly; families
    built from :class:`ExampleFamilySpec` always carry one.
    """

    lower: Callable[[float], tuple]
    upper: Callable[[float], tuple]
    eps: float
    domain_halfwidth: float
    descriptor: np.ndarray | None = None

    def __post_init__(self):
        if not (self.eps > 0.0):
            raise ValueError("eps must be positive")
        if not (self.domain_halfwidth > 0.0):
            raise ValueError("domain_halfwidth must be positive")


@dataclasses.dataclass(frozen=True)
class ExampleFamilySpec:
    """Three-term width family eps*v1(x) + eps*step(x/d) + (eps/d)*bump(x/d).

    v1 is a polynomial given by coefficients in increasing order (a bare
    number means a constant width profile). beta scales the smoothed step,
    mu the unit-integral bump, and d = eps**delta_exponent is the common
    transition scale. split chooses how the total width is shared between
    the walls: "lower-zero" puts everything on the upper wall, "symmetric"
    splits it evenly.
    """

    v1: tuple = (1.0,)
    beta: float = 0.0
    mu: float = 0.0
    delta_exponent: float = 0.3
    step_mollifier: str = "smoothed-step-poly"
    bump_mollifier: str = "cosine-bump"
    split: str = "lower-zero"

    def __post_init__(self):
        v1 = self.v1
        if isinstance(v1, (int, float)):
            v1 = (float(v1),)
        else:
            v1 = tuple(float(c) for c in v1)
        if not v1 or len(v1) > V1_MAX_COEFFS:
            raise ValueError(
                f"v1 needs 1..{V1_MAX_COEFFS} polynomial coefficients")
        object.__setattr__(self, "v1", v1)
        if not 0.0 < self.delta_exponent < 1.0:
            raise ValueError("delta_exponent must lie in (0, 1)")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.mu < 0.0:
            raise ValueError("mu must be nonnegative")
        if self.step_mollifier not in _STEP_KINDS:
            raise ValueError(f"unknown step_mollifier {self.step_mollifier!r}")
        if self.bump_mollifier not in _BUMP_KINDS:
            raise ValueError(f"unknown bump_mollifier {self.bump_mollifier!r}")
        if self.split not in _SPLIT_KINDS:
            raise ValueError(f"unknown split {self.split!r}")

    def v1_at(self, x):
        """Evaluate the v1 polynomial (supports array input)."""
        acc = 0.0 * x
        for c in reversed(self.v1):
            acc = acc * x + c
        return acc

    @property
    def alpha(self) -> float:
        """Base width at the junction, v1(0)."""
        return self.v1[0]


@dataclasses.dataclass(frozen=True)
class AssumptionReport:
    """Grid-checked wall assumptions for one family in a sweep."""

    eps: float
    zeta_min: float
    xi_eps: float
    derivative_bound_ratio: float
    passed: bool


class CrossSection(NamedTuple):
    lower: float
    upper: float
    total: float
    lower_x: float
    lower_xx: float
    lower_xxx: float
    upper_x: float
    upper_xx: float
    upper_xxx: float
    total_x: float
    total_xx: float
    total_xxx: float


def build_example_family(spec: ExampleFamilySpec, eps: float,
                         domain_halfwidth: float = DEFAULT_WINDOW,
                         strict: bool = True) -> CrossSectionFamily:
    """Instantiate the example family at a given eps.

    strict=True rejects delta_exponent >= 1/3, the regime where the
    wall-regularity functional no longer decays; deliberately invalid
    sweeps (negative controls) pass strict=False.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if strict and spec.delta_exponent >= 1.0 / 3.0:
        raise ValueError(
            "delta_exponent >= 1/3 breaks the required wall regularity; "
            "pass strict=False only for deliberate negative controls")
    xs = np.linspace(-domain_halfwidth, domain_halfwidth, 2001)
    if np.min(spec.v1_at(xs)) <= 0.0:
        raise ValueError("v1 must be strictly positive on the window")

    delta = eps ** spec.delta_exponent
    desc = np.zeros(DESC_LEN)
    desc[_D_EPS] = eps
    desc[_D_DELTA] = delta
    desc[_D_BETA] = spec.beta
    desc[_D_MU] = spec.mu
    desc[_D_STEPK] = _STEP_KINDS[spec.step_mollifier]
    desc[_D_BUMPK] = _BUMP_KINDS[spec.bump_mollifier]
    desc[_D_WSTEP] = STEP_HALFWIDTH
    desc[_D_WBUMP] = BUMP_HALFWIDTH
    desc[_D_SPLIT] = _SPLIT_KINDS[spec.split]
    desc[_D_XMAX] = domain_halfwidth
    desc[_D_NV1] = len(spec.v1)
    for k, c in enumerate(spec.v1):
        desc[_D_V1C + k] = c
    desc.setflags(write=False)

    def lower(x, _d=desc):
        return desc_walls(_d, x)[:4]

    def upper(x, _d=desc):
        return desc_walls(_d, x)[4:]

    return CrossSectionFamily(lower=lower, upper=upper, eps=eps,
                              domain_halfwidth=domain_halfwidth,
                              descriptor=desc)


def _check_window(family: CrossSectionFamily, x: float) -> None:
    if abs(x) > family.domain_halfwidth * (1.0 + 1e-12):
        raise ValueError(
            f"x={x} outside the family window |x| <= {family.domain_halfwidth}")


def eval_cross_section(family: CrossSectionFamily, x: float) -> CrossSection:
    """Walls, total width, and first three derivatives of each at x."""
    _check_window(family, x)
    lo, l1, l2, l3 = family.lower(x)
    up, u1, u2, u3 = family.upper(x)
    return CrossSection(lo, up, lo + up, l1, l2, l3, u1, u2, u3,
                        l1 + u1, l2 + u2, l3 + u3)


def inward_normal(family: CrossSectionFamily, x: float, side: str) -> np.ndarray:
    """Unit inward normal at the wall point above/below x."""
    _check_window(family, x)
    if side == "upper":
        slope = family.upper(x)[1]
        n = np.array([slope, -1.0])
    elif side == "lower":
        slope = family.lower(x)[1]
        n = np.array([slope, 1.0])
    else:
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    return n / math.hypot(slope, 1.0)


def _family_grid_eval(family: CrossSectionFamily, xs: np.ndarray) -> np.ndarray:
    out = np.empty((xs.shape[0], 8))
    if family.descriptor is not None:
        _desc_eval_grid(family.descriptor, xs, out)
        return out
    for i, x in enumerate(xs):
        out[i, :4] = family.lower(float(x))
        out[i, 4:] = family.upper(float(x))
    return out


def _xi_grid(family: CrossSectionFamily) -> np.ndarray:
    """Maximization grid: coarse cover of the window plus feature zooms."""
    w = min(1.0, family.domain_halfwidth)
    parts = [np.linspace(-w, w, 4001)]
    desc = family.descriptor
    if desc is not None:
        delta = desc[_D_DELTA]
        if desc[_D_BETA] != 0.0:
            h = desc[_D_WSTEP] * delta
            parts.append(np.linspace(-h, h, 401))
        if desc[_D_MU] != 0.0:
            h = desc[_D_WBUMP] * delta
            parts.append(np.linspace(-h, h, 401))
    else:
        parts.append(np.linspace(-0.05, 0.05, 401))
    return np.unique(np.concatenate(parts))


def _xi_value(eps: float, d1: np.ndarray, d2: np.ndarray, d3: np.ndarray) -> float:
    return float(np.max(np.abs(d1 ** 3) / eps + np.abs(d1 * d2) + eps * np.abs(d3)))


def check_assumptions(families: Sequence[CrossSectionFamily],
                      zeta: float = DEFAULT_ZETA,
                      region: tuple = DEFAULT_REGION,
                      c_bound: float = DEFAULT_C_BOUND) -> list[AssumptionReport]:
    """Grid-check the wall assumptions over a decreasing-eps sweep.

    Per family: zeta_min = min V/eps over the window, xi_eps = the summed
    third-order regularity functional of total and both walls (sup over
    |x| <= 1), derivative_bound_ratio = max over |x| in region of the six
    wall-derivative magnitudes divided by eps. A family passes when
    zeta_min > zeta, the ratio is <= c_bound, and xi_eps does not rise
    above the previous family's value beyond the decay slack; a failing
    check is data, not an error.
    """
    eps_seq = [f.eps for f in families]
    if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise ValueError("families must be ordered by strictly decreasing eps")
    lo, hi = region
    if not 0.0 < lo < hi:
        raise ValueError("region must satisfy 0 < lo < hi (away from 0)")

    reports: list[AssumptionReport] = []
    prev_xi = math.inf
    for fam in families:
        xs = _xi_grid(fam)
        vals = _family_grid_eval(fam, xs)
        total = vals[:, 0] + vals[:, 4]
        t1 = vals[:, 1] + vals[:, 5]
        t2 = vals[:, 2] + vals[:, 6]
        t3 = vals[:, 3] + vals[:, 7]
        zeta_min = float(np.min(total) / fam.eps)
        xi = (_xi_value(fam.eps, t1, t2, t3)
              + _xi_value(fam.eps, vals[:, 1], vals[:, 2], vals[:, 3])
              + _xi_value(fam.eps, vals[:, 5], vals[:, 6], vals[:, 7]))

        side = np.linspace(lo, min(hi, fam.domain_halfwidth), 1001)
        ratio = 0.0
        for sgn in (-1.0, 1.0):
            kvals = _family_grid_eval(fam, sgn * side)
            summed = np.sum(np.abs(kvals[:, [1, 2, 3, 5, 6, 7]]), axis=1)
            ratio = max(ratio, float(np.max(summed)) / fam.eps)

        ok = (zeta_min > zeta and ratio <= c_bound
              and xi <= prev_xi * (1.0 + XI_DECAY_SLACK))
        reports.append(AssumptionReport(eps=fam.eps, zeta_min=zeta_min,
                                        xi_eps=xi,
                                        derivative_bound_ratio=ratio,
                                        passed=ok))
        prev_xi = xi
    return reports
