"""Test functions in the domain of the glued generator, and discounted
Dynkin residual checks across the three simulators.

A valid test function is a cutoff piecewise cubic whose one-sided slopes at
0 satisfy the flux-matching condition of the limit generator and whose Lf is
continuous through 0. The residual check estimates
E ∫ e^{-lam t}(lam f - Lf)(X_t) dt - f(x0), which vanishes for a process
with generator L started at x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import kernels
from .ctmc import DEFAULT_DRIFT_CAP, CtmcModel
from .geometry import CrossSectionFamily, ExampleFamilySpec
from .scale_speed import GluingParameters
from .simulate2d import MonteCarloSummary

__all__ = [
    "DomainTestFunction",
    "build_domain_test_function",
    "resolvent_check",
    "RESOLVENT_HORIZON_WEIGHT",
]

# e^{-lam t} below this weight stops the sampled-path integrals; the
# truncated mass is below 1e-6 * sup|g| / lam and is absorbed into noise
RESOLVENT_HORIZON_WEIGHT = 1e-6

_GTAB_POINTS = 20001


def _poly_eval(coeffs, x):
    acc = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _poly_deriv_eval(coeffs, x):
    dcoeffs = [i * c for i, c in enumerate(coeffs)][1:]
    if not dcoeffs:
        return np.zeros_like(np.asarray(x, dtype=float))
    return _poly_eval(dcoeffs, x)


def _smoothstep(t):
    return t * t * t * t * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))


def _smoothstep_d1(t):
    return 140.0 * t**3 * (1.0 - t) ** 3


def _smoothstep_d2(t):
    return 420.0 * t**2 * (1.0 - t) ** 2 * (1.0 - 2.0 * t)


@dataclass(frozen=True)
class DomainTestFunction:
    """Cutoff piecewise cubic satisfying the junction flux condition.

    Each side of 0 carries f0 + b x + c x^2/2 + d x^3/6; the septic-ramp
    cutoff is identically 1 on |x| <= cut_inner and 0 beyond cut_outer.
    lf0 is the common one-sided limit of Lf at 0 used in the flux identity.
    """

    f0: float
    b_minus: float
    b_plus: float
    c_minus: float
    c_plus: float
    d_minus: float
    d_plus: float
    lf0: float
    params: GluingParameters
    cut_inner: float = 0.35
    cut_outer: float = 0.9
    limit_spec: Optional[ExampleFamilySpec] = None

    def _cubic(self, x):
        x = np.asarray(x, dtype=float)
        neg = x < 0.0
        b = np.where(neg, self.b_minus, self.b_plus)
        c = np.where(neg, self.c_minus, self.c_plus)
        d = np.where(neg, self.d_minus, self.d_plus)
        g = self.f0 + x * (b + x * (c / 2.0 + x * d / 6.0))
        g1 = b + x * (c + x * d / 2.0)
        g2 = c + x * d
        return g, g1, g2

    def _cutoff(self, x):
        x = np.asarray(x, dtype=float)
        s = np.abs(x)
        w = self.cut_outer - self.cut_inner
        t = np.clip((s - self.cut_inner) / w, 0.0, 1.0)
        ramp = (s > self.cut_inner) & (s < self.cut_outer)
        sig = 1.0 - _smoothstep(t)
        sg = np.sign(x)
        d1 = np.where(ramp, -_smoothstep_d1(t) * sg / w, 0.0)
        d2 = np.where(ramp, -_smoothstep_d2(t) / (w * w), 0.0)
        return sig, d1, d2

    def f(self, x):
        g, _, _ = self._cubic(x)
        s, _, _ = self._cutoff(x)
        out = g * s
        return float(out) if np.isscalar(x) else out

    def fx(self, x):
        g, g1, _ = self._cubic(x)
        s, s1, _ = self._cutoff(x)
        out = g1 * s + g * s1
        return float(out) if np.isscalar(x) else out

    def fxx(self, x):
        g, g1, g2 = self._cubic(x)
        s, s1, s2 = self._cutoff(x)
        out = g2 * s + 2.0 * g1 * s1 + g * s2
        return float(out) if np.isscalar(x) else out

    def _speed_profile(self, x):
        x = np.asarray(x, dtype=float)
        if self.limit_spec is not None:
            vs = self.limit_spec.v1_at(x) + self.limit_spec.beta * (x > 0.0)
            vs1 = _poly_deriv_eval(self.limit_spec.v1, x)
        else:
            alpha = 2.0 * self.params.inv_u_left
            alpha_beta = 2.0 * self.params.inv_u_right
            vs = np.where(x < 0.0, alpha, alpha_beta) + 0.0 * x
            vs1 = np.zeros_like(vs)
        return vs, vs1

    def Lf(self, x):
        """Action of the limit generator away from 0 (one-sided at 0)."""
        vs, vs1 = self._speed_profile(x)
        out = (self.fxx(x) * vs + self.fx(x) * vs1) / (2.0 * vs)
        return float(out) if np.isscalar(x) else out

    def gluing_residual(self) -> float:
        """Defect in the doubled flux identity at 0."""
        p = self.params
        return abs(2.0 * p.inv_u_right * self.b_plus
                   - 2.0 * p.inv_u_left * self.b_minus
                   - 2.0 * p.v_jump * self.lf0)

    def perturbed(self, slope_shift: float) -> "DomainTestFunction":
        """Copy with the right slope at 0 shifted; breaks the flux identity."""
        return replace(self, b_plus=self.b_plus + slope_shift)


def build_domain_test_function(params: GluingParameters, shape_seed: int,
                               limit_spec: Optional[ExampleFamilySpec] = None,
                               ) -> DomainTestFunction:
    """Draw a cutoff cubic satisfying the junction conditions of params.

    limit_spec supplies the smooth width profile so Lf can be evaluated
    away from 0; without it the profile is taken constant on each side.
    """
    if params.inv_u_right <= 0.0 or params.inv_u_left <= 0.0:
        raise ValueError("degenerate parameters: scale inverses must be positive")
    alpha = 2.0 * params.inv_u_left
    alpha_beta = 2.0 * params.inv_u_right
    if limit_spec is not None:
        if abs(limit_spec.alpha - alpha) > 1e-9 * max(1.0, alpha) or \
                abs(limit_spec.alpha + limit_spec.beta - alpha_beta) > 1e-9 * max(1.0, alpha_beta):
            raise ValueError("limit_spec does not match the gluing parameters")
        alpha1 = float(_poly_deriv_eval(limit_spec.v1, 0.0))
    else:
        alpha1 = 0.0

    rng = np.random.default_rng(shape_seed)
    f0 = float(rng.uniform(0.5, 1.5))
    b_minus = float(rng.uniform(-1.5, 1.5))
    lf0 = float(rng.uniform(-2.0, 2.0))
    d_minus, d_plus = (float(v) for v in rng.uniform(-3.0, 3.0, size=2))

    b_plus = (params.v_jump * lf0 + params.inv_u_left * b_minus) / params.inv_u_right
    c_minus = 2.0 * lf0 - (alpha1 / alpha) * b_minus
    c_plus = 2.0 * lf0 - (alpha1 / alpha_beta) * b_plus
    return DomainTestFunction(f0=f0, b_minus=b_minus, b_plus=b_plus,
                              c_minus=c_minus, c_plus=c_plus,
                              d_minus=d_minus, d_plus=d_plus, lf0=lf0,
                              params=params, limit_spec=limit_spec)


def _integrand_table(f: DomainTestFunction, lam: float, halfwidth: float):
    xs = np.linspace(-halfwidth, halfwidth, _GTAB_POINTS)
    g = lam * f.f(xs) - f.Lf(xs)
    dxi = (_GTAB_POINTS - 1) / (2.0 * halfwidth)
    return -halfwidth, dxi, np.ascontiguousarray(g)


def resolvent_check(simulator: str, f: DomainTestFunction, lam: float,
                    start: Union[float, tuple], dt: float, n_paths: int,
                    rng_seed: int, *,
                    family: Optional[CrossSectionFamily] = None,
                    model: Optional[CtmcModel] = None,
                    workers: int = 1,
                    use_discrete_generator: Optional[bool] = None,
                    drift_cap: float = DEFAULT_DRIFT_CAP,
                    ) -> MonteCarloSummary:
    """Monte Carlo residual of the discounted Dynkin identity.

    simulator is one of "2d", "hat", "ctmc". The chain defaults to its own
    discrete generator (the identity is then exact up to noise); the path
    simulators integrate the analytic lam f - Lf of the limit generator.
    Paths are truncated once the discount weight falls below
    RESOLVENT_HORIZON_WEIGHT (the chain runs to 1e-12 with a closed-form
    absorbed tail), a bias far below sampling noise.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if n_paths < 2:
        raise ValueError("need at least 2 paths")
    sim = simulator.lower()
    kernels.apply_workers(workers)
    out = np.empty(int(n_paths), dtype=np.float64)

    if sim == "ctmc":
        if model is None:
            raise ValueError("ctmc simulator needs model=")
        if use_discrete_generator is None:
            use_discrete_generator = True
        x0 = float(start if np.isscalar(start) else start[0])
        i0 = model.state_index(x0)
        if not 0 < i0 < model.n_states - 1:
            raise ValueError("start must map to an interior state")
        f_states = np.ascontiguousarray(f.f(model.grid))
        if use_discrete_generator:
            lf_states = model.generator_apply(f_states)
        else:
            lf_states = f.Lf(model.grid)
            lf_states[0] = 0.0
            lf_states[-1] = 0.0
        g_states = np.ascontiguousarray(lam * f_states - lf_states)
        kernels.kctmc_resolvent(model.hold_rate, model.up_prob, g_states,
                                f_states, float(lam), i0, np.uint64(rng_seed),
                                out)
        return MonteCarloSummary.from_samples(out)

    if family is None:
        raise ValueError(f"{sim} simulator needs family=")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    hw = family.domain_halfwidth
    t_cap = -math.log(RESOLVENT_HORIZON_WEIGHT) / lam
    g_lo, g_dxi, g_tab = _integrand_table(f, lam, hw)

    if sim == "hat":
        x0 = float(start if np.isscalar(start) else start[0])
        f_start = f.f(x0)
        kernels.khat_resolvent(family.descriptor, x0, float(dt), float(lam),
                               t_cap, g_lo, g_dxi, g_tab, f_start,
                               float(drift_cap), np.uint64(rng_seed), out)
        return MonteCarloSummary.from_samples(out)

    if sim == "2d":
        if np.isscalar(start):
            x0 = float(start)
            lo = family.lower(x0)[0]
            up = family.upper(x0)[0]
            y0 = 0.5 * (up - lo)
        else:
            x0, y0 = float(start[0]), float(start[1])
        f_start = f.f(x0)
        kernels.k2d_resolvent(family.descriptor, x0, y0, float(dt),
                              float(lam), t_cap, g_lo, g_dxi, g_tab, f_start,
                              np.uint64(rng_seed), out)
        return MonteCarloSummary.from_samples(out)

    raise ValueError(f"unknown simulator {simulator!r}")
