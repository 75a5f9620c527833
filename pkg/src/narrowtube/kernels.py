"""Compiled path kernels.

All Monte Carlo loops live here as nopython kernels. Families enter as
descriptor arrays (see geometry), and every path derives its own RNG stream
from (seed, path index), so outputs are identical for any worker count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import config as _numba_config
from numba import njit, prange, set_num_threads

from .geometry import desc_walls
from .rng import stream_init, stream_normal_pair, stream_uniform

__all__ = ["apply_workers"]

# mirror-pass cap per step before the projection fallback takes over
_MAX_MIRROR = 8
_BISECT_ITERS = 22


def apply_workers(workers: int) -> int:
    """Clamp the requested worker count to what numba can host and apply it."""
    w = int(min(max(1, workers), _numba_config.NUMBA_NUM_THREADS))
    set_num_threads(w)
    return w


@njit(cache=True, inline="always")
def _inside(desc, x, y):
    lo, _, _, _, up, _, _, _ = desc_walls(desc, x)
    return (-lo <= y) and (y <= up)


@njit(cache=True)
def _cross_param(desc, ax, ay, bx, by, side):
    """Earliest parameter s in [0,1] where the segment meets the given wall.

    side +1: upper wall y = up(x); side -1: lower wall y = -lo(x).
    Assumes the signed gap is <= 0 at s=0 and > 0 at s=1.
    """
    s_in = 0.0
    s_out = 1.0
    for _ in range(_BISECT_ITERS):
        sm = 0.5 * (s_in + s_out)
        x = ax + sm * (bx - ax)
        y = ay + sm * (by - ay)
        lo, _, _, _, up, _, _, _ = desc_walls(desc, x)
        gap = (y - up) if side == 1 else (-lo - y)
        if gap > 0.0:
            s_out = sm
        else:
            s_in = sm
    return s_in


@njit(cache=True)
def _project_clamp(desc, px, py):
    """Fallback containment: clamp y into the local cross-section."""
    lo, _, _, _, up, _, _, _ = desc_walls(desc, px)
    nudge = 1e-9 * (lo + up)
    fy = py
    if fy > up - nudge:
        fy = up - nudge
    if fy < -lo + nudge:
        fy = -lo + nudge
    return px, fy, abs(fy - py)


@njit(cache=True)
def reflect_move(desc, x, y, gx, gy, xmax):
    """One Euler move with mirror reflection at the walls.

    Returns (new_x, new_y, removed_displacement, boundary_events).
    """
    bx = x + gx
    by = y + gy
    # the window edge acts as a vertical mirror; relevant only for free runs
    if bx > xmax:
        bx = 2.0 * xmax - bx
    elif bx < -xmax:
        bx = -2.0 * xmax - bx
    ax = x
    ay = y
    removed = 0.0
    events = 0
    done = False
    for _ in range(_MAX_MIRROR):
        lo, _, _, _, up, _, _, _ = desc_walls(desc, bx)
        if -lo <= by <= up:
            done = True
            break
        # pick the wall whose gap is violated at the segment end; when both
        # are violated take the earlier crossing
        s_up = 2.0
        s_lo = 2.0
        if by > up:
            s_up = _cross_param(desc, ax, ay, bx, by, 1)
        if by < -lo:
            s_lo = _cross_param(desc, ax, ay, bx, by, -1)
        if s_up <= s_lo:
            s = s_up
            side = 1
        else:
            s = s_lo
            side = -1
        xc = ax + s * (bx - ax)
        yc = ay + s * (by - ay)
        loc, l1, _, _, upc, u1, _, _ = desc_walls(desc, xc)
        if side == 1:
            m = u1
            yc = upc
            ny = -1.0
        else:
            m = -l1
            yc = -loc
            ny = 1.0
        # mirror the remaining displacement across the local tangent
        rx = bx - xc
        ry = by - yc
        inv = 1.0 / (1.0 + m * m)
        tpar = (rx + m * ry) * inv
        mx = 2.0 * tpar - rx
        my = 2.0 * tpar * m - ry
        dxr = mx - rx
        dyr = my - ry
        removed += math.sqrt(dxr * dxr + dyr * dyr)
        events += 1
        # restart just inside the wall; a pure-y nudge stays interior at
        # fixed x no matter how steep the wall is
        nv = loc + upc
        ax = xc
        ay = yc + ny * 1e-9 * nv
        bx = xc + mx
        by = yc + my
        if bx > xmax:
            bx = 2.0 * xmax - bx
        elif bx < -xmax:
            bx = -2.0 * xmax - bx
    if not done:
        lo, _, _, _, up, _, _, _ = desc_walls(desc, bx)
        if not (-lo <= by <= up):
            bx, by, extra = _project_clamp(desc, bx, by)
            removed += extra
            events += 1
    return bx, by, removed, events


@njit(cache=True, parallel=True)
def k2d_exit(desc, x0, y0, a, b, dt, t_max, lam, seed, out):
    """Exit runs from (x0, y0) on the interval (a, b).

    out rows: exit_time, side (+1 right / -1 left / 0 censored), reflections,
    removed-displacement sum, discounted removed-displacement sum, final x,
    final y.
    """
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        y = y0
        t = 0.0
        lraw = 0.0
        ldisc = 0.0
        refl = 0.0
        side = 0.0
        while True:
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x, y, rem, ev = reflect_move(desc, x, y, sq * z0, sq * z1, xmax)
            t += dt
            if ev > 0:
                refl += ev
                lraw += rem
                if lam > 0.0:
                    ldisc += math.exp(-lam * t) * rem
                else:
                    ldisc += rem
            if x <= a:
                side = -1.0
                break
            if x >= b:
                side = 1.0
                break
            if t >= t_max:
                side = 0.0
                break
        out[p, 0] = t
        out[p, 1] = side
        out[p, 2] = refl
        out[p, 3] = lraw
        out[p, 4] = ldisc
        out[p, 5] = x
        out[p, 6] = y


@njit(cache=True, parallel=True)
def k2d_marginal(desc, x0, y0, n_steps, dt, seed, out):
    """Positions after n_steps Euler steps; out rows: x, y."""
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        y = y0
        for _ in range(n_steps):
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x, y, rem, ev = reflect_move(desc, x, y, sq * z0, sq * z1, xmax)
        out[p, 0] = x
        out[p, 1] = y


@njit(cache=True, parallel=True)
def k2d_resolvent(desc, x0, y0, dt, lam, t_cap, g_lo, g_dxi, g_tab, f_start,
                  seed, out):
    """Per-path discounted residual for the 2d process.

    g_tab tabulates the integrand on a uniform grid starting at g_lo with
    inverse spacing g_dxi; linear interpolation in between.
    """
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    m = g_tab.shape[0]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        y = y0
        t = 0.0
        acc = 0.0
        while t < t_cap:
            pos = (x - g_lo) * g_dxi
            j = int(pos)
            if j < 0:
                j = 0
            elif j > m - 2:
                j = m - 2
            frac = pos - j
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            gval = g_tab[j] + frac * (g_tab[j + 1] - g_tab[j])
            acc += math.exp(-lam * t) * gval * dt
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x, y, rem, ev = reflect_move(desc, x, y, sq * z0, sq * z1, xmax)
            t += dt
        out[p] = acc - f_start


@njit(cache=True, inline="always")
def hat_drift(desc, x):
    lo, l1, _, _, up, u1, _, _ = desc_walls(desc, x)
    return 0.5 * (l1 + u1) / (lo + up)


@njit(cache=True, parallel=True)
def khat_exit(desc, x0, a, b, dt, t_max, drift_cap, seed, out):
    """Exit runs of the 1d width-driven process.

    out rows: exit_time, side (+1/-1, 0 censored), aborted flag (drift bound
    exceeded).
    """
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        t = 0.0
        side = 0.0
        aborted = 0.0
        while True:
            bdrift = hat_drift(desc, x)
            if abs(bdrift) > drift_cap:
                aborted = 1.0
                break
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x = x + bdrift * dt + sq * z0
            if x > xmax:
                x = 2.0 * xmax - x
            elif x < -xmax:
                x = -2.0 * xmax - x
            t += dt
            if x <= a:
                side = -1.0
                break
            if x >= b:
                side = 1.0
                break
            if t >= t_max:
                break
        out[p, 0] = t
        out[p, 1] = side
        out[p, 2] = aborted


@njit(cache=True, parallel=True)
def khat_marginal(desc, x0, n_steps, dt, drift_cap, seed, out):
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        for _ in range(n_steps):
            bdrift = hat_drift(desc, x)
            if abs(bdrift) > drift_cap:
                break
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x = x + bdrift * dt + sq * z0
            if x > xmax:
                x = 2.0 * xmax - x
            elif x < -xmax:
                x = -2.0 * xmax - x
        out[p] = x


@njit(cache=True, parallel=True)
def khat_resolvent(desc, x0, dt, lam, t_cap, g_lo, g_dxi, g_tab, f_start,
                   drift_cap, seed, out):
    n = out.shape[0]
    sq = math.sqrt(dt)
    xmax = desc[9]
    m = g_tab.shape[0]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        x = x0
        t = 0.0
        acc = 0.0
        while t < t_cap:
            pos = (x - g_lo) * g_dxi
            j = int(pos)
            if j < 0:
                j = 0
            elif j > m - 2:
                j = m - 2
            frac = pos - j
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            gval = g_tab[j] + frac * (g_tab[j + 1] - g_tab[j])
            acc += math.exp(-lam * t) * gval * dt
            bdrift = hat_drift(desc, x)
            if abs(bdrift) > drift_cap:
                break
            z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
            x = x + bdrift * dt + sq * z0
            if x > xmax:
                x = 2.0 * xmax - x
            elif x < -xmax:
                x = -2.0 * xmax - x
            t += dt
        out[p] = acc - f_start


@njit(cache=True, parallel=True)
def kctmc_exit(hold, up_prob, i0, ia, ib, seed, out):
    """Absorption runs of the birth-death chain between grid indices ia, ib.

    out rows: absorption_time, side (+1 at ib, -1 at ia).
    """
    n = out.shape[0]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        i = i0
        t = 0.0
        side = 0.0
        while True:
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            t += -math.log(u) / hold[i]
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            if u < up_prob[i]:
                i += 1
            else:
                i -= 1
            if i <= ia:
                side = -1.0
                break
            if i >= ib:
                side = 1.0
                break
        out[p, 0] = t
        out[p, 1] = side


@njit(cache=True, parallel=True)
def kctmc_marginal(hold, up_prob, i0, T, seed, out):
    """State index occupied at time T (ends absorb)."""
    n = out.shape[0]
    nstates = hold.shape[0]
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        i = i0
        t = 0.0
        while True:
            if i <= 0 or i >= nstates - 1:
                break
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            h = -math.log(u) / hold[i]
            if t + h >= T:
                break
            t += h
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            if u < up_prob[i]:
                i += 1
            else:
                i -= 1
        out[p] = i


@njit(cache=True, parallel=True)
def kctmc_resolvent(hold, up_prob, g_states, f_states, lam, i0, seed, out):
    """Discounted residual along chain paths, with exact sojourn integrals.

    Runs until absorption at the grid ends or until the discount falls
    below 1e-12; an absorbed path contributes its exact closed-form tail.
    """
    n = out.shape[0]
    nstates = hold.shape[0]
    t_stop = 27.7 / lam
    for p in prange(n):
        s0, s1, s2, s3 = stream_init(seed, np.uint64(p))
        i = i0
        t = 0.0
        acc = 0.0
        while t < t_stop:
            if i <= 0 or i >= nstates - 1:
                # absorbed: lambda*f integrates to f * exp(-lam*t)
                acc += f_states[i] * math.exp(-lam * t)
                break
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            h = -math.log(u) / hold[i]
            t1 = t + h
            acc += g_states[i] * (math.exp(-lam * t) - math.exp(-lam * t1)) / lam
            t = t1
            u, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
            if u < up_prob[i]:
                i += 1
            else:
                i -= 1
        out[p] = acc - f_states[i0]
