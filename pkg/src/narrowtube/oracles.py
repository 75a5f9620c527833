"""Independent reference computations.

green_bvp_solve evaluates the closed Green-representation solution of the
limit operator's boundary-value problem, including an interior speed atom.
fd_strip_exit_time solves the 2d mean-exit-time PDE on a boundary-fitted
grid. ks_statistic is the exact two-sample Kolmogorov-Smirnov distance.
These never share code with the simulators they are used to check.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import integrate
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .geometry import CrossSectionFamily
from .scale_speed import ScaleSpeedTable, feature_breakpoints

__all__ = [
    "green_bvp_solve",
    "fd_strip_exit_time",
    "StripExitField",
    "ks_statistic",
]

GREEN_QUAD_ABS = 1e-9
PDE_RESIDUAL_TOL = 1e-8
PDE_MAX_NX = 513
PDE_MAX_NY = 65


def green_bvp_solve(table: ScaleSpeedTable, a: float, b: float, x: float,
                    psi=1.0, phi_a: float = 0.0, phi_b: float = 0.0) -> float:
    """Solution of D_v D_u g = -psi on (a, b) with g(a)=phi_a, g(b)=phi_b.

    Uses the two-sided Green representation; dv-integrals split at the atom
    location and add the atom term explicitly so the jump is counted exactly
    once and quadrature never straddles it.
    """
    if not a < x < b:
        raise ValueError("need a < x < b")
    if callable(psi):
        psi_f = psi
    else:
        psi_val = float(psi)
        psi_f = lambda y: psi_val

    u = table.u_at
    ua, ub, ux = u(a), u(b), u(x)
    span = ub - ua

    def cont_integral(lo, hi, weight):
        if hi <= lo:
            return 0.0
        f = lambda y: weight(y) * psi_f(y) * table.v_density_at(y)
        pieces = sorted({lo, hi, *(p for p in (table.atom_location,)
                                   if lo < p < hi)})
        total = 0.0
        for p, q in zip(pieces, pieces[1:]):
            val, err = integrate.quad(f, p, q, epsabs=GREEN_QUAD_ABS / 10,
                                      epsrel=GREEN_QUAD_ABS / 10, limit=200)
            if err > 100 * GREEN_QUAD_ABS:
                raise RuntimeError(f"green quadrature stalled on [{p},{q}]")
            total += val
        return total

    left = cont_integral(a, x, lambda y: u(y) - ua)
    right = cont_integral(x, b, lambda y: ub - u(y))

    loc, mass = table.atom_location, table.atom_mass
    if mass > 0.0:
        if a <= loc <= x:
            left += (u(loc) - ua) * psi_f(loc) * mass
        elif x < loc <= b:
            right += (ub - u(loc)) * psi_f(loc) * mass

    return ((ub - ux) / span) * (phi_a + left) \
        + ((ux - ua) / span) * (phi_b + right)


@dataclasses.dataclass(frozen=True, eq=False)
class StripExitField:
    """Mean exit time field over the tube strip, in mapped coordinates.

    values[i, j] is the field at (x_nodes[i], eta_nodes[j]) where eta is the
    cross-section fraction (0 = lower wall, 1 = upper wall). residual is the
    max-abs defect of the discrete system after the solve. validity_ok is
    False when some column's wall slope is too steep for the local x or eta
    spacing, in which case values are reported but must not be trusted.
    """

    x_nodes: np.ndarray
    eta_nodes: np.ndarray
    values: np.ndarray
    residual: float
    max_wall_slope: float
    validity_ok: bool

    def value_at(self, x: float, eta: float) -> float:
        i = int(np.clip(np.searchsorted(self.x_nodes, x) - 1, 0,
                        len(self.x_nodes) - 2))
        j = int(np.clip(np.searchsorted(self.eta_nodes, eta) - 1, 0,
                        len(self.eta_nodes) - 2))
        tx = (x - self.x_nodes[i]) / (self.x_nodes[i + 1] - self.x_nodes[i])
        ty = (eta - self.eta_nodes[j]) / (self.eta_nodes[j + 1]
                                          - self.eta_nodes[j])
        tx = min(max(tx, 0.0), 1.0)
        ty = min(max(ty, 0.0), 1.0)
        v = self.values
        return float((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                     + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,y_fraction,value\n")
            for i, x in enumerate(self.x_nodes):
                for j, e in enumerate(self.eta_nodes):
                    fh.write(f"{float(x)!r},{float(e)!r},"
                             f"{float(self.values[i, j])!r}\n")


def _pde_x_grid(family: CrossSectionFamily, kappa: float, nx: int) -> np.ndarray:
    desc = family.descriptor
    cluster = desc is not None and (desc[2] != 0.0 or desc[3] != 0.0)
    if not cluster:
        return np.linspace(-kappa, kappa, nx)
    # sinh stretching concentrates nodes at the junction features while the
    # spacing still varies smoothly (needed for second-order stencils)
    s = np.linspace(-1.0, 1.0, nx)
    beta = 6.0
    x = kappa * np.sinh(beta * s) / np.sinh(beta)
    x[0], x[-1] = -kappa, kappa
    return x


def fd_strip_exit_time(family: CrossSectionFamily, kappa: float,
                       grid_nx: int = 257, grid_ny: int = 33) -> StripExitField:
    """Solve (1/2) laplacian(phi) = -1 in the tube strip |x| < kappa.

    Dirichlet phi = 0 at x = +-kappa, zero normal derivative on both walls.
    Discretized on the width-rescaled coordinate eta = (y + lower)/(lower +
    upper) in [0, 1]; wall conditions close the system through one-sided
    eta-derivatives coupled to the x-derivative by the wall slope.
    """
    if grid_ny < 16:
        raise ValueError("grid_ny must be at least 16")
    if grid_nx > PDE_MAX_NX or grid_ny > PDE_MAX_NY:
        raise ValueError(f"grid capped at {PDE_MAX_NX}x{PDE_MAX_NY}")
    if not 0.0 < kappa <= family.domain_halfwidth * (1 + 1e-12):
        raise ValueError("kappa outside the family window")

    xs = _pde_x_grid(family, kappa, grid_nx)
    etas = np.linspace(0.0, 1.0, grid_ny)
    he = etas[1] - etas[0]
    nx, ny = len(xs), len(etas)

    lo = np.empty(nx)
    lo1 = np.empty(nx)
    lo2 = np.empty(nx)
    up1 = np.empty(nx)
    V = np.empty(nx)
    V1 = np.empty(nx)
    V2 = np.empty(nx)
    for i, x in enumerate(xs):
        l0, l1, l2, _ = family.lower(float(x))
        u0, u1, u2, _ = family.upper(float(x))
        lo[i], lo1[i], lo2[i] = l0, l1, l2
        up1[i] = u1
        V[i] = l0 + u0
        V1[i] = l1 + u1
        V2[i] = l2 + u2

    idx = lambda i, j: i * ny + j
    n = nx * ny
    A = sparse.lil_matrix((n, n))
    rhs = np.zeros(n)

    for j in range(ny):
        A[idx(0, j), idx(0, j)] = 1.0
        A[idx(nx - 1, j), idx(nx - 1, j)] = 1.0

    for i in range(1, nx - 1):
        hm = xs[i] - xs[i - 1]
        hp = xs[i + 1] - xs[i]
        # nonuniform central first/second derivative weights in x
        w1m = -hp / (hm * (hm + hp))
        w1c = (hp - hm) / (hm * hp)
        w1p = hm / (hp * (hm + hp))
        w2m = 2.0 / (hm * (hm + hp))
        w2c = -2.0 / (hm * hp)
        w2p = 2.0 / (hp * (hm + hp))

        for j in range(ny):
            eta = etas[j]
            a_cf = (lo1[i] - eta * V1[i]) / V[i]
            row = idx(i, j)
            if j == 0:
                slope = lo1[i]
                s_fac = -V[i] * slope / (1.0 + slope * slope)
                # one-sided d/deta = s_fac * d/dx  (second order both sides)
                A[row, idx(i, 0)] += -3.0 / (2 * he)
                A[row, idx(i, 1)] += 4.0 / (2 * he)
                A[row, idx(i, 2)] += -1.0 / (2 * he)
                A[row, idx(i - 1, 0)] -= s_fac * w1m
                A[row, idx(i, 0)] -= s_fac * w1c
                A[row, idx(i + 1, 0)] -= s_fac * w1p
            elif j == ny - 1:
                slope = up1[i]
                s_fac = V[i] * slope / (1.0 + slope * slope)
                A[row, idx(i, ny - 1)] += 3.0 / (2 * he)
                A[row, idx(i, ny - 2)] += -4.0 / (2 * he)
                A[row, idx(i, ny - 3)] += 1.0 / (2 * he)
                A[row, idx(i - 1, ny - 1)] -= s_fac * w1m
                A[row, idx(i, ny - 1)] -= s_fac * w1c
                A[row, idx(i + 1, ny - 1)] -= s_fac * w1p
            else:
                c_cf = (lo2[i] - eta * V2[i] - 2.0 * a_cf * V1[i]) / V[i]
                ee = a_cf * a_cf + 1.0 / (V[i] * V[i])
                A[row, idx(i - 1, j)] += w2m
                A[row, idx(i, j)] += w2c
                A[row, idx(i + 1, j)] += w2p
                A[row, idx(i, j - 1)] += ee / (he * he) - c_cf / (2 * he)
                A[row, idx(i, j)] += -2.0 * ee / (he * he)
                A[row, idx(i, j + 1)] += ee / (he * he) + c_cf / (2 * he)
                cross = 2.0 * a_cf / (2.0 * he)
                A[row, idx(i - 1, j + 1)] += cross * w1m
                A[row, idx(i, j + 1)] += cross * w1c
                A[row, idx(i + 1, j + 1)] += cross * w1p
                A[row, idx(i - 1, j - 1)] -= cross * w1m
                A[row, idx(i, j - 1)] -= cross * w1c
                A[row, idx(i + 1, j - 1)] -= cross * w1p
                rhs[row] = -2.0

    A = A.tocsr()
    # row-equilibrate before solving: steep narrow columns put O(1/(V he)^2)
    # entries next to O(1) boundary rows, and the defect test must be
    # scale-free
    row_max = np.maximum.reduceat(np.abs(A.data), A.indptr[:-1])
    A = sparse.diags(1.0 / row_max).dot(A).tocsr()
    rhs = rhs / row_max
    sol = spsolve(A, rhs)
    residual = float(np.max(np.abs(A @ sol - rhs)))
    if not np.all(np.isfinite(sol)) or residual > PDE_RESIDUAL_TOL:
        raise RuntimeError(f"strip solve did not converge: residual={residual:.3g}")

    max_slope = float(np.max(np.abs(np.stack([lo1, up1]))))
    hx_local = np.empty(nx)
    hx_local[1:-1] = np.maximum(xs[1:-1] - xs[:-2], xs[2:] - xs[1:-1])
    hx_local[0] = xs[1] - xs[0]
    hx_local[-1] = xs[-1] - xs[-2]
    col_slope = np.maximum(np.abs(lo1), np.abs(up1))
    # two mapped-grid validity bounds: the x-spacing must resolve the wall
    # profile, and the skew coefficient (lo' - eta V')/V must not dominate
    # an eta cell, else the cross-derivative stencil loses monotonicity
    col_skew = np.maximum(np.abs(lo1), np.abs(lo1 - V1))
    validity_ok = bool(np.all(col_slope * hx_local / V <= 1.0)
                       and np.all(col_skew / V * he <= 1.0))

    return StripExitField(x_nodes=xs, eta_nodes=etas,
                          values=sol.reshape(nx, ny), residual=residual,
                          max_wall_slope=max_slope, validity_ok=validity_ok)


def ks_statistic(samples_a, samples_b) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic (tie-safe)."""
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    t = np.concatenate([a, b])
    fa = np.searchsorted(a, t, side="right") / a.size
    fb = np.searchsorted(b, t, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
