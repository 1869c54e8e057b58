"""Velocity profiles f, forcing terms g, and the scalar constants built from them.

The profile f converts the signed-distance ratio sd/tau into a bulk
penalty; it must be odd, continuous, strictly increasing and surjective.
The density constants (rho_tau, r_tau) solve the coupled system

    rho_tau * f(rho_tau / tau)            = varsigma0
    r_tau   * f((r_tau + 2 rho_tau)/tau)  = varsigma1

and feed the displacement and density diagnostics.
"""

import math
import warnings

import numpy as np


def _bisect_increasing(func, target, lo, hi, iters=200):
    """Root of func(x) = target for increasing func, geometric bracket growth."""
    flo, fhi = func(lo), func(hi)
    grow = 0
    while fhi < target:
        lo, flo = hi, fhi
        hi *= 2.0
        fhi = func(hi)
        grow += 1
        if grow > 400:
            raise ArithmeticError(
                f"bracket expansion failed: f({hi:.3e}) = {fhi:.3e} < {target:.3e}")
    while flo > target:
        hi, fhi = lo, flo
        lo /= 2.0
        flo = func(lo)
        grow += 1
        if grow > 800:
            raise ArithmeticError(
                f"bracket expansion failed near zero: f({lo:.3e}) > {target:.3e}")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if func(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class MonotoneProfile:
    """Odd strictly increasing velocity profile.

    kind is one of "power", "linear", "table".  Power profiles store the
    exponent alpha; linear ones a slope; table profiles a strictly
    increasing sample (r_i, f_i) on r >= 0 starting at (0, 0), extended
    to negative arguments by oddness.
    """

    def __init__(self, kind, alpha=None, slope=None, table=None):
        self.kind = kind
        self.alpha = alpha
        self.slope = slope
        if kind == "power":
            if alpha is None or alpha <= 0:
                raise ValueError("power profile needs alpha > 0")
        elif kind == "linear":
            if slope is None or slope <= 0:
                raise ValueError("linear profile needs slope > 0")
        elif kind == "table":
            pts = np.asarray(table, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
                raise ValueError("table needs at least 3 (r, f) pairs")
            r, f = pts[:, 0], pts[:, 1]
            if r[0] != 0.0 or f[0] != 0.0:
                raise ValueError("table must start at (0, 0)")
            if np.any(np.diff(r) <= 0) or np.any(np.diff(f) <= 0):
                raise ValueError("table samples must be strictly increasing")
            self.table_r = r
            self.table_f = f
        else:
            raise ValueError(f"unknown profile kind {kind!r}")

    @classmethod
    def power(cls, alpha):
        return cls("power", alpha=float(alpha))

    @classmethod
    def linear(cls, slope):
        return cls("linear", slope=float(slope))

    @classmethod
    def from_table(cls, points):
        return cls("table", table=points)

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        """f(r), odd in r."""
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            out = np.sign(r) * np.abs(r) ** self.alpha
        elif self.kind == "linear":
            out = self.slope * r
        else:
            a = np.abs(r)
            if np.any(a > self.table_r[-1]):
                raise ValueError(
                    f"table query {float(np.max(a)):.6g} outside sampled hull "
                    f"[0, {self.table_r[-1]:.6g}]")
            out = np.sign(r) * np.interp(a, self.table_r, self.table_f)
        return out if out.ndim else float(out)

    def inverse(self, y):
        """r with f(r) = y; piecewise-linear inversion for tables."""
        y = np.asarray(y, dtype=float)
        if self.kind == "power":
            out = np.sign(y) * np.abs(y) ** (1.0 / self.alpha)
        elif self.kind == "linear":
            out = y / self.slope
        else:
            a = np.abs(y)
            if np.any(a > self.table_f[-1]):
                raise ValueError(
                    f"inverse query {float(np.max(a)):.6g} outside sampled range "
                    f"[0, {self.table_f[-1]:.6g}]")
            out = np.sign(y) * np.interp(a, self.table_f, self.table_r)
        return out if out.ndim else float(out)


class ForcingSpec:
    """Spatial forcing g with an integrability exponent q in [n, inf].

    Shapes: ("zero",), ("constant", c), ("bump", center, radius, amplitude),
    ("sum", [spec, ...]).  The bump is the compactly supported quartic
    a * (1 - (|x - c| / R)^2)^2.
    """

    def __init__(self, shape=("zero",), q=math.inf):
        self.shape = shape
        self.q = q

    @classmethod
    def zero(cls):
        return cls(("zero",), math.inf)

    @classmethod
    def constant(cls, c, q=math.inf):
        return cls(("constant", float(c)), q)

    @classmethod
    def bump(cls, center, radius, amplitude, q=math.inf):
        return cls(("bump", tuple(center), float(radius), float(amplitude)), q)

    @classmethod
    def sum(cls, parts, q=math.inf):
        return cls(("sum", list(parts)), q)

    @property
    def is_zero(self):
        return self.shape[0] == "zero"

    def sample(self, grid):
        """Cell-center samples of g on the grid."""
        kind = self.shape[0]
        if kind == "zero":
            return np.zeros(grid.cells)
        if kind == "constant":
            return np.full(grid.cells, self.shape[1])
        if kind == "bump":
            _, center, radius, amp = self.shape
            mesh = np.meshgrid(*grid.axes, indexing="ij")
            d2 = sum((m - c) ** 2 for m, c in zip(mesh, center)) / radius ** 2
            return amp * np.clip(1.0 - d2, 0.0, None) ** 2
        if kind == "sum":
            return sum(p.sample(grid) for p in self.shape[1])
        raise ValueError(f"unknown forcing shape {kind!r}")

    def norms(self, grid):
        """(sup, L1, Lq) of the sampled forcing over the box."""
        g = self.sample(grid)
        hn = grid.h ** grid.n
        sup = float(np.max(np.abs(g)))
        l1 = float(np.sum(np.abs(g)) * hn)
        if math.isinf(self.q):
            lq = sup
        else:
            lq = float((np.sum(np.abs(g) ** self.q) * hn) ** (1.0 / self.q))
        if not (math.isfinite(l1) and math.isfinite(lq)):
            raise ValueError("forcing has non-finite discrete norms")
        return sup, l1, lq


class DensityConstants:
    """Solved density-system constants for one (profile, tau)."""

    def __init__(self, varsigma0, varsigma1, rho_tau, r_tau, C1, tau):
        self.varsigma0 = varsigma0
        self.varsigma1 = varsigma1
        self.rho_tau = rho_tau
        self.r_tau = r_tau
        self.C1 = C1
        self.tau = tau

    def __repr__(self):
        return (f"DensityConstants(rho_tau={self.rho_tau:.6g}, "
                f"r_tau={self.r_tau:.6g}, tau={self.tau:.6g})")


def solve_density_system(profile, varsigma0, varsigma1, tau):
    """Solve the two coupled scalar equations for (rho_tau, r_tau).

    Both left-hand sides are strictly increasing, so plain bracketed
    bisection is enough; residuals are driven below 1e-10 relative.
    """
    if varsigma0 <= 0 or varsigma1 <= 0 or tau <= 0:
        raise ValueError("varsigma0, varsigma1, tau must be positive")

    def capped(raw):
        # bracket probes may overshoot a table profile's sampled hull;
        # +inf keeps them monotone and steers the bisection back inside
        def wrapped(x):
            try:
                return raw(x)
            except ValueError:
                return math.inf
        return wrapped

    rho = _bisect_increasing(capped(lambda p: p * profile.eval(p / tau)),
                             varsigma0, tau, max(tau, 1.0))
    r = _bisect_increasing(
        capped(lambda s: s * profile.eval((s + 2.0 * rho) / tau)), varsigma1,
        tau, max(tau, 1.0))
    res0 = abs(rho * profile.eval(rho / tau) - varsigma0) / varsigma0
    res1 = abs(r * profile.eval((r + 2.0 * rho) / tau) - varsigma1) / varsigma1
    if res0 > 1e-10 or res1 > 1e-10:
        raise ArithmeticError(
            f"density system residuals {res0:.2e}, {res1:.2e} exceed 1e-10")
    return DensityConstants(varsigma0, varsigma1, rho, r, varsigma0, tau)


def liminf_ratio_probe(profile, varsigma0, varsigma1, tau_grid):
    """Table of (tau, r_tau / tau) over a decreasing tau grid.

    The summary flag is True when the ratio stays bounded away from zero
    across the grid, the behavior the time-continuity estimates need.
    """
    taus = list(tau_grid)
    if any(b >= a for a, b in zip(taus, taus[1:])) or taus[-1] <= 0:
        raise ValueError("tau_grid must be strictly decreasing and positive")
    rows = []
    for tau in taus:
        dc = solve_density_system(profile, varsigma0, varsigma1, tau)
        rows.append((tau, dc.r_tau / tau))
    plausible = rows[-1][1] >= 0.5 * rows[0][1]
    return rows, plausible


def constant_C1(c_phi, C_phi, n):
    """Density-estimate constant 2 C n (8C / 3c)^n."""
    if not (0 < c_phi <= C_phi) or n < 2:
        raise ValueError("need 0 < c_phi <= C_phi and n >= 2")
    return 2.0 * C_phi * n * (8.0 * C_phi / (3.0 * c_phi)) ** n


def _unit_ball_volume(n):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def morrey_gamma(forcing, c_phi, n, grid):
    """Radius gamma_g below which small sets carry little forcing mass.

    Closed forms for q = inf and q in (n, inf); for q = n a halving
    search over gamma checked against the discrete supremum of
    integral of |g| over A divided by |A|^((n-1)/n) on axis-aligned
    sub-boxes.
    """
    q = forcing.q
    if q < n:
        raise ValueError(f"integrability exponent q = {q} below dimension {n}")
    sup, _, lq = forcing.norms(grid)
    omega_n = _unit_ball_volume(n)
    if math.isinf(q):
        return c_phi * n / (4.0 * (1.0 + sup))
    if q > n:
        base = c_phi * n / (4.0 * (1.0 + lq))
        return omega_n ** (-1.0 / n) * base ** (q / (q - n))
    # q == n: non-constructive in general, search discretely
    box = max(hi - lo for lo, hi in grid.extents)
    if forcing.is_zero:
        return 0.5 * box
    g = np.abs(forcing.sample(grid))
    bound = c_phi * n * omega_n ** (1.0 / n) / 4.0
    gamma = 0.5 * box
    while gamma > grid.h:
        if _subbox_mass_ok(g, grid, gamma, omega_n, bound):
            return gamma
        gamma *= 0.5
    raise ArithmeticError("no admissible gamma above one cell; forcing too "
                          "concentrated at this resolution")


def _subbox_mass_ok(g, grid, gamma, omega_n, bound):
    """Check the sub-box mass ratio for all boxes below the volume cap."""
    hn = grid.h ** grid.n
    vol_cap = omega_n * gamma ** grid.n
    # cumulative sums give O(1) box mass queries
    cs = g.copy()
    for ax in range(grid.n):
        cs = np.cumsum(cs, axis=ax)
    cs = np.pad(cs, [(1, 0)] * grid.n)
    sizes = []
    for nc in grid.cells:
        s, acc = 1, []
        while s <= nc:
            acc.append(s)
            s *= 2
        sizes.append(acc)
    for shape in _size_combos(sizes):
        vol = hn * np.prod(shape)
        if vol >= vol_cap:
            continue
        mass = _box_sums(cs, shape)
        if np.max(mass) * hn > bound * vol ** ((grid.n - 1) / grid.n):
            return False
    return True


def _size_combos(sizes):
    if len(sizes) == 1:
        return [(s,) for s in sizes[0]]
    rest = _size_combos(sizes[1:])
    return [(s, *r) for s in sizes[0] for r in rest]


def _box_sums(cs, shape):
    """All sums of g over boxes of the given cell shape, via inclusion-exclusion."""
    n = cs.ndim
    out = None
    for corner in range(1 << n):
        sl = []
        sign = 1
        for ax in range(n):
            full = cs.shape[ax] - 1
            w = shape[ax]
            if corner >> ax & 1:
                sl.append(slice(w, full + 1))
            else:
                sl.append(slice(0, full + 1 - w))
                sign = -sign
        term = cs[tuple(sl)]
        out = term.copy() if out is None else out + (term if sign > 0 else -term)
    # mass is nonnegative; abs only guards cancellation roundoff
    return np.abs(out)
