"""Analytic and brute-force references for shrinking balls.

A ball stays a ball under the flow, and its radius obeys the scalar
law r' = -f^{-1}((n-1)/r).  Everything here is built on that: a
high-order integrator for arbitrary profiles, the closed form for
power profiles, the one-step radius recurrence the discrete scheme
should reproduce, and the parabolic rescaling identity.
"""

import numpy as np
from scipy.optimize import brentq

ODE_STEP_SCALE = 1e-4   # fraction of the natural time scale per step
EXTINCT_FRAC = 1e-6     # radius fraction below which the ball is gone


def _time_scale(profile, r0):
    # power law: extinction happens on the r0^(1+1/alpha) scale; the
    # quadratic scale is the right fallback for linear and tabulated
    # profiles (both behave like alpha = 1 dimensionally)
    if profile.kind == "power":
        return r0 ** (1.0 + 1.0 / profile.alpha)
    if profile.kind == "linear":
        return profile.slope * r0 ** 2
    return r0 ** 2


def _integrate(profile, n, r0, targets):
    """Radii at the sorted times in targets, one integration pass.

    Classical fourth-order stages with a fixed step; once any stage
    dips under the extinction threshold the radius is 0 from there on.
    """
    rmin = EXTINCT_FRAC * r0
    dt = ODE_STEP_SCALE * _time_scale(profile, r0)

    def rhs(r):
        return -profile.inverse((n - 1.0) / r)

    out = []
    t, r = 0.0, float(r0)
    alive = True
    for target in targets:
        while alive and t < target - 1e-15 * max(target, 1.0):
            step = min(dt, target - t)
            try:
                k1 = rhs(r)
                r2 = r + 0.5 * step * k1
                if r2 <= rmin:
                    raise OverflowError
                k2 = rhs(r2)
                r3 = r + 0.5 * step * k2
                if r3 <= rmin:
                    raise OverflowError
                k3 = rhs(r3)
                r4 = r + step * k3
                if r4 <= rmin:
                    raise OverflowError
                k4 = rhs(r4)
            except OverflowError:
                alive = False
                break
            r_new = r + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if r_new <= rmin:
                alive = False
                break
            t, r = t + step, r_new
        out.append(r if alive else 0.0)
    return out


def radius_ode(profile, n, r0, t):
    """Ball radius at time t under r' = -f^{-1}((n-1)/r); 0 past
    extinction."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 2:
        raise ValueError("dimension must be at least 2")
    if t == 0.0:
        return float(r0)
    return _integrate(profile, n, r0, [t])[0]


def extinction_time(alpha, n, r0):
    """Closed-form vanishing time of a ball for the power profile."""
    return r0 ** (1.0 + 1.0 / alpha) / ((1.0 + 1.0 / alpha)
                                        * (n - 1.0) ** (1.0 / alpha))


def radius_closed_form(alpha, n, r0, t):
    """Power-profile ball radius, exactly; 0 past extinction."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 2:
        raise ValueError("dimension must be at least 2")
    core = (r0 ** (1.0 + 1.0 / alpha)
            - (1.0 + 1.0 / alpha) * (n - 1.0) ** (1.0 / alpha) * t)
    if core <= 0.0:
        return 0.0
    return core ** (alpha / (1.0 + alpha))


def discrete_radius_step(profile, n, r_prev, tau):
    """One minimizing-movement step of the ball radius.

    The new radius is the stationarity root of
    f((r_prev - r)/tau) = (n-1)/r on (0, r_prev); when the curves no
    longer cross, no ball survives and the step returns 0.  Of the two
    crossings the larger is the energy minimum, so the scan walks down
    from r_prev and brackets the first sign change.
    """
    if r_prev <= 0 or tau <= 0:
        raise ValueError("r_prev and tau must be positive")

    r_lo = 1e-9 * r_prev
    if profile.kind == "table":
        # stay inside the tabulated hull
        r_lo = max(r_lo, r_prev - tau * profile.table_r[-1])
        if r_lo >= r_prev:
            raise ValueError("profile table too short for this step")

    def balance(r):
        return profile.eval((r_prev - r) / tau) - (n - 1.0) / r

    rs = np.linspace(r_prev, r_lo, 2000)
    vals = np.array([balance(r) for r in rs])
    pos = np.nonzero(vals > 0.0)[0]
    if len(pos) == 0:
        return 0.0
    j = pos[0]          # first scan point past the upper crossing
    return brentq(balance, rs[j], rs[j - 1], xtol=1e-14, rtol=8.9e-16)


def iterate_recurrence(profile, n, r0, tau, steps):
    """Radii along `steps` recurrence steps; stops at 0 once extinct."""
    out = [float(r0)]
    r = float(r0)
    for _ in range(steps):
        if r <= 0.0:
            out.append(0.0)
            continue
        r = discrete_radius_step(profile, n, r, tau)
        out.append(r)
    return out


def rescaling_check(alpha, n, r0, lam, t, exponent="consistent"):
    """Compare lam * r_{r0}(t * lam^e) against r_{lam r0}(t).

    With e = -(1+alpha)/alpha the closed form makes both sides equal;
    exponent="literal" substitutes e = -1/alpha instead, whose mismatch
    is reported for documentation, not asserted.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if exponent == "consistent":
        e = -(1.0 + alpha) / alpha
    elif exponent == "literal":
        e = -1.0 / alpha
    else:
        raise ValueError("exponent must be 'consistent' or 'literal'")
    lhs = lam * radius_closed_form(alpha, n, r0, t * lam ** e)
    rhs = radius_closed_form(alpha, n, lam * r0, t)
    return lhs, rhs, abs(lhs - rhs)


def oracle_table(profile, n, r0, tau, horizon):
    """Rows (t, r_ode, r_closed, r_recurrence) at step multiples.

    The closed-form column is NaN for non-power profiles.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    steps = int(np.floor(horizon / tau + 1e-12)) if horizon > 0 else 0
    ts = [k * tau for k in range(steps + 1)]
    odes = _integrate(profile, n, r0, ts) if ts[-1] > 0 else [r0]
    recs = iterate_recurrence(profile, n, r0, tau, steps)
    rows = []
    for k, t in enumerate(ts):
        if profile.kind == "power":
            closed = radius_closed_form(profile.alpha, n, r0, t)
        else:
            closed = float("nan")
        rows.append((t, odes[k], closed, recs[k]))
    return rows
