"""One minimizing-movement step for forced anisotropic curvature flow.

The step minimizes P_phi(E) + integral over E of (f(sd_F / tau) + g)
among finite-perimeter sets, by convex relaxation.  Two equivalent
routes are provided: tv_minimize relaxes the indicator directly to a
field u in [0,1], while the stepping engine parametrizes the whole
nested family of prescribed-curvature problems by one level function w
whose sublevel set {w < 0} is the step output.  The level route keeps
the bulk data within a benign dynamic range for strongly nonlinear
mobilities, and every solve carries a termwise nonnegative duality-gap
certificate.
"""

import time
import warnings

import numpy as np

from .grid import signed_distance, volume
from .anisotropy import perimeter_phi

H_CLAMP = 1e30
EPS_SEL = 1e-3     # relaxed-field margin defining minimal/maximal selections


class StepConfig:
    """Knobs for one step: time step, solver budget, selection rule."""

    def __init__(self, tau, pd_max_iters=400000, pd_gap_tol=None,
                 s_star=0.5, selection="threshold"):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if not (0.0 < s_star < 1.0):
            raise ValueError("threshold must lie in (0,1)")
        if selection not in ("threshold", "minimal", "maximal"):
            raise ValueError("unknown selection %r" % selection)
        if pd_gap_tol is not None and pd_gap_tol <= 0:
            raise ValueError("gap tolerance must be positive")
        self.tau = float(tau)
        self.pd_max_iters = int(pd_max_iters)
        self.pd_gap_tol = pd_gap_tol
        self.s_star = float(s_star)
        self.selection = selection

    def gap_tol(self, grid):
        """Resolved absolute tolerance; default 1e-6 of the box volume."""
        if self.pd_gap_tol is not None:
            return self.pd_gap_tol
        vol = 1.0
        for lo, hi in zip(grid.lo, grid.hi):
            vol *= hi - lo
        return 1e-6 * vol


class StepReport:
    """Diagnostics of a completed step."""

    def __init__(self, energy, energy_prev, gap, iters, perimeter,
                 volume_out, sym_diff_prev, max_dist, wallclock, status):
        self.energy = energy
        self.energy_prev = energy_prev
        self.gap = gap
        self.iters = iters
        self.perimeter = perimeter
        self.volume = volume_out
        self.sym_diff_prev = sym_diff_prev
        self.max_dist = max_dist
        self.wallclock = wallclock
        self.status = status

    def __repr__(self):
        return ("StepReport(status=%s, gap=%.3e, iters=%d, volume=%.6g)"
                % (self.status, self.gap, self.iters, self.volume))


# ---------------------------------------------------------------------------
# discrete gradient at cell vertices; "zero" extends the field by zero
# past the border (level engine), "edge" continues the outermost cells
# (Neumann, so constant fields have no gradient anywhere)

def _vgrad(w, h, mode="zero"):
    n = w.ndim
    wp = np.pad(w, 1) if mode == "zero" else np.pad(w, 1, mode="edge")
    comps = []
    for k in range(n):
        d = np.diff(wp, axis=k) / h
        for j in range(n):
            if j == k:
                continue
            lo = tuple(slice(None, -1) if i == j else slice(None)
                       for i in range(n))
            hi = tuple(slice(1, None) if i == j else slice(None)
                       for i in range(n))
            d = 0.5 * (d[lo] + d[hi])
        comps.append(d)
    return np.stack(comps, axis=-1)


def _vgrad_adj(eta, h, mode="zero"):
    # exact adjoint of _vgrad: spread each vertex value back, then
    # backward-difference on the padded array; the padding transpose
    # either drops the halo (zero) or folds it onto the border (edge)
    n = eta.shape[-1]
    out = None
    for k in range(n):
        d = eta[..., k]
        for j in range(n):
            if j == k:
                continue
            pad = [(0, 0)] * n
            pad[j] = (1, 1)
            dp = np.pad(d, pad)
            lo = tuple(slice(None, -1) if i == j else slice(None)
                       for i in range(n))
            hi = tuple(slice(1, None) if i == j else slice(None)
                       for i in range(n))
            d = 0.5 * (dp[lo] + dp[hi])
        pad = [(0, 0)] * n
        pad[k] = (1, 1)
        dp = np.pad(d, pad)
        lo = tuple(slice(None, -1) if i == k else slice(None)
                   for i in range(n))
        hi = tuple(slice(1, None) if i == k else slice(None)
                   for i in range(n))
        acc = -(dp[hi] - dp[lo]) / h
        out = acc if out is None else out + acc
    if mode == "edge":
        for k in range(n):
            first = tuple(slice(1, 2) if i == k else slice(None)
                          for i in range(n))
            halo0 = tuple(slice(0, 1) if i == k else slice(None)
                          for i in range(n))
            last = tuple(slice(-2, -1) if i == k else slice(None)
                         for i in range(n))
            halo1 = tuple(slice(-1, None) if i == k else slice(None)
                          for i in range(n))
            out[first] += out[halo0]
            out[last] += out[halo1]
    return out[tuple(slice(1, -1) for _ in range(n))]


# ---------------------------------------------------------------------------
# bulk profiles: proximal maps and conjugates for the level formulation

class _Bulk:
    """Cellwise bulk energy h^n (tau F((sd - w)/tau) - g w), F' = f."""

    def __init__(self, profile, hn, tau):
        self.profile = profile
        self.hn = hn
        self.tau = tau
        k = profile.kind
        if k == "power":
            self.alpha = profile.alpha
        elif k == "linear":
            self.alpha = 1.0
        else:
            self.alpha = None
        # strong convexity modulus in w, where uniform
        if k == "linear":
            self.mu = hn * profile.slope / tau
        elif k == "power" and profile.alpha == 1.0:
            self.mu = hn / tau
        else:
            self.mu = None

    def F(self, v):
        p = self.profile
        if p.kind == "power":
            a = p.alpha
            return np.abs(v) ** (1.0 + a) / (1.0 + a)
        if p.kind == "linear":
            return p.slope * v * v / 2.0
        r, f = p.table_r, p.table_f
        F_nodes = np.concatenate(
            [[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(r))])
        av = np.minimum(np.abs(v), r[-1])
        j = np.clip(np.searchsorted(r, av, side="right") - 1, 0, len(r) - 2)
        fv = np.interp(av, r, f)
        base = F_nodes[j] + 0.5 * (f[j] + fv) * (av - r[j])
        # beyond the table f is pinned at its last value
        over = np.maximum(np.abs(v) - r[-1], 0.0)
        return base + f[-1] * over

    def Fstar(self, y):
        p = self.profile
        if p.kind == "power":
            a = p.alpha
            return np.abs(y) ** (1.0 + 1.0 / a) / (1.0 + 1.0 / a)
        if p.kind == "linear":
            return y * y / (2.0 * p.slope)
        ay = np.minimum(np.abs(y), p.table_f[-1])
        v = np.interp(ay, p.table_f, p.table_r)
        base = ay * v - self.F(v)
        over = np.maximum(np.abs(y) - p.table_f[-1], 0.0)
        # conjugate grows linearly with slope r_max past the pinned range
        return base + over * p.table_r[-1]

    def prox(self, z, sd, tp):
        """argmin_w (w-z)^2/(2 tp) + h^n tau F((sd-w)/tau)."""
        hn, tau = self.hn, self.tau
        p = self.profile
        b = sd - z
        if p.kind == "linear" or (p.kind == "power" and p.alpha == 1.0):
            s = p.slope if p.kind == "linear" else 1.0
            c = tp * hn * s / tau
            return (z + c * sd) / (1.0 + c)
        if p.kind == "power" and p.alpha == 3.0:
            a = tp * hn / tau ** 3
            # odd cubic a v^3 + v = b; Cardano without cancellation
            t1 = np.abs(b) / (2.0 * a)
            q3 = 1.0 / (3.0 * a)
            t2 = np.sqrt(t1 * t1 + q3 ** 3)
            u1 = np.cbrt(t1 + t2)
            v = np.sign(b) * (u1 - q3 / u1)
            return sd - v
        if p.kind == "power" and p.alpha == 0.5:
            c = tp * hn / np.sqrt(tau)
            t = 0.5 * (-c + np.sqrt(c * c + 4.0 * np.abs(b)))
            return sd - np.sign(b) * t * t
        if p.kind == "power":
            a = tp * hn / tau ** p.alpha

            def psi(v):
                return a * np.sign(v) * np.abs(v) ** p.alpha + v - b
        else:
            rmax = p.table_r[-1] * tau

            def psi(v):
                arg = np.clip(v, -rmax, rmax) / tau
                return tp * hn * p.eval(arg) + v - b
        lo = -np.abs(b)
        hi = np.abs(b)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            neg = psi(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        return sd - 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# the level-function primal-dual solve

def _solve_level(a, sd, g, profile, tau, h, gap_tol, max_iters,
                 check_every=25):
    """Minimize h^n sum phi°(grad w) + sum_cells h^n (tau F((sd-w)/tau) - g w)
    with the outermost ring of cells frozen at w = sd.

    Returns (w, gap, iters).  The gap is a sum of termwise nonnegative
    Fenchel residuals, so it certifies any iterate, converged or not.
    """
    n = sd.ndim
    hn = h ** n
    bulk = _Bulk(profile, hn, tau)

    ring = np.ones(sd.shape, dtype=bool)
    ring[tuple(slice(1, -1) for _ in range(n))] = False
    inner = ~ring

    # steps balanced by s0 (sublinear mobilities want a dual-heavy
    # split); the vertex gradient has operator norm exactly 2/h in any
    # dimension, so the scaled operator h^n K has norm h^n 2/h
    s0 = 2.0 if (bulk.alpha is None or bulk.alpha >= 1.0) else 8.0
    Anorm = hn * 2.0 / h
    sig = s0 / Anorm
    tp = 1.0 / (s0 * Anorm)
    accel = bulk.mu is not None
    mu = bulk.mu

    w = sd.copy()
    gz = g * hn
    wbar = w
    eta = np.zeros(tuple(s + 1 for s in sd.shape) + (n,))
    gap = np.inf
    it = 0
    while it < max_iters:
        it += 1
        eta = a.project_unit_ball(eta + (sig * hn) * _vgrad(wbar, h))
        w_old = w
        z = w - tp * hn * _vgrad_adj(eta, h)
        w = bulk.prox(z + tp * gz, sd, tp)
        w = np.where(ring, sd, w)
        if accel:
            th = 1.0 / np.sqrt(1.0 + 2.0 * mu * tp)
            tp *= th
            sig /= th
        else:
            th = 1.0
        wbar = w + th * (w - w_old)
        if it % check_every == 0 or it == max_iters:
            gap = _level_gap(a, w, eta, sd, gz, bulk, h, inner)
            if gap <= gap_tol:
                break
    return w, gap, it


def _level_gap(a, w, eta, sd, gz, bulk, h, inner):
    hn = bulk.hn
    tau = bulk.tau
    gw = _vgrad(w, h)
    gap_tv = hn * float(np.sum(a.phi_dual(gw) - np.sum(eta * gw, axis=-1)))
    q = -hn * _vgrad_adj(eta, h)
    qt = q + gz
    # G(w) + G*(q) - q w cellwise, zero on the frozen ring
    Gw = hn * tau * bulk.F((sd - w) / tau) - gz * w
    Gs = qt * sd + hn * tau * bulk.Fstar(-qt / hn)
    cell = Gw + Gs - q * w
    gap_bulk = float(np.sum(cell[inner]))
    return gap_tv + gap_bulk


# ---------------------------------------------------------------------------
# public operations

def build_h(profile, forcing, prev_mask, tau, grid):
    """Cellwise curvature prescription f(sd_F / tau) + g.

    Overflowing values of f are clamped at +-1e30 with a warning; far
    from the interface only the sign matters.  Table profiles are
    likewise pinned to their outermost tabulated slope.
    """
    sd = signed_distance(grid, prev_mask)
    r = sd / tau
    if profile.kind == "table":
        rmax = profile.table_r[-1]
        if np.any(np.abs(r) > rmax):
            warnings.warn("sd/tau exceeds the profile table; pinning")
            r = np.clip(r, -rmax, rmax)
        vals = profile.eval(r)
    else:
        with np.errstate(over="ignore"):
            vals = profile.eval(r)
        bad = ~np.isfinite(vals) | (np.abs(vals) > H_CLAMP)
        if np.any(bad):
            warnings.warn("profile overflow at extreme sd/tau; clamping")
            vals = np.clip(np.nan_to_num(vals, posinf=H_CLAMP,
                                         neginf=-H_CLAMP),
                           -H_CLAMP, H_CLAMP)
    if forcing is not None and not forcing.is_zero:
        vals = vals + forcing.sample(grid)
    return vals


def tv_minimize(a, h_field, cfg, grid):
    """Relaxed prescribed-curvature problem on the indicator directly.

    Minimizes h^n sum phi°(grad u) + h^n sum h_field u over fields
    u in [0,1] by the same primal-dual iteration as the level engine,
    recording the best iterate seen so the reported energy sequence is
    nonincreasing.  Returns (u, gap, iters); gap > tol means the
    iteration budget ran out and the result is the best certified
    iterate seen.
    """
    h_field = np.asarray(h_field, dtype=float)
    if not np.all(np.isfinite(h_field)):
        raise ValueError("curvature prescription must be finite")
    n = h_field.ndim
    h = grid.h
    hn = h ** n
    tol = cfg.gap_tol(grid)

    Anorm = hn * 2.0 / h
    sig = 2.0 / Anorm
    tp = 1.0 / (2.0 * Anorm)
    u = np.where(h_field <= 0.0, 1.0, 0.0)
    ubar = u
    eta = np.zeros(tuple(s + 1 for s in h_field.shape) + (n,))
    best = None
    it = 0
    while it < cfg.pd_max_iters:
        it += 1
        eta = a.project_unit_ball(eta + (sig * hn) * _vgrad(ubar, h, "edge"))
        u_old = u
        u = np.clip(u - tp * hn * (_vgrad_adj(eta, h, "edge") + h_field),
                    0.0, 1.0)
        ubar = 2.0 * u - u_old
        if it % 25 == 0 or it == cfg.pd_max_iters:
            gu = _vgrad(u, h, "edge")
            primal = hn * (float(np.sum(a.phi_dual(gu)))
                           + float(np.sum(h_field * u)))
            gap_tv = hn * float(np.sum(a.phi_dual(gu)
                                       - np.sum(eta * gu, axis=-1)))
            q = hn * _vgrad_adj(eta, h, "edge")
            lin = hn * h_field + q
            gap_lin = float(np.sum(lin * u + np.maximum(0.0, -lin)))
            gap = gap_tv + gap_lin
            if best is None or primal < best[0]:
                best = (primal, u.copy(), gap)
            if gap <= tol:
                break
    return best[1], best[2], it


def threshold_select(u, selection, s_star=0.5):
    """Extract a set from the relaxed field.

    "threshold" takes {u > s*}; "minimal" and "maximal" take the
    extreme sublevels {u >= 1 - eps} and {u > eps}, bracketing every
    threshold choice between them.
    """
    u = np.asarray(u)
    if selection == "threshold":
        return u > s_star
    if selection == "minimal":
        return u >= 1.0 - EPS_SEL
    if selection == "maximal":
        return u > EPS_SEL
    raise ValueError("unknown selection %r" % selection)


def _check_margin(grid, mask):
    if not mask.any():
        raise ValueError("empty input set")
    belt = np.zeros(grid.cells, dtype=bool)
    belt[tuple(slice(3, c - 3) for c in grid.cells)] = True
    if np.any(mask & ~belt):
        raise ValueError("set reaches the 3-cell border belt; "
                         "rerun on a larger box")


def step_fields(profile, forcing, a, sd, cfg, grid, prev_mask):
    """Core step given the signed distance of the previous set.

    Returns (mask, w, report) where w is the level function whose
    0-sublevel is the output; callers tracking the interface reuse it.
    """
    t0 = time.perf_counter()
    n = grid.n
    h = grid.h
    tau = cfg.tau
    tol = cfg.gap_tol(grid)

    # sub-box around the current set, wide enough for one step's motion
    r_ins = max(float(-sd.min()), h)
    gsup = 0.0
    if forcing is not None and not forcing.is_zero:
        gsup = forcing.norms(grid)[0]
    speed = profile.inverse((n - 1) / r_ins + gsup)
    marg = int(np.ceil(4.0 * tau * speed / h)) + 8
    idx = np.argwhere(prev_mask)
    lo = np.maximum(idx.min(axis=0) - marg, 0)
    hi = np.minimum(idx.max(axis=0) + 1 + marg, np.array(grid.cells))
    sl = tuple(slice(int(p), int(q)) for p, q in zip(lo, hi))

    g_sub = np.zeros(sd[sl].shape)
    if forcing is not None and not forcing.is_zero:
        g_sub = forcing.sample(grid)[sl]

    w_sub, gap, iters = _solve_level(a, sd[sl], g_sub, profile, tau, h,
                                     tol, cfg.pd_max_iters)
    w = sd.copy()
    w[sl] = w_sub

    # one level function encodes the whole nested minimizer family;
    # half a cell of relaxed field on each side of the 0-level
    u = np.clip(0.5 - w / h, 0.0, 1.0)
    mask = threshold_select(u, cfg.selection, cfg.s_star)

    status = "ok" if gap <= tol else "maxiter"
    if not mask.any():
        status = "extinct"

    diff = mask ^ prev_mask
    max_dist = float(np.abs(sd[diff]).max()) if diff.any() else 0.0
    svol = float(np.count_nonzero(diff)) * grid.cell_volume
    pv = perimeter_phi(a, mask, grid) if mask.any() else 0.0
    vol = volume(grid, mask)

    h_all = build_h_from_sd(profile, forcing, sd, tau, grid)
    cellv = grid.cell_volume
    energy = pv + float(np.sum(h_all[mask])) * cellv
    energy_prev = (perimeter_phi(a, prev_mask, grid)
                   + float(np.sum(h_all[prev_mask])) * cellv)

    rep = StepReport(energy, energy_prev, gap, iters, pv, vol, svol,
                     max_dist, time.perf_counter() - t0, status)
    return mask, w, rep


def build_h_from_sd(profile, forcing, sd, tau, grid):
    """build_h on an externally supplied signed distance field."""
    r = sd / tau
    if profile.kind == "table":
        rmax = profile.table_r[-1]
        r = np.clip(r, -rmax, rmax)
        vals = profile.eval(r)
    else:
        with np.errstate(over="ignore"):
            vals = profile.eval(r)
        vals = np.clip(np.nan_to_num(vals, posinf=H_CLAMP, neginf=-H_CLAMP),
                       -H_CLAMP, H_CLAMP)
    if forcing is not None and not forcing.is_zero:
        vals = vals + forcing.sample(grid)
    return vals


def atw_step(profile, forcing, a, prev_mask, cfg, grid):
    """One minimizing-movement step from a mask.

    Composition: signed distance of the input set, curvature
    prescription, relaxed minimization, selection.  Empty output is an
    ordinary extinction, reported in the step status.
    """
    prev_mask = np.asarray(prev_mask, dtype=bool)
    _check_margin(grid, prev_mask)
    sd = signed_distance(grid, prev_mask)
    mask, _, rep = step_fields(profile, forcing, a, sd, cfg, grid, prev_mask)
    return mask, rep
