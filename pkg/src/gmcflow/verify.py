"""Theorem-level suites run over recorded flows.

Each suite walks one or more traces and emits machine-checkable
records: measured quantity, threshold, verdict.  Suites also carry a
negative control — a deliberately broken variant of their own check —
so a suite that cannot fail is caught rather than trusted.
"""

import json
import math

import numpy as np
from scipy.spatial import ConvexHull, Delaunay
from scipy import ndimage

from .grid import volume, sym_diff_volume, inclusion_deficit, signed_distance
from .anisotropy import perimeter_phi
from .profiles import solve_density_system, constant_C1, _unit_ball_volume


class SuiteReport:
    """Ordered assertion records for one suite invocation."""

    def __init__(self, suite):
        self.suite = suite
        self.records = []

    def add(self, step, name, quantity, threshold, passed):
        self.records.append({"suite": self.suite, "step": step,
                             "name": name, "quantity": float(quantity),
                             "threshold": float(threshold),
                             "pass": bool(passed)})

    @property
    def passed(self):
        return all(r["pass"] for r in self.records)

    def json_lines(self):
        return [json.dumps(r, sort_keys=True) for r in self.records]

    def summary(self):
        bad = sum(1 for r in self.records if not r["pass"])
        return "%s: %d checks, %d failed" % (self.suite,
                                             len(self.records), bad)


def _require_same_lattice(t1, t2):
    if t1.grid != t2.grid:
        raise ValueError("traces live on different grids")
    if t1.config.tau != t2.config.tau:
        raise ValueError("traces use different time steps")


def comparison_suite(trace_inner, trace_outer, margin_cells=2):
    """Inclusion must persist step by step once it holds initially.

    The initial margin is measured as the depth of the inner set inside
    the outer one; the per-step check is a literal containment deficit.
    """
    _require_same_lattice(trace_inner, trace_outer)
    grid = trace_inner.grid
    rep = SuiteReport("comparison")

    inner0 = trace_inner.masks[0]
    outer0 = trace_outer.masks[0]
    depth = ndimage.distance_transform_edt(outer0, sampling=grid.h)
    if not inner0.any():
        raise ValueError("inner trace starts empty")
    margin = float(depth[inner0].min())
    if margin < margin_cells * grid.h:
        raise ValueError("initial inclusion margin %.3g below %d cells"
                         % (margin, margin_cells))

    K = min(trace_inner.steps, trace_outer.steps)
    for k in range(K + 1):
        d = inclusion_deficit(grid, trace_inner.masks[k],
                              trace_outer.masks[k])
        rep.add(k, "inclusion_deficit", d, 0.0, d == 0.0)

    # negative control: swapping the pair must produce a deficit
    ks = 1 if K >= 1 else 0
    d_swapped = inclusion_deficit(grid, trace_outer.masks[ks],
                                  trace_inner.masks[ks])
    rep.add(ks, "negative_control_swapped", d_swapped, 0.0, d_swapped > 0.0)
    return rep


def _wulff_gap(a, mask, grid, x0):
    """Largest r with {phi(x - x0) < r} inside the mask."""
    comp = ~np.asarray(mask, dtype=bool)
    if not comp.any():
        return float("inf")
    mesh = grid.meshgrid()
    pts = np.stack([mesh[i][comp] - x0[i] for i in range(grid.n)], axis=-1)
    return float(a.phi(pts).min())


def ball_sandwich_suite(trace, r0, x0, a):
    """Inner Wulff shapes erode at most linearly in elapsed time.

    Fits the smallest rate C8 with W_{r0 - C8 k tau}(x0) inside every
    E_k over the first half-life, then checks the erosion really is
    linear in k tau to within two cells.
    """
    grid = trace.grid
    tau = trace.config.tau
    rep = SuiteReport("ball_sandwich")

    rho0 = _wulff_gap(a, trace.masks[0], grid, x0)
    if rho0 < r0:
        raise ValueError("the radius-%g Wulff shape at the given center "
                         "is not inside the initial mask" % r0)

    K = trace.steps
    erosion = []
    for k in range(K + 1):
        rho_k = _wulff_gap(a, trace.masks[k], grid, x0)
        erosion.append(max(r0 - rho_k, 0.0))

    # rate cap and window depend on each other; two sweeps settle it
    ks = np.arange(K + 1)
    kw = K
    c8 = 0.0
    for _ in range(3):
        blob = [erosion[k] / (k * tau) for k in range(1, kw + 1)]
        c8 = max(blob) if blob else 0.0
        if c8 <= 0.0:
            kw = K
            break
        kw = min(K, max(1, int(r0 / (2.0 * c8 * tau))))
    rep.add(kw, "C8_hat", c8, float("inf"), math.isfinite(c8))

    # erosion against its own linear fit over the window
    if kw >= 2:
        ts = ks[:kw + 1] * tau
        es = np.array(erosion[:kw + 1])
        slope, icept = np.polyfit(ts, es, 1)
        resid = float(np.abs(es - (slope * ts + icept)).max())
    else:
        resid = 0.0
    rep.add(kw, "erosion_linear_residual", resid, 2.0 * grid.h,
            resid <= 2.0 * grid.h)

    # negative control: a center pushed outside the set must trip the
    # precondition
    far = list(x0)
    far[0] = grid.hi[0] - 2.0 * grid.h
    tripped = _wulff_gap(a, trace.masks[0], grid, far) < r0
    rep.add(0, "negative_control_precondition", 1.0 if tripped else 0.0,
            1.0, tripped)
    return rep


def volume_distance_suite(trace, p_grid, profile, a):
    """Per-step symmetric difference against the covering bound.

    For each step and each p the bound reads
        |E dF| <= (branch term) * P_phi(F) + (1/f(p)) * integral of
        f(d_F/tau) over E dF,
    with the branch picked by how p tau and tau compare to the density
    radius r_tau.  A violation beyond the two-cell slack means the
    solver or the distance field is wrong, not the theorem.
    """
    grid = trace.grid
    tau = trace.config.tau
    n = grid.n
    rep = SuiteReport("volume_distance")

    c_phi, C_phi = a.c_phi, a.C_phi
    theta1 = (2.0 ** ((n - 1.0) / n) * _unit_ball_volume(n - 1)
              * (c_phi / (8.0 * C_phi)) ** (n - 1))
    cc = 10.0 ** n * _unit_ball_volume(n) / (c_phi * theta1)
    dc = solve_density_system(profile, constant_C1(c_phi, C_phi, n),
                              c_phi * n / 2.0, tau)
    r0 = dc.r_tau

    worst = (0, 0.0)
    for k in range(1, trace.steps + 1):
        E = trace.masks[k]
        F = trace.masks[k - 1]
        diff = E ^ F
        lhs = float(np.count_nonzero(diff)) * grid.cell_volume
        if lhs > worst[1]:
            worst = (k, lhs)
        if not F.any():
            continue
        perim = perimeter_phi(a, F, grid)
        if diff.any():
            d = np.abs(signed_distance(grid, F)[diff])
            fsum = float(np.sum(profile.eval(d / tau))) * grid.cell_volume
        else:
            fsum = 0.0
        slack = 2.0 * grid.h * perim
        for p in p_grid:
            if p * tau <= r0:
                lead = cc * p * tau
            elif tau <= r0:
                lead = cc * p ** n * tau
            else:
                lead = cc * p ** n * tau ** n / r0 ** (n - 1)
            rhs = lead * perim + fsum / profile.eval(p) + slack
            rep.add(k, "volume_distance_p%g" % p, lhs, rhs, lhs <= rhs)

    # negative control: with every right-hand term gutted, the biggest
    # step must register as a violation
    k, lhs = worst
    if lhs > 0.0:
        rep.add(k, "negative_control_gutted_bound", lhs, 0.0, lhs > 0.0)
    return rep


def _hull_mask(mask, grid):
    pts = np.stack([m[mask] for m in grid.meshgrid()], axis=-1)
    if len(pts) <= grid.n + 1:
        return np.asarray(mask, dtype=bool)
    try:
        hull = ConvexHull(pts)
    except Exception:
        return np.asarray(mask, dtype=bool)
    tri = Delaunay(pts[hull.vertices])
    allpts = np.stack([m.ravel() for m in grid.meshgrid()], axis=-1)
    return (tri.find_simplex(allpts) >= 0).reshape(grid.cells)


def mean_convex_suite(trace, a, alpha=None, convex_init=True):
    """Unforced convex starts must nest and lose perimeter every step.

    Convexity of the evolving set itself is only guaranteed for
    concave speed laws, so that deficit is checked just when
    alpha <= 1 and the initial set was convex.
    """
    grid = trace.grid
    rep = SuiteReport("mean_convex")
    move_k, move = 1, 0.0
    for k in range(1, trace.steps + 1):
        d = inclusion_deficit(grid, trace.masks[k], trace.masks[k - 1])
        rep.add(k, "nesting_deficit", d, 0.0, d == 0.0)
        s = sym_diff_volume(grid, trace.masks[k], trace.masks[k - 1])
        if s > move:
            move_k, move = k, s

        p_prev = perimeter_phi(a, trace.masks[k - 1], grid)
        p_cur = perimeter_phi(a, trace.masks[k], grid)
        ratio = p_cur / p_prev if p_prev > 0 else 0.0
        rep.add(k, "perimeter_ratio", ratio, 1.0 + 1e-3,
                ratio <= 1.0 + 1e-3)

        if convex_init and alpha is not None and alpha <= 1.0:
            if trace.masks[k].any():
                hull = _hull_mask(trace.masks[k], grid)
                extra = inclusion_deficit(grid, hull, trace.masks[k])
                rel = extra / max(volume(grid, trace.masks[k]), 1e-300)
                rep.add(k, "convexity_deficit", rel, 0.01, rel <= 0.01)

    # negative control: a genuinely moving step read backwards cannot
    # nest
    if move > 0.0:
        d_rev = inclusion_deficit(grid, trace.masks[move_k - 1],
                                  trace.masks[move_k])
        rep.add(move_k, "negative_control_reversed", d_rev, 0.0,
                d_rev > 0.0)
    return rep


def _upsample(mask, factor):
    out = mask
    for ax in range(mask.ndim):
        out = np.repeat(out, factor, axis=ax)
    return out


def refinement_convergence(traces):
    """Halving tau and h must shrink the disagreement geometrically.

    Traces are ordered coarse to fine with tau and h both halving; at
    three interior times the symmetric differences across consecutive
    levels must decay with ratio at most 0.75.
    """
    if len(traces) < 3:
        raise ValueError("need at least three refinement levels")
    for c, f in zip(traces, traces[1:]):
        if not math.isclose(c.config.tau, 2.0 * f.config.tau):
            raise ValueError("tau must halve between levels")
        if any(2 * cc != ff for cc, ff in zip(c.grid.cells, f.grid.cells)):
            raise ValueError("grid cells must double between levels")
        if c.grid.extents != f.grid.extents:
            raise ValueError("levels must share the physical box")
    rep = SuiteReport("refinement")

    fine = traces[-1].grid
    T = traces[0].config.horizon
    for frac, t in (("T/4", T / 4.0), ("T/2", T / 2.0),
                    ("3T/4", 3.0 * T / 4.0)):
        diffs = []
        for lc in range(len(traces) - 1):
            d = _level_gap(traces[lc], traces[lc + 1], t, fine)
            diffs.append(d)
        for j in range(1, len(diffs)):
            if diffs[j - 1] == 0.0:
                ratio = 0.0
            else:
                ratio = diffs[j] / diffs[j - 1]
            rep.add(j, "cauchy_ratio_" + frac, ratio, 0.75, ratio <= 0.75)

    # negative control: the reversed family must fail the same test
    t = T / 2.0
    d01 = _level_gap(traces[0], traces[1], t, fine)
    d12 = _level_gap(traces[1], traces[2], t, fine)
    if d12 > 0.0:
        rev_ratio = d01 / d12
        rep.add(0, "negative_control_reversed", rev_ratio, 0.75,
                rev_ratio > 0.75)
    return rep


def _level_gap(tc, tf, t, fine_grid):
    kc = min(int(np.floor(t / tc.config.tau + 1e-12)), tc.steps)
    kf = min(int(np.floor(t / tf.config.tau + 1e-12)), tf.steps)
    fc = fine_grid.cells[0] // tc.grid.cells[0]
    ff = fine_grid.cells[0] // tf.grid.cells[0]
    mc = _upsample(tc.masks[kc], fc)
    mf = _upsample(tf.masks[kf], ff)
    return float(np.count_nonzero(mc ^ mf)) * fine_grid.cell_volume


def discrete_holder_suite(traces, profile, alpha, C4=None):
    """Pairwise set drift against the two-term rate bound.

    |E_m1 d E_m2| <= C4 p (m2-m1) tau + C2 / f(p) with
    p = (t2 - t1)^{-1/(1+alpha)}; C4 is calibrated on the first trace
    (the coarsest) when not given, and the frozen value must then hold
    on every other trace.
    """
    rep = SuiteReport("discrete_holder")
    calibrated = C4
    for ti, trace in enumerate(traces):
        grid = trace.grid
        tau = trace.config.tau
        C2 = trace.energies[0]            # p0; forcing-free traces
        K = trace.steps
        if calibrated is None:
            need = 0.0
            for m1 in range(K):
                for m2 in range(m1 + 1, K + 1):
                    s = (m2 - m1) * tau
                    p = s ** (-1.0 / (1.0 + alpha))
                    lhs = sym_diff_volume(grid, trace.masks[m1],
                                          trace.masks[m2])
                    rest = lhs - C2 / profile.eval(p)
                    if rest > 0.0:
                        need = max(need, rest / (p * s))
            calibrated = need
            rep.add(0, "C4_calibrated", calibrated, float("inf"),
                    math.isfinite(calibrated))
            continue
        worst = 0.0
        for m1 in range(K):
            for m2 in range(m1 + 1, K + 1):
                s = (m2 - m1) * tau
                p = s ** (-1.0 / (1.0 + alpha))
                lhs = sym_diff_volume(grid, trace.masks[m1],
                                      trace.masks[m2])
                rhs = calibrated * p * s + C2 / profile.eval(p)
                if rhs > 0:
                    worst = max(worst, lhs / rhs)
        rep.add(ti, "holder_bound_ratio", worst, 1.0 + 1e-9,
                worst <= 1.0 + 1e-9)
    return rep


def write_report(reports, path):
    """Concatenate suite records as JSON lines."""
    with open(path, "w") as fh:
        for rep in reports:
            for line in rep.json_lines():
                fh.write(line + "\n")
