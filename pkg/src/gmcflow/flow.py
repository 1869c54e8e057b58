"""Flat flows: iterated minimizing-movement steps with interface tracking.

Each step hands back a level function whose zero crossing is the new
interface.  The next step needs the signed distance to that interface,
and the accuracy of this refresh is what decides whether per-step
errors accumulate: distances measured to a sampled point cloud
overshoot by up to half the sample spacing squared over the distance,
always in the direction of under-movement, and the flow drifts.  The
refresh here therefore measures exact distances to the linearly
interpolated crossing itself (segments in the plane, triangles in
space), which leaves nothing that compounds.
"""

import json

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .grid import (GridSpec, signed_distance, volume, sym_diff_volume,
                   write_gmcf)
from .anisotropy import perimeter_phi, wulff_mask, WulffSpec
from .step import StepConfig, step_fields, _check_margin

CKPT_MAGIC = b"GMCFCKPT1\n"


class FlowConfig:
    """A full run: time step, horizon, initial set, per-step knobs."""

    def __init__(self, tau, horizon, init, step=None, checkpoint_every=0):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        # horizon below tau is allowed: the trace then holds only the
        # initial state
        self.tau = float(tau)
        self.horizon = float(horizon)
        self.init = dict(init)
        self.step = step if step is not None else StepConfig(tau=tau)
        if self.step.tau != self.tau:
            raise ValueError("step config disagrees about tau")
        self.checkpoint_every = int(checkpoint_every)

    def echo(self):
        s = self.step
        return {"tau": self.tau, "horizon": self.horizon, "init": self.init,
                "pd_max_iters": s.pd_max_iters, "pd_gap_tol": s.pd_gap_tol,
                "s_star": s.s_star, "selection": s.selection,
                "checkpoint_every": self.checkpoint_every}


class FlowTrace:
    """Recorded run: masks, per-step reports, interface radii, status."""

    def __init__(self, grid, config):
        self.grid = grid
        self.config = config
        self.masks = []
        self.reports = []      # entry 0 is None (initial state)
        self.inscribed = []    # refined inscribed-ball radius per entry
        self.energies = []     # perimeter + forcing volume term per entry
        self.status = "running"
        self.sd_state = None   # internal: distance field behind the last mask

    @property
    def steps(self):
        return len(self.masks) - 1

    def times(self):
        return [k * self.config.tau for k in range(len(self.masks))]

    def series_rows(self):
        """Rows for series.csv: k,t,volume,perimeter_phi,sym_diff_prev,
        energy,gap,status."""
        rows = []
        for k in range(len(self.masks)):
            rep = self.reports[k]
            if rep is None:
                rows.append((k, 0.0, volume(self.grid, self.masks[k]),
                             self.energies[k], 0.0, self.energies[k],
                             0.0, "init"))
            else:
                rows.append((k, k * self.config.tau, rep.volume,
                             rep.perimeter, rep.sym_diff_prev,
                             self.energies[k], rep.gap, rep.status))
        return rows


# ---------------------------------------------------------------------------
# initial sets

def _point_in_polygon(px, py, verts):
    inside = np.zeros(px.shape, dtype=bool)
    vx = [v[0] for v in verts]
    vy = [v[1] for v in verts]
    m = len(verts)
    j = m - 1
    for i in range(m):
        cross = ((vy[i] > py) != (vy[j] > py))
        xint = (vx[j] - vx[i]) * (py - vy[i]) / (vy[j] - vy[i] + 0.0) + vx[i]
        inside ^= cross & (px < xint)
        j = i
    return inside


def make_initial(spec, grid, a=None):
    """Rasterize an initial-set description.

    Shapes: ball, wulff, rectangle, square, ellipse, annulus, polygon,
    union (of sub-specs).  Coordinates are physical.
    """
    kind = spec["shape"]
    mesh = grid.meshgrid()
    if kind == "ball":
        c = spec["center"]
        rel = sum((mesh[i] - c[i]) ** 2 for i in range(grid.n))
        return rel < spec["radius"] ** 2
    if kind == "wulff":
        if a is None:
            raise ValueError("wulff initial set needs the anisotropy")
        return wulff_mask(a, WulffSpec(spec["center"], spec["radius"]), grid)
    if kind == "rectangle":
        lo, hi = spec["lo"], spec["hi"]
        m = np.ones(grid.cells, dtype=bool)
        for i in range(grid.n):
            m &= (mesh[i] > lo[i]) & (mesh[i] < hi[i])
        return m
    if kind == "square":
        c, s = spec["center"], spec["side"]
        return make_initial({"shape": "rectangle",
                             "lo": [ci - s / 2.0 for ci in c],
                             "hi": [ci + s / 2.0 for ci in c]}, grid)
    if kind == "ellipse":
        c, ax = spec["center"], spec["semi_axes"]
        rel = sum(((mesh[i] - c[i]) / ax[i]) ** 2 for i in range(grid.n))
        return rel < 1.0
    if kind == "annulus":
        c = spec["center"]
        r = np.sqrt(sum((mesh[i] - c[i]) ** 2 for i in range(grid.n)))
        return (r > spec["r_in"]) & (r < spec["r_out"])
    if kind == "polygon":
        if grid.n != 2:
            raise ValueError("polygon initial sets are planar")
        return _point_in_polygon(mesh[0], mesh[1], spec["vertices"])
    if kind == "union":
        m = np.zeros(grid.cells, dtype=bool)
        for sub in spec["parts"]:
            m |= make_initial(sub, grid, a)
        return m
    raise ValueError("unknown initial shape %r" % kind)


def _initial_sd(spec, grid, mask):
    # closed-form distance where the shape allows it, else the raster
    # transform; either way the run loop re-measures against the
    # interpolated crossing before the first step
    mesh = grid.meshgrid()
    kind = spec["shape"]
    if kind == "ball":
        c = spec["center"]
        d = np.sqrt(sum((mesh[i] - c[i]) ** 2 for i in range(grid.n)))
        return d - spec["radius"]
    if kind == "annulus":
        c = spec["center"]
        d = np.sqrt(sum((mesh[i] - c[i]) ** 2 for i in range(grid.n)))
        return np.maximum(spec["r_in"] - d, d - spec["r_out"])
    return signed_distance(grid, mask)


# ---------------------------------------------------------------------------
# interface extraction and exact distance refresh

def _interface_2d(w, grid):
    origin = np.array([ax[0] for ax in grid.axes])
    P0, P1 = [], []
    for poly in measure.find_contours(np.asarray(w, dtype=float), 0.0):
        pts = origin + poly * grid.h
        P0.append(pts[:-1])
        P1.append(pts[1:])
    if not P0:
        return None
    return np.concatenate(P0), np.concatenate(P1)


def _interface_3d(w, grid):
    try:
        verts, faces, _, _ = measure.marching_cubes(
            np.asarray(w, dtype=float), 0.0,
            spacing=(grid.h,) * 3)
    except (ValueError, RuntimeError):
        return None
    origin = np.array([ax[0] for ax in grid.axes])
    return verts + origin, faces


def _segment_distance(pts, P0, P1, k=32, chunk=65536):
    """Min distance from each point to a soup of segments.

    Candidate segments come from a nearest-neighbor query over the
    segment endpoints; past the near field the endpoint distance itself
    is already accurate to a negligible fraction of a cell.
    """
    V = np.concatenate([P0, P1])
    nseg = len(P0)
    segid = np.concatenate([np.arange(nseg), np.arange(nseg)])
    tree = cKDTree(V)
    k = min(k, len(V))
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk]
        _, idx = tree.query(p, k=k)
        if k == 1:
            idx = idx.reshape(-1, 1)
        cand = segid[idx]
        a = P0[cand]
        b = P1[cand]
        ab = b - a
        denom = np.maximum((ab * ab).sum(-1), 1e-300)
        t = np.clip(((p[:, None, :] - a) * ab).sum(-1) / denom, 0.0, 1.0)
        close = a + t[..., None] * ab
        d = np.sqrt(((p[:, None, :] - close) ** 2).sum(-1))
        out[lo:lo + chunk] = d.min(axis=1)
    return out


def _triangle_distance(pts, verts, faces, k=40, near=None, chunk=8192):
    """Min distance to a triangle soup.

    Exact point-triangle distances are evaluated on candidates gathered
    through a vertex nearest-neighbor query, but only for points within
    `near` of some vertex; farther points keep the vertex distance.
    """
    tree = cKDTree(verts)
    k = min(k, len(verts))
    # vertex -> incident faces, padded with repeats
    deg = 12
    v2f = np.zeros((len(verts), deg), dtype=np.int64)
    count = np.zeros(len(verts), dtype=np.int64)
    for fi, f in enumerate(faces):
        for v in f:
            c = count[v]
            if c < deg:
                v2f[v, c] = fi
                count[v] = c + 1
    filled = count > 0
    v2f[~filled] = 0
    for v in np.nonzero(filled)[0]:
        v2f[v, count[v]:] = v2f[v, 0]

    d1, _ = tree.query(pts, k=1)
    out = np.array(d1, dtype=float)
    if near is None:
        near = np.inf
    sel = np.nonzero(d1 <= near)[0]
    A = verts[faces[:, 0]]
    B = verts[faces[:, 1]]
    C = verts[faces[:, 2]]
    for lo in range(0, len(sel), chunk):
        ii = sel[lo:lo + chunk]
        p = pts[ii]
        _, idx = tree.query(p, k=k)
        if k == 1:
            idx = idx.reshape(-1, 1)
        cand = v2f[idx].reshape(len(p), -1)
        a, b, c = A[cand], B[cand], C[cand]
        pp = p[:, None, :]
        dmin = _point_tri(pp, a, b, c)
        out[ii] = dmin.min(axis=1)
    return out


def _point_tri(p, a, b, c):
    # distance to the plane if the foot lies inside, else to the edges
    def seg(p, s0, s1):
        d = s1 - s0
        den = np.maximum((d * d).sum(-1), 1e-300)
        t = np.clip(((p - s0) * d).sum(-1) / den, 0.0, 1.0)
        close = s0 + t[..., None] * d
        return np.sqrt(((p - close) ** 2).sum(-1))

    nrm = np.cross(b - a, c - a)
    nn = np.maximum((nrm * nrm).sum(-1), 1e-300)
    tpl = ((p - a) * nrm).sum(-1) / nn
    foot = p - tpl[..., None] * nrm
    # barycentric sign tests against each edge
    inside = np.ones(tpl.shape, dtype=bool)
    for (u, v) in ((a, b), (b, c), (c, a)):
        edge_n = np.cross(nrm, v - u)
        inside &= ((foot - u) * edge_n).sum(-1) >= 0.0
    dpl = np.sqrt(((p - foot) ** 2).sum(-1))
    de = np.minimum(np.minimum(seg(p, a, b), seg(p, b, c)), seg(p, c, a))
    return np.where(inside, np.minimum(dpl, de), de)


def _refresh_distance(w, mask, grid):
    """Signed distance to the zero crossing of w, exact to the linear
    interpolant; also returns the refined inscribed radius."""
    mesh = grid.meshgrid()
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if grid.n == 2:
        iface = _interface_2d(w, grid)
        if iface is None:
            return None, 0.0
        P0, P1 = iface
        d = _segment_distance(pts, P0, P1).reshape(grid.cells)
    else:
        iface = _interface_3d(w, grid)
        if iface is None:
            return None, 0.0
        verts, faces = iface
        d = _triangle_distance(pts, verts, faces,
                               near=4.0 * grid.h).reshape(grid.cells)
    sd = np.where(mask, -d, d)

    # micro-refine the deepest cell to take the inscribed radius off
    # the cell-center lattice
    idx = np.unravel_index(np.argmax(-sd), sd.shape)
    x0 = [grid.axes[i][idx[i]] for i in range(grid.n)]
    micro = [x + np.linspace(-grid.h, grid.h, 21) for x in x0]
    mm = np.meshgrid(*micro, indexing="ij")
    mpts = np.stack([m.ravel() for m in mm], axis=-1)
    if grid.n == 2:
        r = float(_segment_distance(mpts, P0, P1).max())
    else:
        r = float(_triangle_distance(mpts, verts, faces,
                                     near=np.inf).max())
    return sd, r


# ---------------------------------------------------------------------------
# the run loop

def run_flow(cfg, profile, forcing, a, grid, resume=None):
    """Iterate steps until the horizon or extinction.

    Returns a FlowTrace holding every mask, report, and refined
    inscribed radius.  Passing a restored trace as `resume` continues
    it with identical arithmetic.
    """
    n_steps = int(np.floor(cfg.horizon / cfg.tau + 1e-12))
    if resume is not None:
        trace = resume
        if trace.status != "running" or trace.sd_state is None:
            return trace
        mask = trace.masks[-1].copy()
        sd = trace.sd_state.copy()
        k0 = trace.steps
    else:
        mask = make_initial(cfg.init, grid, a)
        _check_margin(grid, mask)
        trace = FlowTrace(grid, cfg)
        sd = _initial_sd(cfg.init, grid, mask)
        sd_ref, r0 = _refresh_distance(sd, mask, grid)
        if sd_ref is not None:
            sd = sd_ref
        else:
            r0 = float(-sd.min())
        trace.masks.append(mask.copy())
        trace.reports.append(None)
        trace.inscribed.append(r0)
        trace.energies.append(_free_energy(mask, forcing, a, grid))
        trace.sd_state = sd.copy()
        k0 = 0

    for k in range(k0 + 1, n_steps + 1):
        try:
            new_mask, w, rep = step_fields(profile, forcing, a, sd,
                                           cfg.step, grid, mask)
        except Exception as exc:
            trace.status = "error"
            trace.error = "step %d: %s" % (k, exc)
            break
        if rep.status == "extinct":
            trace.masks.append(new_mask.copy())
            trace.reports.append(rep)
            trace.inscribed.append(0.0)
            trace.energies.append(0.0)
            trace.status = "extinct"
            trace.sd_state = None
            break
        sd_new, r_ins = _refresh_distance(w, new_mask, grid)
        if sd_new is None:
            rep.status = "extinct"
            trace.masks.append(np.zeros_like(new_mask))
            trace.reports.append(rep)
            trace.inscribed.append(0.0)
            trace.energies.append(0.0)
            trace.status = "extinct"
            trace.sd_state = None
            break
        mask = new_mask
        sd = sd_new
        trace.masks.append(mask.copy())
        trace.reports.append(rep)
        trace.inscribed.append(r_ins)
        trace.energies.append(_free_energy(mask, forcing, a, grid))
        trace.sd_state = sd.copy()
    return trace


def _free_energy(mask, forcing, a, grid):
    # perimeter plus the forcing volume term; the quantity whose drops
    # bound the dissipation
    e = perimeter_phi(a, mask, grid)
    if forcing is not None and not forcing.is_zero:
        e += float(np.sum(forcing.sample(grid)[mask])) * grid.cell_volume
    return e


# ---------------------------------------------------------------------------
# modulus of continuity and Hölder diagnostics

def modulus_table(trace):
    """Max symmetric-difference volume at dyadic time gaps.

    Rows (dt, max |E(t) Δ E(s)| over pairs with |t-s| = dt) for
    dt = tau, 2 tau, 4 tau, ...
    """
    K = trace.steps
    if K < 8:
        raise ValueError("trace too short for a modulus table")
    tau = trace.config.tau
    grid = trace.grid
    rows = []
    gap = 1
    while gap <= K:
        worst = 0.0
        for k in range(0, K - gap + 1):
            worst = max(worst, sym_diff_volume(grid, trace.masks[k],
                                               trace.masks[k + gap]))
        rows.append((gap * tau, worst))
        gap *= 2
    return rows


def holder_fit(table, alpha):
    """Log-log slope of the modulus table.

    Returns (exponent, C) with |E(t)ΔE(s)| <= C |t-s|^exponent as the
    fitted envelope; NaN exponent when the table has no spread.
    """
    pts = [(dt, v) for dt, v in table if v > 0]
    if len(pts) < 4:
        return float("nan"), float("nan")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    if np.ptp(y) < 1e-12:
        return float("nan"), float(np.exp(y[0]))
    slope, icept = np.polyfit(x, y, 1)
    return float(slope), float(np.exp(icept))


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint(trace, path):
    """Serialize a trace; the round trip is bit-identical."""
    meta = {
        "config": trace.config.echo(),
        "cells": list(trace.grid.cells),
        "lo": list(trace.grid.lo),
        "hi": list(trace.grid.hi),
        "status": trace.status,
        "steps": trace.steps,
        "inscribed": trace.inscribed,
        "energies": trace.energies,
        "has_sd": trace.sd_state is not None,
        "reports": [None if r is None else
                    {"energy": r.energy, "energy_prev": r.energy_prev,
                     "gap": r.gap, "iters": r.iters,
                     "perimeter": r.perimeter, "volume": r.volume,
                     "sym_diff_prev": r.sym_diff_prev,
                     "max_dist": r.max_dist, "wallclock": r.wallclock,
                     "status": r.status}
                    for r in trace.reports],
    }
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        blob = json.dumps(meta, sort_keys=True).encode("ascii")
        fh.write(b"%d\n" % len(blob))
        fh.write(blob)
        for m in trace.masks:
            fh.write(np.packbits(m).tobytes())
        if trace.sd_state is not None:
            fh.write(np.ascontiguousarray(trace.sd_state,
                                          dtype="<f8").tobytes())


def restore(path):
    """Read back a checkpoint; refuses other versions, detects
    truncation."""
    from .step import StepReport
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError("not a flow checkpoint of this version")
        szline = b""
        while not szline.endswith(b"\n"):
            c = fh.read(1)
            if not c:
                raise ValueError("checkpoint truncated in header")
            szline += c
        blob = fh.read(int(szline))
        if len(blob) != int(szline):
            raise ValueError("checkpoint truncated in metadata")
        meta = json.loads(blob)
        grid = GridSpec(meta["cells"], meta["lo"], meta["hi"])
        c = meta["config"]
        cfg = FlowConfig(c["tau"], c["horizon"], c["init"],
                         StepConfig(c["tau"], c["pd_max_iters"],
                                    c["pd_gap_tol"], c["s_star"],
                                    c["selection"]),
                         c["checkpoint_every"])
        trace = FlowTrace(grid, cfg)
        trace.status = meta["status"]
        trace.inscribed = list(meta["inscribed"])
        trace.energies = list(meta["energies"])
        ncell = int(np.prod(grid.cells))
        nbytes = (ncell + 7) // 8
        for _ in range(meta["steps"] + 1):
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise ValueError("checkpoint truncated in mask data")
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                                 count=ncell)
            trace.masks.append(bits.astype(bool).reshape(grid.cells))
        for r in meta["reports"]:
            trace.reports.append(None if r is None else StepReport(
                r["energy"], r["energy_prev"], r["gap"], r["iters"],
                r["perimeter"], r["volume"], r["sym_diff_prev"],
                r["max_dist"], r["wallclock"], r["status"]))
        if meta["has_sd"]:
            raw = fh.read(ncell * 8)
            if len(raw) != ncell * 8:
                raise ValueError("checkpoint truncated in distance field")
            trace.sd_state = np.frombuffer(raw, dtype="<f8").reshape(
                grid.cells).copy()
    return trace


# ---------------------------------------------------------------------------
# trace directory export

def write_trace(trace, outdir, mask_cadence=None):
    """Write meta, series.csv, mask rasters, and a timing file.

    Everything except timing.csv is a deterministic function of the
    run; wallclock lives only in the timing file.
    """
    import os
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "masks"), exist_ok=True)
    meta = {"config": trace.config.echo(),
            "cells": list(trace.grid.cells),
            "lo": list(trace.grid.lo), "hi": list(trace.grid.hi),
            "status": trace.status, "steps": trace.steps}
    with open(os.path.join(outdir, "meta"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(outdir, "series.csv"), "w") as fh:
        fh.write("k,t,volume,perimeter_phi,sym_diff_prev,energy,gap,status\n")
        for row in trace.series_rows():
            fh.write("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n" % row)
    with open(os.path.join(outdir, "timing.csv"), "w") as fh:
        fh.write("k,wallclock\n")
        for k, rep in enumerate(trace.reports):
            if rep is not None:
                fh.write("%d,%.6f\n" % (k, rep.wallclock))
    cad = mask_cadence
    if cad is None:
        cad = trace.config.checkpoint_every or 1
    for k in range(len(trace.masks)):
        if k % cad == 0 or k == len(trace.masks) - 1:
            write_gmcf(os.path.join(outdir, "masks", "k%06d.gmcf" % k),
                       trace.masks[k])


def read_trace(indir):
    """Load a trace directory back into a FlowTrace.

    The distance field is not part of the directory layout, so the
    result cannot seed `resume`; continuation goes through checkpoint
    files.  Suites need a mask per step, which requires the run to
    have been written at cadence 1.
    """
    import os
    from .grid import read_gmcf
    from .step import StepConfig, StepReport
    with open(os.path.join(indir, "meta")) as fh:
        meta = json.load(fh)
    grid = GridSpec(meta["cells"], meta["lo"], meta["hi"])
    c = meta["config"]
    cfg = FlowConfig(c["tau"], c["horizon"], c["init"],
                     StepConfig(c["tau"], c["pd_max_iters"],
                                c["pd_gap_tol"], c["s_star"],
                                c["selection"]),
                     c["checkpoint_every"])
    trace = FlowTrace(grid, cfg)
    trace.status = meta["status"]

    mask_dir = os.path.join(indir, "masks")
    ks = sorted(int(f[1:7]) for f in os.listdir(mask_dir)
                if f.endswith(".gmcf"))
    if ks != list(range(meta["steps"] + 1)):
        raise ValueError("trace directory holds masks at a cadence above "
                         "1; rerun with output.cadence = 1 to check it")
    for k in ks:
        m = read_gmcf(os.path.join(mask_dir, "k%06d.gmcf" % k))
        if m.dtype != bool:
            raise ValueError("mask raster k%06d is not binary" % k)
        trace.masks.append(m)

    with open(os.path.join(indir, "series.csv")) as fh:
        header = fh.readline().strip()
        if header != "k,t,volume,perimeter_phi,sym_diff_prev,energy,gap,status":
            raise ValueError("unrecognized series.csv header")
        for line in fh:
            f = line.strip().split(",")
            k = int(f[0])
            trace.energies.append(float(f[5]))
            if k == 0:
                trace.reports.append(None)
            else:
                trace.reports.append(StepReport(
                    float("nan"), float("nan"), float(f[6]), 0,
                    float(f[3]), float(f[2]), float(f[4]),
                    float("nan"), 0.0, f[7]))
    if len(trace.energies) != len(trace.masks):
        raise ValueError("series.csv does not cover every stored mask")
    return trace
