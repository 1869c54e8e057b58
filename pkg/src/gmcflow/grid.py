"""Uniform-grid geometry core.

Fields and masks live on a uniform cell-centered grid described by
GridSpec.  Masks are plain boolean ndarrays, scalar fields are float
ndarrays; this module provides the exact signed distance transform,
set metrics, inscribed balls, and the raster dump formats.
"""

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree


class GridSpec:
    """Uniform cell-centered grid on a box.

    >>> g = GridSpec((32, 32), (-1.0, -1.0), (1.0, 1.0))
    >>> g.n, abs(g.h - 0.0625) < 1e-15
    (2, True)
    """

    def __init__(self, cells, lo, hi):
        cells = tuple(int(c) for c in cells)
        lo = tuple(float(x) for x in lo)
        hi = tuple(float(x) for x in hi)
        n = len(cells)
        if n not in (2, 3):
            raise ValueError("grid dimension must be 2 or 3, got %d" % n)
        if len(lo) != n or len(hi) != n:
            raise ValueError("extents do not match dimension")
        if any(c < 16 for c in cells):
            raise ValueError("need at least 16 cells per axis")
        spacings = [(hi[i] - lo[i]) / cells[i] for i in range(n)]
        h = spacings[0]
        if h <= 0:
            raise ValueError("box extents must be increasing")
        for s in spacings[1:]:
            if abs(s - h) > 1e-12 * h:
                raise ValueError("spacing must be uniform across axes")
        self.n = n
        self.cells = cells
        self.lo = lo
        self.hi = hi
        self.h = h
        # cell centers per axis
        self.axes = tuple(lo[i] + (np.arange(cells[i]) + 0.5) * h
                          for i in range(n))

    @property
    def cell_volume(self):
        return self.h ** self.n

    @property
    def extents(self):
        return tuple(zip(self.lo, self.hi))

    def meshgrid(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def zeros(self):
        return np.zeros(self.cells)

    def __repr__(self):
        return "GridSpec(cells=%r, lo=%r, hi=%r)" % (
            self.cells, self.lo, self.hi)

    def __eq__(self, other):
        return (isinstance(other, GridSpec) and self.cells == other.cells
                and self.lo == other.lo and self.hi == other.hi)


def check_field(grid, u):
    u = np.asarray(u)
    if u.shape != grid.cells:
        raise ValueError("field shape %r does not match grid %r"
                         % (u.shape, grid.cells))
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u


def volume(grid, mask):
    """Measure of a mask in physical units."""
    return float(np.count_nonzero(mask)) * grid.cell_volume


def signed_distance(grid, mask):
    """Exact Euclidean signed distance to the interface of a mask.

    Distance is measured from cell centers to the sub-cell interface,
    taken to lie halfway between opposite-sign neighbor centers (linear
    localization of the jump).  Negative inside, positive outside.
    Empty and full masks have no interface and raise.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.cells:
        raise ValueError("mask shape does not match grid")
    if not mask.any() or mask.all():
        raise ValueError("mask has no boundary")
    h = grid.h
    d_out = ndimage.distance_transform_edt(~mask, sampling=h)
    d_in = ndimage.distance_transform_edt(mask, sampling=h)
    # center-to-center distance overshoots the interface by half a cell
    sd = np.where(mask, -(d_in - 0.5 * h), d_out - 0.5 * h)
    return sd


def sym_diff_volume(grid, a, b):
    """|a Δ b| in physical units."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape or a.shape != grid.cells:
        raise ValueError("masks must share the grid")
    return float(np.count_nonzero(a ^ b)) * grid.cell_volume


def inclusion_deficit(grid, a, b):
    """Volume of a minus b; zero means a is contained in b."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape or a.shape != grid.cells:
        raise ValueError("masks must share the grid")
    return float(np.count_nonzero(a & ~b)) * grid.cell_volume


def _interface_midpoints(grid, mask):
    """Points halfway between opposite-sign neighbor centers, all axes."""
    pts = []
    for ax in range(grid.n):
        flip = np.diff(mask.astype(np.int8), axis=ax) != 0
        idx = np.argwhere(flip)
        if idx.size:
            coords = [grid.axes[d][idx[:, d]].astype(float)
                      for d in range(grid.n)]
            coords[ax] = coords[ax] + 0.5 * grid.h
            pts.append(np.stack(coords, axis=1))
    return np.concatenate(pts, axis=0)


def largest_inscribed_ball(grid, mask):
    """Center and radius of the deepest interior ball.

    The argmax cell of the interior distance field is located first;
    the apex of the distance cone rarely sits on a cell center, so the
    estimate is then refined over sub-cell points around that cell
    against the localized interface.  Keeps the error within one h.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask has no inscribed ball")
    if mask.all():
        # no interface; the ball is limited by the box walls
        center = tuple(0.5 * (self_lo + self_hi)
                       for self_lo, self_hi in zip(grid.lo, grid.hi))
        radius = 0.5 * min(hi - lo for lo, hi in zip(grid.lo, grid.hi))
        return center, radius
    sd = signed_distance(grid, mask)
    idx = np.unravel_index(np.argmax(-sd), sd.shape)
    tree = cKDTree(_interface_midpoints(grid, mask))
    offs = np.linspace(-grid.h, grid.h, 21)
    deltas = np.stack([m.ravel() for m in np.meshgrid(*(offs,) * grid.n,
                                                      indexing="ij")], axis=1)
    base = np.array([grid.axes[i][idx[i]] for i in range(grid.n)], dtype=float)
    cand = base[None, :] + deltas
    # drop refinement points whose cell is outside the set
    cell = np.clip(np.floor((cand - np.asarray(grid.lo)) / grid.h).astype(int),
                   0, np.asarray(grid.cells) - 1)
    inside = mask[tuple(cell.T)]
    cand = cand[inside]
    dist, _ = tree.query(cand)
    j = int(np.argmax(dist))
    return tuple(float(c) for c in cand[j]), float(dist[j])


# ---------------------------------------------------------------------------
# raster dump formats

_DTYPES = {"f64": "<f8", "u8": "u1"}


def write_gmcf(path, array):
    """Write a field or mask in the GMCF1 raster format.

    Header line: GMCF1 <n> <cells per axis...> <f64|u8>
    then the row-major little-endian payload.
    """
    array = np.asarray(array)
    if array.dtype == bool or array.dtype == np.uint8:
        tag, dtype = "u8", _DTYPES["u8"]
    else:
        tag, dtype = "f64", _DTYPES["f64"]
    header = "GMCF1 %d %s %s\n" % (
        array.ndim, " ".join(str(c) for c in array.shape), tag)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def read_gmcf(path):
    """Read a GMCF1 raster; masks come back as bool, fields as float."""
    with open(path, "rb") as fh:
        header = b""
        while not header.endswith(b"\n"):
            c = fh.read(1)
            if not c:
                raise ValueError("truncated GMCF1 header")
            header += c
        parts = header.decode("ascii").split()
        if not parts or parts[0] != "GMCF1":
            raise ValueError("not a GMCF1 file")
        n = int(parts[1])
        cells = tuple(int(c) for c in parts[2:2 + n])
        tag = parts[2 + n]
        if tag not in _DTYPES:
            raise ValueError("unknown GMCF1 dtype %r" % tag)
        payload = fh.read()
    data = np.frombuffer(payload, dtype=_DTYPES[tag]).reshape(cells)
    if tag == "u8":
        return data.astype(bool)
    return data.astype(float)


def write_pgm(path, mask):
    """Dump a 2-d mask as binary PGM (foreground white)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("PGM export is 2-d only")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (mask.shape[1], mask.shape[0]))
        fh.write((mask.astype(np.uint8) * 255).tobytes())
