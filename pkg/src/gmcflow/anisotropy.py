"""Anisotropies: surface tensions, Wulff shapes, anisotropic perimeter.

An anisotropy is an even, convex, positively 1-homogeneous function
phi with norm-equivalence bounds c_phi |xi| <= phi(xi) <= C_phi |xi|.
Its dual phi° enters the perimeter as the integrand over interface
normals, and the unit phi-ball W_1 = {phi < 1} is the isoperimetric
(Wulff) shape of that perimeter.
"""

import numpy as np

from .grid import signed_distance, volume

_SWEEP = 4096        # unit directions for the equivalence-constant sweep
_TABLE = 8192        # boundary samples backing the planar support table


def _unit_directions(n, count):
    if n == 2:
        t = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    # Fibonacci sphere; deterministic and near-uniform
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    t = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([r * np.cos(t), r * np.sin(t), z], axis=-1)


class WulffSpec:
    """A phi-ball: center point and phi-radius."""

    def __init__(self, center, radius):
        self.center = tuple(float(c) for c in center)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("Wulff radius must be positive")


class Anisotropy:
    """Immutable surface tension with cached equivalence constants.

    Three kinds: "euclidean"; "scaled_lp" with exponent p in [1, inf]
    and positive axis weights; "smoothed_polytope" with stored
    directions d_i and smoothing eps > 0, where
    phi(xi) = (sum_i |d_i . xi|^(1/eps))^eps, a C^1 approximation of
    max_i |d_i . xi|.

    >>> a = Anisotropy.euclidean(2)
    >>> a.phi([3.0, 4.0])
    5.0
    """

    def __init__(self, kind, n, p=None, weights=None, directions=None,
                 eps=None):
        self.kind = kind
        self.n = int(n)
        self.p = p
        self.weights = weights
        self.directions = directions
        self.eps = eps
        self._table = None
        if kind == "euclidean":
            self.c_phi = 1.0
            self.C_phi = 1.0
            self.wulff_volume_unit = (np.pi if self.n == 2
                                      else 4.0 * np.pi / 3.0)
        else:
            if kind == "smoothed_polytope" and self._table is None:
                self._build_table()
            dirs = _unit_directions(self.n, _SWEEP)
            dual = self.phi_dual(dirs)
            # widen a hair so random directions cannot slip past the sweep
            self.c_phi = float(dual.min()) * (1.0 - 1e-4)
            self.C_phi = float(dual.max()) * (1.0 + 1e-4)
            prim = self.phi(dirs)
            if self.n == 2:
                # |W_1| = (1/2) integral of phi(theta)^-2
                self.wulff_volume_unit = float(
                    0.5 * np.sum(prim ** -2.0) * (2.0 * np.pi / _SWEEP))
            else:
                self.wulff_volume_unit = float(
                    np.sum(prim ** -3.0) / 3.0 * (4.0 * np.pi / _SWEEP))

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def euclidean(cls, n):
        return cls("euclidean", n)

    @classmethod
    def scaled_lp(cls, n, p, weights=None):
        p = float(p)
        if not (p >= 1.0):
            raise ValueError("exponent must lie in [1, inf]")
        if weights is None:
            weights = np.ones(n)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise ValueError("need one positive weight per axis")
        return cls("scaled_lp", n, p=p, weights=weights)

    @classmethod
    def smoothed_polytope(cls, directions, eps):
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        n = directions.shape[1]
        if n != 2:
            raise NotImplementedError(
                "smoothed polytopes are implemented in the plane")
        if not (0 < eps <= 0.5):
            raise ValueError("smoothing eps must lie in (0, 1/2]")
        if np.any(np.linalg.norm(directions, axis=1) == 0):
            raise ValueError("zero direction")
        return cls("smoothed_polytope", n, directions=directions,
                   eps=float(eps))

    # ------------------------------------------------------------------
    # evaluation

    def phi(self, xi):
        """phi(xi), vectorized over the last axis."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.n:
            raise ValueError("vector dimension mismatch")
        if self.kind == "euclidean":
            out = np.sqrt(np.sum(xi * xi, axis=-1))
        elif self.kind == "scaled_lp":
            a = np.abs(xi) * self.weights
            if np.isinf(self.p):
                out = a.max(axis=-1)
            elif self.p == 1.0:
                out = a.sum(axis=-1)
            else:
                amax = a.max(axis=-1, keepdims=True)
                safe = np.where(amax > 0, amax, 1.0)
                out = (np.sum((a / safe) ** self.p, axis=-1)
                       ** (1.0 / self.p)) * amax[..., 0]
        else:
            a = np.abs(xi @ self.directions.T)
            m = 1.0 / self.eps
            amax = a.max(axis=-1, keepdims=True)
            safe = np.where(amax > 0, amax, 1.0)
            # factor out the max so the m-th powers cannot overflow
            out = (np.sum((a / safe) ** m, axis=-1)
                   ** (1.0 / m)) * amax[..., 0]
        if out.ndim == 0:
            return float(out)
        return out

    def phi_dual(self, eta):
        """Dual value phi°(eta) = sup {xi . eta : phi(xi) <= 1}."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != self.n:
            raise ValueError("vector dimension mismatch")
        if self.kind == "euclidean":
            out = np.sqrt(np.sum(eta * eta, axis=-1))
        elif self.kind == "scaled_lp":
            a = np.abs(eta) / self.weights
            if np.isinf(self.p):
                out = a.sum(axis=-1)
            elif self.p == 1.0:
                out = a.max(axis=-1)
            else:
                q = self.p / (self.p - 1.0)
                amax = a.max(axis=-1, keepdims=True)
                safe = np.where(amax > 0, amax, 1.0)
                out = (np.sum((a / safe) ** q, axis=-1)
                       ** (1.0 / q)) * amax[..., 0]
        else:
            out = self._dual_from_table(eta)
        if out.ndim == 0:
            return float(out)
        return out

    def _build_table(self):
        # boundary points of {phi = 1}, for support maximization
        t = np.linspace(0.0, 2.0 * np.pi, _TABLE, endpoint=False)
        u = np.stack([np.cos(t), np.sin(t)], axis=-1)
        self._table = u / self.phi(u)[:, None]

    def _dual_from_table(self, eta):
        if self._table is None:
            self._build_table()
        flat = eta.reshape(-1, 2)
        best = np.empty(flat.shape[0])
        for lo in range(0, flat.shape[0], 2048):   # bound the matmul temp
            best[lo:lo + 2048] = (flat[lo:lo + 2048] @ self._table.T
                                  ).max(axis=1)
        out = best.reshape(eta.shape[:-1])
        if flat.shape[0] <= 4:
            # scalar-ish query: polish the argmax to tolerance
            scores = flat @ self._table.T
            arg = scores.argmax(axis=1)
            for i in range(flat.shape[0]):
                out.flat[i] = self._refine_support(flat[i], arg[i], best[i])
        return out

    def _refine_support(self, eta, j, coarse):
        step = 2.0 * np.pi / _TABLE
        t0 = j * step
        lo, hi = t0 - step, t0 + step

        def val(t):
            u = np.array([np.cos(t), np.sin(t)])
            return float(eta @ u) / self.phi(u)

        trace = []
        for _ in range(80):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            v1, v2 = val(m1), val(m2)
            trace.append((m1, v1, m2, v2))
            if v1 < v2:
                lo = m1
            else:
                hi = m2
        refined = val(0.5 * (lo + hi))
        if refined < coarse - 1e-9 * max(1.0, abs(coarse)):
            raise ArithmeticError(
                "support maximization failed to converge; last iterates %r"
                % trace[-5:])
        return max(refined, coarse)

    def __repr__(self):
        return "Anisotropy(%s, n=%d)" % (self.kind, self.n)

    @property
    def isoperimetric_constant(self):
        """c such that P_phi(E) >= c |E|^((n-1)/n) for all finite E."""
        return self.n * self.wulff_volume_unit ** (1.0 / self.n)

    # ------------------------------------------------------------------
    # solver support

    def project_unit_ball(self, z):
        """Map dual vectors into {phi <= 1}.

        Exact projection where a closed form exists (euclidean;
        axis-weighted boxes), radial rescale otherwise.  Either way the
        result is feasible, so duality-gap certificates remain valid.
        """
        z = np.asarray(z, dtype=float)
        if self.kind == "euclidean":
            nrm = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
            return z / np.maximum(nrm, 1.0)
        if self.kind == "scaled_lp" and np.isinf(self.p):
            # the ball is the box |xi_i| <= 1/w_i
            lim = 1.0 / self.weights
            return np.clip(z, -lim, lim)
        val = self.phi(z)
        val = np.asarray(val)[..., None]
        return z / np.maximum(val, 1.0)


def wulff_mask(a, spec, grid):
    """Rasterize the Wulff shape W_r(x) = {phi(. - x) < r}.

    The shape must sit strictly inside the box with a margin of at
    least 3 cells; tiny shapes may rasterize to nothing, which is fine.
    """
    mesh = grid.meshgrid()
    rel = np.stack([mesh[i] - spec.center[i] for i in range(grid.n)],
                   axis=-1)
    mask = a.phi(rel) < spec.radius
    if mask.any():
        belt = np.zeros_like(mask)
        sl = tuple(slice(3, c - 3) for c in grid.cells)
        belt[sl] = True
        if np.any(mask & ~belt):
            raise ValueError("Wulff shape reaches the 3-cell border belt; "
                             "domain too small")
    return mask


def _vertex_gradient(u, h):
    """Gradient at cell vertices by averaging forward differences.

    The field is extended past the border with its edge values, so a
    constant field (full or empty box) has no gradient anywhere.
    """
    n = u.ndim
    up = np.pad(u, 1, mode="edge")
    comps = []
    for k in range(n):
        d = (np.diff(up, axis=k)) / h
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


def relaxed_indicator(grid, mask, width=None):
    """Linear ramp through the interface, 1 inside, 0 outside.

    The ramp spans signed distances [-width, width]; default width 2h.
    """
    if width is None:
        width = 2.0 * grid.h
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros(grid.cells)
    if mask.all():
        return np.ones(grid.cells)
    sd = signed_distance(grid, mask)
    return np.clip(0.5 - sd / (2.0 * width), 0.0, 1.0)


def perimeter_phi(a, u, grid):
    """Discrete anisotropic perimeter of a mask or relaxed field.

    Computes the anisotropic total variation h^n sum phi°(grad u) with
    the gradient taken at cell vertices (each vertex averages the
    forward differences of its adjacent cells; Neumann extension at the
    box border).  Binary masks are first relaxed to a linear ramp of
    half-width 2h so the staircase does not inflate the measure; by
    coarea the value approximates P_phi of the level sets.
    """
    u = np.asarray(u)
    if u.dtype == bool:
        u = relaxed_indicator(grid, u)
    else:
        if u.min() < -1e-9 or u.max() > 1.0 + 1e-9:
            raise ValueError("relaxed field must take values in [0, 1]")
    g = _vertex_gradient(np.asarray(u, dtype=float), grid.h)
    return float(np.sum(a.phi_dual(g)) * grid.cell_volume)
