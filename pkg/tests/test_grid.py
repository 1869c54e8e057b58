"""Grid geometry: exact signed distance, set metrics, raster formats."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmcflow import GridSpec
from gmcflow.grid import (
    signed_distance,
    sym_diff_volume,
    inclusion_deficit,
    largest_inscribed_ball,
    volume,
    write_gmcf,
    read_gmcf,
    write_pgm,
)

from conftest import square_grid, disk

# up to three axis-aligned rectangles, cell-index coordinates on a 48^2 grid
rect_strategy = st.tuples(
    st.integers(min_value=4, max_value=30),
    st.integers(min_value=4, max_value=30),
    st.integers(min_value=6, max_value=16),
    st.integers(min_value=6, max_value=16),
)
blob_strategy = st.lists(rect_strategy, min_size=1, max_size=3)


def _blob_mask(grid, rects):
    m = np.zeros(grid.cells, dtype=bool)
    for i0, j0, wi, wj in rects:
        m[i0:min(i0 + wi, 44), j0:min(j0 + wj, 44)] = True
    return m


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec((8, 8), (-1.0, -1.0), (1.0, 1.0))  # below 16 cells
    with pytest.raises(ValueError):
        GridSpec((32, 32), (-1.0, -1.0), (1.0, 2.0))  # non-uniform spacing


def test_gridspec_geometry():
    g = square_grid(64)
    assert g.h == pytest.approx(2.0 / 64.0)
    assert g.cell_volume == pytest.approx(g.h ** 2)
    assert g.extents == ((-1.0, 1.0), (-1.0, 1.0))


# ---------------------------------------------------------------- signed distance

def test_half_plane_distance():
    g = square_grid(64)
    X, _ = g.meshgrid()
    mask = X < 0.0
    sd = signed_distance(g, mask)
    # planar interface sits on a cell edge; localization error below h/2
    assert np.max(np.abs(sd - X)) <= 0.5 * g.h + 1e-12


def test_disk_center_distance():
    # odd cell count puts a sample point exactly at the disk center
    g = square_grid(95)
    m = disk(g, (0.0, 0.0), 0.4)
    sd = signed_distance(g, m)
    c = np.unravel_index(np.argmin(np.hypot(*g.meshgrid())), sd.shape)
    assert sd[c] == pytest.approx(-0.4, abs=g.h)


def test_disk_distance_field_away_from_center():
    """Against the analytic |x| - r, skipping the medial-axis neighborhood."""
    g = square_grid(96)
    m = disk(g, (0.0, 0.0), 0.4)
    sd = signed_distance(g, m)
    X, Y = g.meshgrid()
    rr = np.hypot(X, Y)
    sel = rr >= 2.0 * g.h
    assert np.max(np.abs(sd[sel] - (rr[sel] - 0.4))) <= g.h


def test_no_boundary_errors():
    g = square_grid(32)
    with pytest.raises(ValueError):
        signed_distance(g, np.zeros(g.cells, dtype=bool))
    with pytest.raises(ValueError):
        signed_distance(g, np.ones(g.cells, dtype=bool))


def test_inputs_left_unmodified():
    g = square_grid(48)
    m = disk(g, (0.1, 0.0), 0.3)
    keep = m.copy()
    signed_distance(g, m)
    assert np.array_equal(m, keep)


@given(rects=blob_strategy)
@settings(max_examples=60, deadline=None)
def test_distance_lipschitz_between_neighbors(rects):
    """Discrete 1-Lipschitz: neighbor cells differ by at most h (+localization)."""
    g = square_grid(48)
    m = _blob_mask(g, rects)
    sd = signed_distance(g, m)
    assert np.max(np.abs(np.diff(sd, axis=0))) <= g.h + 1e-12
    assert np.max(np.abs(np.diff(sd, axis=1))) <= g.h + 1e-12
    # sign agrees with the mask
    assert np.all(sd[m] <= 0.0)
    assert np.all(sd[~m] >= 0.0)


def test_distance_lipschitz_random_pairs():
    g = square_grid(64)
    m = disk(g, (0.05, -0.1), 0.35)
    sd = signed_distance(g, m)
    X, Y = g.meshgrid()
    rng = np.random.default_rng(5)
    ii = rng.integers(0, 64, size=(10000, 2))
    jj = rng.integers(0, 64, size=(10000, 2))
    dx = np.hypot(X[ii[:, 0], ii[:, 1]] - X[jj[:, 0], jj[:, 1]],
                  Y[ii[:, 0], ii[:, 1]] - Y[jj[:, 0], jj[:, 1]])
    ds = np.abs(sd[ii[:, 0], ii[:, 1]] - sd[jj[:, 0], jj[:, 1]])
    assert np.all(ds <= dx + g.h + 1e-12)


# ---------------------------------------------------------------- set metrics

def test_sym_diff_basic(grid64):
    a = disk(grid64, (0.0, 0.0), 0.3)
    assert sym_diff_volume(grid64, a, a) == 0.0
    b = disk(grid64, (0.0, 0.0), 0.45)
    # nested: difference of volumes, exact in cell arithmetic
    assert sym_diff_volume(grid64, a, b) == volume(grid64, b) - volume(grid64, a)


def test_sym_diff_disjoint_disks(grid128):
    a = disk(grid128, (-0.45, 0.0), 0.3)
    b = disk(grid128, (0.45, 0.0), 0.3)
    assert sym_diff_volume(grid128, a, b) == pytest.approx(2 * np.pi * 0.09, abs=0.01)


def test_sym_diff_is_a_metric(grid64):
    a = disk(grid64, (-0.2, 0.0), 0.3)
    b = disk(grid64, (0.2, 0.1), 0.25)
    c = disk(grid64, (0.0, -0.15), 0.35)
    assert sym_diff_volume(grid64, a, b) == sym_diff_volume(grid64, b, a)
    assert (sym_diff_volume(grid64, a, c)
            <= sym_diff_volume(grid64, a, b) + sym_diff_volume(grid64, b, c) + 1e-15)


def test_inclusion_deficit(grid64):
    inner = disk(grid64, (0.0, 0.0), 0.3)
    outer = disk(grid64, (0.0, 0.0), 0.5)
    assert inclusion_deficit(grid64, inner, outer) == 0.0
    assert inclusion_deficit(grid64, inner, inner) == 0.0
    want = volume(grid64, outer) - volume(grid64, outer & inner)
    assert inclusion_deficit(grid64, outer, inner) == pytest.approx(want, rel=1e-12)
    assert inclusion_deficit(grid64, outer, inner) > 0.0


# ---------------------------------------------------------------- inscribed ball

def test_inscribed_ball_disk(grid128):
    m = disk(grid128, (0.0, 0.0), 0.5)
    center, radius = largest_inscribed_ball(grid128, m)
    assert radius == pytest.approx(0.5, abs=grid128.h)
    assert abs(center[0]) <= grid128.h and abs(center[1]) <= grid128.h


def test_inscribed_ball_annulus(grid128):
    outer = disk(grid128, (0.0, 0.0), 0.5)
    inner = disk(grid128, (0.0, 0.0), 0.2)
    ring = outer & ~inner
    _, radius = largest_inscribed_ball(grid128, ring)
    assert radius == pytest.approx(0.15, abs=grid128.h)


def test_inscribed_ball_single_cell(grid64):
    m = np.zeros(grid64.cells, dtype=bool)
    m[30, 31] = True
    _, radius = largest_inscribed_ball(grid64, m)
    assert 0.0 < radius <= grid64.h


def test_inscribed_ball_empty_errors(grid64):
    with pytest.raises(ValueError):
        largest_inscribed_ball(grid64, np.zeros(grid64.cells, dtype=bool))


# ---------------------------------------------------------------- raster formats

class TestRasterFormats:
    def test_mask_roundtrip(self, tmp_path, grid64):
        m = disk(grid64, (0.1, -0.2), 0.3)
        p = tmp_path / "m.gmcf"
        write_gmcf(p, m)
        assert np.array_equal(read_gmcf(p), m)

    def test_field_roundtrip_bitwise(self, tmp_path, grid64):
        f = np.sin(np.arange(64 * 64, dtype=float)).reshape(64, 64)
        p = tmp_path / "f.gmcf"
        write_gmcf(p, f)
        back = read_gmcf(p)
        assert back.dtype == np.float64
        assert np.array_equal(back.view(np.uint64), f.view(np.uint64))

    def test_header_layout(self, tmp_path, grid64):
        m = disk(grid64, (0.0, 0.0), 0.3)
        p = tmp_path / "m.gmcf"
        write_gmcf(p, m)
        first = p.read_bytes().split(b"\n", 1)[0]
        assert first == b"GMCF1 2 64 64 u8"

    def test_truncation_detected(self, tmp_path, grid64):
        m = disk(grid64, (0.0, 0.0), 0.3)
        p = tmp_path / "m.gmcf"
        write_gmcf(p, m)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(ValueError):
            read_gmcf(p)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "x.gmcf"
        p.write_bytes(b"NOTGMCF 2 4 4 u8\n" + bytes(16))
        with pytest.raises(ValueError):
            read_gmcf(p)

    def test_pgm_header(self, tmp_path, grid64):
        m = disk(grid64, (0.0, 0.0), 0.3)
        p = tmp_path / "m.pgm"
        write_pgm(p, m)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n64 64\n255\n")
        assert len(raw) == len(b"P5\n64 64\n255\n") + 64 * 64
