import itertools

import numpy as np
import pytest
from scipy import ndimage

from skelfont.errors import OutOfBounds
from skelfont.imgcore import grid_from_array
from skelfont.kernels import numba_backend, numpy_backend
from skelfont.skeleton import PatchStats, deletable, patch_stats, ske, thin

from conftest import bar_glyph, rgb_image


# --- independent oracle: literal transcription of the deletion rules ---

def oracle_neighbors(grid, x, y):
    """p2..p9 clockwise from above, zero-padded, transcribed by hand."""
    h, w = grid.shape

    def at(yy, xx):
        if 0 <= yy < h and 0 <= xx < w:
            return int(grid[yy, xx])
        return 0

    return [
        at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
        at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1),
    ]


def oracle_deletable(nb, subpass):
    p2, p3, p4, p5, p6, p7, p8, p9 = nb
    n = sum(nb)
    cyc = nb + [nb[0]]
    p = sum(1 for a, b in zip(cyc, cyc[1:]) if (a, b) == (0, 1))
    if not (2 <= n <= 6 and p == 1):
        return False
    if subpass == "A":
        return p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
    return p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0


def oracle_thin(grid):
    """Reference fixpoint iteration with frozen-snapshot deletion."""
    g = grid.copy()
    while True:
        removed = 0
        for subpass in ("A", "B"):
            snapshot = g.copy()
            for y in range(g.shape[0]):
                for x in range(g.shape[1]):
                    if snapshot[y, x] == 1 and oracle_deletable(
                            oracle_neighbors(snapshot, x, y), subpass):
                        g[y, x] = 0
                        removed += 1
        if removed == 0:
            return g


class TestPatchStats:
    def test_isolated_pixel(self):
        g = grid_from_array(np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0]]))
        st = patch_stats(g, 1, 1)
        assert st.n == 0 and st.p == 0

    def test_horizontal_line_center(self):
        g = grid_from_array(np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]]))
        st = patch_stats(g, 1, 1)
        # cyclic sequence 0,0,1,0,0,0,1,0 has two (0,1) pairs
        assert st.neighbors == (0, 0, 1, 0, 0, 0, 1, 0)
        assert st.n == 2 and st.p == 2

    def test_solid_block_center(self):
        g = grid_from_array(np.ones((3, 3), int))
        st = patch_stats(g, 1, 1)
        assert st.n == 8 and st.p == 0

    def test_zero_padding_at_corner(self):
        g = grid_from_array(np.ones((2, 2), int))
        st = patch_stats(g, 0, 0)
        assert st.n == 3  # only the in-grid neighbors count

    def test_out_of_bounds(self):
        g = grid_from_array(np.ones((2, 2), int))
        with pytest.raises(OutOfBounds):
            patch_stats(g, 2, 0)


class TestDeletable:
    def test_isolated_never_deletable(self):
        st = PatchStats(n=0, p=0, neighbors=(0,) * 8)
        assert not deletable(st, "A") and not deletable(st, "B")

    def test_interior_never_deletable(self):
        st = PatchStats(n=8, p=0, neighbors=(1,) * 8)
        assert not deletable(st, "A") and not deletable(st, "B")

    def test_condition_b_example(self):
        nb = (0, 0, 1, 1, 1, 0, 0, 0)
        st = PatchStats(n=3, p=1, neighbors=nb)
        assert oracle_deletable(list(nb), "A") is True
        assert deletable(st, "A") is True

    def test_all_512_neighborhoods_match_oracle(self):
        for bits in itertools.product((0, 1), repeat=8):
            nb = list(bits)
            n = sum(nb)
            cyc = nb + [nb[0]]
            p = sum(1 for a, b in zip(cyc, cyc[1:]) if (a, b) == (0, 1))
            st = PatchStats(n=n, p=p, neighbors=tuple(nb))
            for subpass in ("A", "B"):
                assert deletable(st, subpass) == oracle_deletable(nb, subpass)


class TestThin:
    def test_empty_grid(self):
        g = grid_from_array(np.zeros((5, 5), int))
        assert thin(g).bits.sum() == 0

    def test_thin_segment_is_fixpoint(self):
        seg = np.zeros((3, 7), int)
        seg[1, 1:6] = 1
        out = thin(grid_from_array(seg))
        assert np.array_equal(out.bits, seg.astype(np.uint8))
        assert np.array_equal(out.bits, oracle_thin(seg.astype(np.uint8)))

    def test_solid_block_thins_to_fixpoint(self):
        block = np.zeros((9, 9), np.uint8)
        block[2:7, 2:7] = 1
        out = thin(grid_from_array(block))
        assert out.bits.sum() > 0
        assert np.all(out.bits <= block)
        assert np.array_equal(thin(out).bits, out.bits)
        assert np.array_equal(out.bits, oracle_thin(block))

    def test_matches_oracle_on_random_grids(self, rng):
        for density in (0.2, 0.5):
            for _ in range(5):
                g = (rng.random((10, 10)) < density).astype(np.uint8)
                assert np.array_equal(thin(grid_from_array(g)).bits, oracle_thin(g))

    def test_subset_and_fixpoint_properties(self, rng):
        for _ in range(25):
            g = (rng.random((16, 16)) < rng.choice([0.2, 0.4, 0.6])).astype(np.uint8)
            out = thin(grid_from_array(g))
            assert np.all(out.bits <= g)
            assert np.array_equal(thin(out).bits, out.bits)

    def test_component_count_never_grows(self, rng):
        eight = np.ones((3, 3), int)
        for density in (0.2, 0.4, 0.6):
            for _ in range(30):
                g = (rng.random((16, 16)) < density).astype(np.uint8)
                out = thin(grid_from_array(g)).bits
                _, before = ndimage.label(g, structure=eight)
                _, after = ndimage.label(out, structure=eight)
                assert after <= before

    def test_determinism(self, rng):
        g = (rng.random((20, 20)) < 0.5).astype(np.uint8)
        a = thin(grid_from_array(g)).bits
        b = thin(grid_from_array(g)).bits
        assert np.array_equal(a, b)


class TestBackendParity:
    def test_subpass_bit_identical_across_backends(self, rng):
        for density in (0.2, 0.4, 0.6):
            for _ in range(40):
                g = (rng.random((16, 16)) < density).astype(np.uint8)
                for cond in (0, 1):
                    a, na = numba_backend.thin_subpass(g, cond)
                    b, nb = numpy_backend.thin_subpass(g, cond)
                    assert na == nb
                    assert np.array_equal(a, b)


class TestSke:
    def test_blank_image_has_empty_skeleton(self):
        img = rgb_image(np.ones((8, 8, 3)))
        assert ske(img, 0.5).bits.sum() == 0

    def test_skeleton_subset_of_ink(self, rng):
        from skelfont.imgcore import binarize, to_gray
        img = rgb_image((rng.random((12, 12, 3)) > 0.5).astype(np.float32))
        mask = ske(img, 0.5)
        ink = binarize(to_gray(img), 0.5)
        assert np.all(mask.bits <= ink.bits)

    def test_thick_bar_thins_to_single_row(self):
        img = bar_glyph(height=9, width=15, bar_rows=(3, 4, 5))
        mask = ske(img, 0.5)
        ink = np.zeros((9, 15), np.uint8)
        ink[3:6, 2:13] = 1
        assert np.array_equal(mask.bits, oracle_thin(ink))
        # one-pixel-wide: the skeleton sits on the bar's middle row only
        assert mask.bits.sum() > 0
        assert np.all(mask.bits[np.arange(9) != 4, :] == 0)
        assert mask.bits[4].max() == 1 and np.all(mask.bits <= ink)
