import numpy as np
import pytest

from pslgen.errors import ConstantInput
from pslgen.raster import dilate, erode, grayscale, morph, otsu_threshold, resize_nearest


def otsu_oracle(values):
    """Exhaustive 256-threshold intra-class-variance scan in exact
    rational arithmetic on the bin scale (ties broken by the lowest
    threshold)."""
    from fractions import Fraction

    v = np.asarray(values, dtype=float).ravel()
    hist, edges = np.histogram(v, bins=256, range=(v.min(), v.max()))
    counts = [int(c) for c in hist]
    vals = [2 * k + 1 for k in range(256)]
    best_var, best_k = None, None
    for k in range(256):
        var = Fraction(0)
        for cs, xs in ((counts[: k + 1], vals[: k + 1]), (counts[k + 1 :], vals[k + 1 :])):
            n = sum(cs)
            if n > 0:
                mu = Fraction(sum(c * x for c, x in zip(cs, xs)), n)
                var += sum(c * (Fraction(x) - mu) ** 2 for c, x in zip(cs, xs))
        if best_var is None or var < best_var:
            best_var, best_k = var, k
    return float(0.5 * (edges[best_k] + edges[best_k + 1]))


class TestOtsu:
    def test_two_level_split(self):
        rng = np.random.default_rng(0)
        v = np.concatenate([np.full(500, 0.1), np.full(500, 0.9)])
        rng.shuffle(v)
        thr = otsu_threshold(v)
        assert 0.1 < thr < 0.9
        assert thr == otsu_oracle(v)

    def test_constant_raises(self):
        with pytest.raises(ConstantInput):
            otsu_threshold(np.full(100, 0.42))

    def test_matches_oracle_on_random_histograms(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            kind = rng.integers(3)
            n = int(rng.integers(50, 500))
            if kind == 0:
                v = rng.uniform(0, 1, n)
            elif kind == 1:
                v = np.concatenate(
                    [rng.normal(0.3, 0.05, n), rng.normal(0.8, 0.1, n // 2)]
                )
            else:
                v = rng.exponential(0.2, n)
            assert otsu_threshold(v) == otsu_oracle(v)

    def test_affine_invariance_within_bin(self):
        rng = np.random.default_rng(2)
        v = rng.uniform(0, 1, 400)
        thr = otsu_threshold(v)
        a, b = 3.5, -1.25
        thr2 = otsu_threshold(a * v + b)
        bin_width = a * np.ptp(v) / 256
        assert abs(thr2 - (a * thr + b)) <= bin_width + 1e-12


class TestMorphology:
    def test_erode_empty_stays_empty(self):
        assert not erode(np.zeros((6, 6), dtype=np.uint8)).any()

    def test_dilate_single_pixel(self):
        m = np.zeros((5, 5), dtype=np.uint8)
        m[2, 2] = 1
        out = dilate(m, 1)
        expect = np.zeros_like(m)
        expect[1:4, 1:4] = 1
        assert np.array_equal(out, expect)

    def test_erode_block_shrinks_to_interior(self):
        m = np.zeros((14, 14), dtype=np.uint8)
        m[2:12, 2:12] = 1  # 10x10 block
        out = erode(m, 1)
        expect = np.zeros_like(m)
        expect[3:11, 3:11] = 1  # 8x8 interior
        assert np.array_equal(out, expect)

    def test_border_erosion(self):
        m = np.ones((6, 6), dtype=np.uint8)
        out = erode(m, 1)
        expect = np.zeros_like(m)
        expect[1:5, 1:5] = 1
        assert np.array_equal(out, expect)

    def test_sandwich_property(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            m = (rng.uniform(0, 1, (10, 12)) < 0.4).astype(np.uint8)
            r = int(rng.integers(1, 3))
            er = erode(m, r)
            dl = dilate(m, r)
            assert np.all(er <= m)
            assert np.all(m <= dl)

    def test_duality_on_interior(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = (rng.uniform(0, 1, (12, 12)) < 0.5).astype(np.uint8)
            r = 1
            er = erode(m, r)
            dual = 1 - dilate(1 - m, r)
            assert np.array_equal(er[r:-r, r:-r], dual[r:-r, r:-r])

    def test_morph_dispatch(self):
        m = np.zeros((4, 4), dtype=np.uint8)
        m[1:3, 1:3] = 1
        assert np.array_equal(morph(m, "erode", 1), erode(m, 1))
        assert np.array_equal(morph(m, "dilate", 1), dilate(m, 1))
        with pytest.raises(ValueError):
            morph(m, "open", 1)


def test_grayscale_is_channel_mean():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 1, (4, 5, 3))
    assert np.allclose(grayscale(img), img.mean(axis=2))


def test_resize_nearest_preserves_binarity():
    rng = np.random.default_rng(6)
    m = (rng.uniform(0, 1, (9, 13)) < 0.5).astype(np.uint8)
    out = resize_nearest(m, 18, 26)
    assert set(np.unique(out)) <= {0, 1}
    assert np.array_equal(resize_nearest(m, 9, 13), m)
