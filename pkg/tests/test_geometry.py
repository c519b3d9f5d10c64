import numpy as np
import pytest

from pslgen.errors import DegenerateQuad, EmptyMask, PointAtInfinity
from pslgen.geometry import (
    PriorBox,
    canonical_quad,
    encode_target_quad,
    invert_homography,
    min_area_rect,
    min_area_rect_points,
    points_in_quad,
    project_point,
    quad_area,
    rect_corners,
    solve_homography,
    warp_crop,
    warp_image,
)

UNIT = rect_corners(1.0, 1.0)


def random_quad(rng, scale=10.0):
    """Non-degenerate convex-ish quad: jittered rotated rectangle."""
    while True:
        w = rng.uniform(1.0, scale)
        h = rng.uniform(1.0, scale)
        theta = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        base = (rect_corners(w, h) - (w / 2, h / 2)) @ rot.T + rng.uniform(-20, 20, 2)
        jitter = rng.uniform(-0.15, 0.15, (4, 2)) * (w + h) / 2
        q = base + jitter
        if quad_area(q) > 0.5:
            try:
                return canonical_quad(q)
            except DegenerateQuad:
                continue


class TestHomography:
    def test_identity(self):
        h = solve_homography(UNIT, UNIT)
        assert np.allclose(h, np.eye(3), atol=1e-9)

    def test_pure_translation(self):
        h = solve_homography(UNIT, UNIT + (3.0, 5.0))
        assert abs(h[0, 2] - 3.0) < 1e-9
        assert abs(h[1, 2] - 5.0) < 1e-9

    def test_random_pairs_reproject(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            src = random_quad(rng)
            dst = random_quad(rng)
            h = solve_homography(src, dst)
            for corner, target in zip(src, dst):
                assert np.linalg.norm(project_point(h, corner) - target) < 1e-6

    def test_self_map_is_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            q = random_quad(rng)
            assert np.allclose(solve_homography(q, q), np.eye(3), atol=1e-9)

    def test_degenerate_raises(self):
        collinear = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
        with pytest.raises(DegenerateQuad):
            solve_homography(collinear, UNIT)

    def test_bowtie_raises(self):
        bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
        with pytest.raises(DegenerateQuad):
            canonical_quad(bowtie)


class TestProjectPoint:
    def test_identity(self):
        assert np.allclose(project_point(np.eye(3), (4.0, 7.0)), (4.0, 7.0))

    def test_translation(self):
        h = solve_homography(UNIT, UNIT + (3.0, 5.0))
        assert np.allclose(project_point(h, (0.0, 0.0)), (3.0, 5.0), atol=1e-9)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            h = solve_homography(random_quad(rng), random_quad(rng))
            p = rng.uniform(-5, 5, 2)
            try:
                q = project_point(h, p)
                back = project_point(invert_homography(h), q)
            except PointAtInfinity:
                continue
            assert np.linalg.norm(back - p) < 1e-9 * max(1.0, np.linalg.norm(p))

    def test_point_at_infinity(self):
        h = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
        with pytest.raises(PointAtInfinity):
            project_point(h, (1.0, 0.0))


class TestWarp:
    def test_identity_is_pixel_exact(self):
        rng = np.random.default_rng(6)
        img = rng.uniform(0, 1, (16, 24, 3))
        out = warp_crop(img, np.eye(3), 24, 16)
        assert np.allclose(out, img, atol=1e-12)

    def test_integer_translation_shifts_with_fill(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 1, (10, 12, 3))
        h = np.eye(3)
        h[0, 2] = -2.0  # output x samples source x-2
        out = warp_image(img, h, 12, 10, fill=(0.5, 0.5, 0.5))
        assert np.allclose(out[:, 2:, :], img[:, :-2, :], atol=1e-12)
        assert np.allclose(out[:, :2, :], 0.5, atol=1e-12)

    def test_scaling_constant_image(self):
        img = np.full((16, 16, 3), 0.37)
        h = np.diag([0.5, 0.5, 1.0])  # output 2x zoom samples source at half coords
        out = warp_crop(img, h, 16, 16, fill=(0.37, 0.37, 0.37))
        assert np.allclose(out, 0.37, atol=1e-12)


def sweep_min_area(points, step_deg=0.1):
    """Brute-force angle sweep oracle for the minimum-area rectangle."""
    best = np.inf
    pts = np.asarray(points, dtype=float)
    for deg in np.arange(0.0, 90.0, step_deg):
        t = np.deg2rad(deg)
        rot = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        r = pts @ rot.T
        area = np.ptp(r[:, 0]) * np.ptp(r[:, 1])
        best = min(best, area)
    return best


class TestMinAreaRect:
    def test_axis_aligned_block(self):
        mask = np.zeros((8, 14), dtype=np.uint8)
        mask[2:6, 3:13] = 1  # 10 x 4 block
        rect = min_area_rect(mask)
        assert abs(quad_area(rect) - 27.0) < 1e-9  # 9 x 3 in center coordinates
        xs, ys = rect[:, 0], rect[:, 1]
        assert np.allclose(sorted(set(np.round(xs, 6))), [3.5, 12.5])
        assert np.allclose(sorted(set(np.round(ys, 6))), [2.5, 5.5])

    def test_single_pixel_degenerates(self):
        mask = np.zeros((5, 5), dtype=np.uint8)
        mask[2, 3] = 1
        rect = min_area_rect(mask)
        assert np.allclose(rect, [[3.5, 2.5]] * 4)

    def test_rotated_square_near_sweep_optimum(self):
        size = 41
        mask = np.zeros((size, size), dtype=np.uint8)
        yy, xx = np.mgrid[0:size, 0:size]
        c = size / 2
        mask[(np.abs(xx + 0.5 - c) + np.abs(yy + 0.5 - c)) <= 12] = 1  # 45-degree square
        rect = min_area_rect(mask)
        rows, cols = np.nonzero(mask)
        oracle = sweep_min_area(np.column_stack([cols + 0.5, rows + 0.5]))
        assert quad_area(rect) <= oracle * 1.02 + 1e-9

    def test_containment_and_aabb_bound(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            mask = (rng.uniform(0, 1, (12, 18)) < 0.2).astype(np.uint8)
            if not mask.any():
                continue
            rect = min_area_rect(mask)
            rows, cols = np.nonzero(mask)
            centers = np.column_stack([cols + 0.5, rows + 0.5])
            if quad_area(rect) > 1e-9:
                assert points_in_quad(centers, rect, eps=1e-6).all()
            aabb = (np.ptp(centers[:, 0])) * (np.ptp(centers[:, 1]))
            assert quad_area(rect) <= aabb + 1e-9

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMask):
            min_area_rect(np.zeros((4, 4), dtype=np.uint8))

    def test_collinear_points_degenerate(self):
        rect = min_area_rect_points(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
        assert quad_area(rect) < 1e-9


class TestEncodeTargetQuad:
    def test_box_corners_map_to_half_units(self):
        box = PriorBox(center=(10.0, 20.0), size=(4.0, 2.0), variances=(1.0, 1.0))
        quad = np.array([[8, 19], [12, 19], [12, 21], [8, 21]], dtype=float)
        out = encode_target_quad(quad, box)
        assert np.allclose(np.abs(out), 0.5)

    def test_center_maps_to_zero(self):
        box = PriorBox(center=(5.0, 5.0), size=(3.0, 3.0))
        quad = np.tile([5.0, 5.0], (4, 1))
        assert np.allclose(encode_target_quad(quad, box), 0.0)

    def test_variance_halves_result(self):
        quad = np.array([[8, 19], [12, 19], [12, 21], [8, 21]], dtype=float)
        one = encode_target_quad(quad, PriorBox((10.0, 20.0), (4.0, 2.0), (1.0, 1.0)))
        two = encode_target_quad(quad, PriorBox((10.0, 20.0), (4.0, 2.0), (2.0, 2.0)))
        assert np.allclose(two, one / 2.0)

    def test_translation_covariance(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            quad = random_quad(rng)
            shift = rng.uniform(-10, 10, 2)
            box = PriorBox((3.0, 4.0), (2.0, 5.0), (1.5, 0.5))
            moved = PriorBox((3.0 + shift[0], 4.0 + shift[1]), (2.0, 5.0), (1.5, 0.5))
            assert np.allclose(
                encode_target_quad(quad, box), encode_target_quad(quad + shift, moved)
            )


class TestCanonicalQuad:
    def test_counterclockwise_input_reversed(self):
        ccw = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=float)
        q = canonical_quad(ccw)
        # clockwise in y-down coordinates has positive shoelace sum
        x, y = q[:, 0], q[:, 1]
        assert np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) > 0
        assert np.allclose(q[0], ccw[0])

    def test_starts_nearest_first_annotated_point(self):
        quad = np.array([[2, 0], [2, 2], [0, 2], [0, 0]], dtype=float)
        q = canonical_quad(quad)
        assert np.allclose(q[0], [2, 0])
