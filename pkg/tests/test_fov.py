import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from fovstats.fov import (Ball, Box, CollocationGrid, ConvexPolytope, classify_flags,
                          classify_grid, contains, contains_transformed, fov_from_dict)
from fovstats.gmix import eigendecompose

SQUARE = Box([-1.0, -1.0], [1.0, 1.0])
TRIANGLE = ConvexPolytope([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [1.0, 0.0, 0.0])
IDENTITY = eigendecompose(np.eye(2))


class TestContains:
    def test_box_interior_and_boundary(self):
        assert contains(SQUARE, [0.0, 0.0])
        assert contains(SQUARE, [1.0, 1.0])
        assert not contains(SQUARE, [1.0 + 1e-12, 0.0])

    def test_polytope(self):
        assert not contains(TRIANGLE, [0.6, 0.5])
        assert contains(TRIANGLE, [0.5, 0.5])
        assert contains(TRIANGLE, [0.0, 0.0])

    def test_ball(self):
        ball = Ball([1.0, 0.0], 2.0)
        assert contains(ball, [3.0, 0.0])
        assert not contains(ball, [3.0, 0.1])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            contains(SQUARE, [0.0, 0.0, 0.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            Box([0.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            Ball([0.0], 0.0)
        with pytest.raises(ValueError):
            ConvexPolytope([[1.0, 0.0]], [1.0, 2.0])

    def test_half_line_with_infinite_bound(self):
        half = Box([-np.inf], [0.0])
        assert contains(half, [-1e300])
        assert contains(half, [0.0])
        assert not contains(half, [1e-300])

    def test_translation(self):
        for fov in (SQUARE, TRIANGLE, Ball([0.0, 0.0], 1.0)):
            moved = fov.translated([10.0, -7.0])
            pts = np.random.default_rng(0).uniform(-3, 3, (200, 2))
            np.testing.assert_array_equal(moved.contains_points(pts + [10.0, -7.0]),
                                          fov.contains_points(pts))

    def test_dict_round_trip(self):
        for fov in (SQUARE, TRIANGLE, Ball([0.5, 0.0], 1.5)):
            again = fov_from_dict(fov.to_dict())
            assert type(again) is type(fov)
            assert again.to_dict() == fov.to_dict()

    def test_dict_rejects_unknown_key(self):
        with pytest.raises(ValueError, match="radius"):
            fov_from_dict({"type": "box", "lo": [0], "hi": [1], "radius": 1})

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_complement_consistency(self, x):
        for fov in (SQUARE, TRIANGLE):
            inside = contains(fov, x)
            outside = not fov.contains_points(np.array([x]))[0]
            assert inside != outside


class TestTransformed:
    def test_identity_transform(self):
        for z in ([0.0, 0.0], [0.9, -1.0], [1.5, 0.0]):
            assert contains_transformed(SQUARE, z, IDENTITY, [0.0, 0.0]) == contains(SQUARE, z)

    def test_hand_transform(self):
        box = Box([-3.0, -1.0], [3.0, 1.0])
        basis = eigendecompose(np.diag([4.0, 1.0]))
        assert contains_transformed(box, [1.0, 0.0], basis, [0.0, 0.0])
        assert not contains_transformed(box, [2.0, 0.0], basis, [0.0, 0.0])

    @given(st.integers(0, 2**32 - 1))
    def test_affine_consistency_and_mahalanobis(self, seed):
        rng = np.random.default_rng(seed)
        cov = random_spd(rng, 2, 0.05, 3.0)
        mean = rng.uniform(-1, 1, 2)
        basis = eigendecompose(cov)
        for x in rng.uniform(-3, 3, (20, 2)):
            z = basis.whiten(x, mean)
            back = basis.unwhiten(z, mean)
            assert np.max(np.abs(back - x)) <= 1e-9
            assert contains_transformed(TRIANGLE, z, basis, mean) == contains(TRIANGLE, back)
            maha = np.sqrt((x - mean) @ np.linalg.solve(cov, x - mean))
            assert np.linalg.norm(z) == pytest.approx(maha, abs=1e-9)


class TestGrid:
    def test_axis_formula(self):
        g = CollocationGrid(3.0, 7, 2)
        np.testing.assert_array_equal(g.axis(), [-3, -2, -1, 0, 1, 2, 3])
        assert g.points.shape == (49, 2)

    @given(st.floats(0.1, 10.0), st.integers(2, 15))
    def test_endpoints_exact(self, zeta, n):
        ax = CollocationGrid(zeta, n, 1).axis()
        assert ax[0] == -zeta and ax[-1] == zeta
        assert ax.size == n

    def test_point_count(self):
        assert CollocationGrid(2.0, 5, 3).points.shape == (125, 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            CollocationGrid(0.0, 7, 2)
        with pytest.raises(ValueError):
            CollocationGrid(3.0, 1, 2)


class TestClassify:
    grid = CollocationGrid(3.0, 7, 2)

    def test_covering_fov(self):
        c = classify_grid(Box([-10.0, -10.0], [10.0, 10.0]), self.grid, IDENTITY, [0.0, 0.0])
        assert c.all_same and c.flags.all()

    def test_disjoint_fov(self):
        c = classify_grid(Box([20.0, 20.0], [21.0, 21.0]), self.grid, IDENTITY, [0.0, 0.0])
        assert c.all_same and not c.flags.any()

    def test_half_plane(self):
        half = Box([-np.inf, -np.inf], [0.0, np.inf])
        c = classify_grid(half, self.grid, IDENTITY, [0.0, 0.0])
        assert not c.all_same
        np.testing.assert_array_equal(c.plane_counts, [7, 0])
        assert c.flags.sum() == 28  # columns z1 in {-3, -2, -1, 0}

    def test_flags_counts(self):
        flags = np.zeros((3, 3), dtype=bool)
        flags[0, :] = True
        flags[1, 0] = True
        c = classify_flags(flags)
        # axis 0 planes: row 0 all in, row 1 mixed, row 2 all out
        # axis 1 planes: column 0 in,in,out mixed; columns 1 and 2 in,out,out mixed
        np.testing.assert_array_equal(c.plane_counts, [2, 0])
        assert not c.all_same

    @given(st.integers(0, 2**32 - 1))
    def test_uniform_flags_give_all_same(self, seed):
        rng = np.random.default_rng(seed)
        v = bool(rng.integers(2))
        c = classify_flags(np.full((4, 4, 4), v))
        assert c.all_same
        np.testing.assert_array_equal(c.plane_counts, [4, 4, 4])
