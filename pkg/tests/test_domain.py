import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spindrift.domain import Region, Wristband, unit_disk
from spindrift.errors import (GeometryError, InvalidInputError,
                              UnsupportedOperationError)

TWO_PI = 2 * math.pi


@pytest.fixture
def band():
    return Wristband(period=TWO_PI, half_width=1.0)


@pytest.fixture
def disk():
    return unit_disk()


class TestClassify:
    def test_interior(self, band):
        assert band.classify([0.3, 0.0]) is Region.INTERIOR

    def test_boundary(self, band):
        assert band.classify([5.0, 1.0]) is Region.BOUNDARY

    def test_exterior(self, band):
        assert band.classify([0.0, 1.5]) is Region.EXTERIOR

    def test_nonfinite_rejected(self, band):
        with pytest.raises(InvalidInputError):
            band.classify([np.nan, 0.0])
        with pytest.raises(InvalidInputError):
            band.classify([np.inf, 0.0])

    def test_disk(self, disk):
        assert disk.classify([0.0, 0.0]) is Region.INTERIOR
        assert disk.classify([1.0, 0.0]) is Region.BOUNDARY
        assert disk.classify([1.1, 0.0]) is Region.EXTERIOR


class TestInwardNormal:
    def test_top_wall(self, band):
        assert np.array_equal(band.inward_normal([1.0, 1.0]), [0.0, -1.0])

    def test_bottom_wall(self, band):
        assert np.array_equal(band.inward_normal([1.0, -1.0]), [0.0, 1.0])

    def test_disk(self, disk):
        np.testing.assert_allclose(disk.inward_normal([1.0, 0.0]), [-1.0, 0.0])

    def test_off_boundary_raises(self, band):
        with pytest.raises(GeometryError):
            band.inward_normal([0.0, 0.5])

    def test_unit_length_and_points_inward(self, band, disk):
        rng = np.random.default_rng(0)
        for domain in (band, disk):
            pts = domain.boundary_points(64)
            for x in pts:
                n = domain.inward_normal(x)
                assert math.isclose(np.linalg.norm(n), 1.0, abs_tol=1e-12)
                assert domain.classify(x + 1e-6 * n) is Region.INTERIOR
        del rng


class TestProjection:
    def test_clamp(self, band):
        xp, push = band.project_to_closure([0.2, 1.3])
        np.testing.assert_allclose(xp, [0.2, 1.0])
        assert math.isclose(push, 0.3)

    def test_identity_inside(self, band):
        xp, push = band.project_to_closure([0.2, 0.5])
        assert np.array_equal(xp, [0.2, 0.5])
        assert push == 0.0

    def test_disk_radial(self, disk):
        xp, push = disk.project_to_closure([1.5, 0.0])
        np.testing.assert_allclose(xp, [1.0, 0.0], atol=1e-12)
        assert math.isclose(push, 0.5, abs_tol=1e-12)

    @given(st.floats(-50, 50), st.floats(-5, 5))
    def test_idempotent(self, x, y):
        band = Wristband()
        xp, _ = band.project_to_closure([x, y])
        xp2, push2 = band.project_to_closure(xp)
        assert push2 == 0.0
        assert np.array_equal(xp, xp2)

    @given(st.floats(0, TWO_PI), st.floats(1e-9, 0.5))
    def test_disk_idempotent(self, ang, excess):
        disk = unit_disk()
        x = (1.0 + excess) * np.array([math.cos(ang), math.sin(ang)])
        xp, push = disk.project_to_closure(x)
        assert push > 0
        _, push2 = disk.project_to_closure(xp)
        assert push2 <= 1e-12


class TestWrap:
    def test_shift_down(self, band):
        np.testing.assert_allclose(band.wrap([7.0, 0.2]), [7.0 - TWO_PI, 0.2])

    def test_identity(self, band):
        assert np.array_equal(band.wrap([0.0, 0.2]), [0.0, 0.2])

    def test_negative(self, band):
        np.testing.assert_allclose(band.wrap([-0.5, 0.2]), [TWO_PI - 0.5, 0.2])

    def test_unsupported_on_disk(self, disk):
        with pytest.raises(UnsupportedOperationError):
            disk.wrap([0.5, 0.5])

    @given(st.floats(-100, 100), st.floats(-1, 1))
    def test_idempotent(self, x, y):
        band = Wristband()
        once = band.wrap([x, y])
        assert 0.0 <= once[0] < band.period
        assert np.array_equal(band.wrap(once), once)

    @given(st.floats(-20, 20), st.floats(-20, 20), st.integers(-3, 3))
    def test_periodic_distance_translation_invariant(self, xa, xb, k):
        band = Wristband()
        a, b = [xa, 0.3], [xb, -0.4]
        shifted = [xa + k * band.period, 0.3]
        assert math.isclose(band.distance(a, b), band.distance(shifted, b),
                            rel_tol=0, abs_tol=1e-9)


class TestBoundarySampling:
    def test_wristband_points_on_walls(self, band):
        pts = band.boundary_points(33)
        assert len(pts) == 33
        assert np.all(np.abs(np.abs(pts[:, 1]) - band.half_width) < 1e-15)

    def test_disk_points_on_circle(self, disk):
        pts = disk.boundary_points(17)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_smooth_phi_projection_converges_from_far_out():
    disk = unit_disk()
    xp, push = disk.project_to_closure([0.0, 3.0])
    np.testing.assert_allclose(xp, [0.0, 1.0], atol=1e-10)
    assert math.isclose(push, 2.0, abs_tol=1e-10)
