import math

import numpy as np
import pytest

from soswall.errors import ConfigError, CriticalPointError, DegenerateShapeError, EmptyGeometryError
from soswall.wulff import (
    SurfaceTension,
    corner_distances,
    dilate,
    enclosed_area,
    fit_radius,
    opening_boundary,
    polygon_area,
    predicted_ensemble,
    refinement_defect,
    side_overlaps,
    symmetry_report,
    tension_by_name,
    wulff_body,
)


@pytest.fixture(scope="module")
def disk_body():
    return wulff_body(SurfaceTension.constant(), 512)


def _disk_opening(body, r):
    """Opening of a disk of radius r (the area-1 disk has radius 1 / sqrt(pi))."""
    return opening_boundary(dilate(body, r * math.sqrt(math.pi)))


def test_l1_tension_gives_the_unit_square():
    body = wulff_body(SurfaceTension.l1(), 8)
    assert body.area == pytest.approx(1.0)
    lo_x, hi_x, lo_y, hi_y = body.extents
    assert (lo_x, hi_x, lo_y, hi_y) == pytest.approx((-0.5, 0.5, -0.5, 0.5))


def test_constant_tension_body(disk_body):
    assert disk_body.area == pytest.approx(1.0, abs=1e-9)
    assert disk_body.is_convex()
    assert disk_body.is_centrally_symmetric()
    np.testing.assert_allclose(disk_body.centroid, [0.0, 0.0], atol=1e-12)
    assert disk_body.width == pytest.approx(2.0 / math.sqrt(math.pi), rel=1e-4)


def test_wulff_body_rejects_few_directions():
    with pytest.raises(ConfigError):
        wulff_body(SurfaceTension.constant(), 4)


def test_dilate(disk_body):
    half = dilate(disk_body, 0.5)
    assert half.area == pytest.approx(0.25)
    assert half.dilation == 0.5
    assert dilate(half, 0.5).area == pytest.approx(dilate(disk_body, 0.25).area)
    for r in (0.0, 1.5):
        with pytest.raises(ConfigError):
            dilate(disk_body, r)


@pytest.mark.parametrize("r", [0.1, 0.25])
def test_disk_opening_area(disk_body, r):
    curve = _disk_opening(disk_body, r)
    assert enclosed_area(curve) == pytest.approx(1.0 - (4.0 - math.pi) * r**2, abs=1e-4)
    assert polygon_area(curve[:-1]) > 0
    np.testing.assert_array_equal(curve[0], curve[-1])


def test_disk_opening_touches_every_side(disk_body):
    curve = _disk_opening(disk_body, 0.1)
    overlaps = side_overlaps(curve)
    assert set(overlaps) == {"bottom", "top", "left", "right"}
    for length in overlaps.values():
        assert length >= 0.5
    distances = corner_distances(curve)
    expected = (math.sqrt(2.0) - 1.0) * 0.1
    for distance in distances.values():
        assert distance == pytest.approx(expected, abs=1e-4)


def test_opening_of_a_small_square_is_the_unit_square():
    square = dilate(wulff_body(SurfaceTension.l1(), 8), 0.5)
    curve = opening_boundary(square)
    assert enclosed_area(curve) == pytest.approx(1.0)
    for distance in corner_distances(curve).values():
        assert distance == pytest.approx(0.0, abs=1e-9)


def test_opening_rejects_a_body_that_does_not_fit(disk_body):
    with pytest.raises(ConfigError, match="does not fit"):
        opening_boundary(disk_body)


def test_symmetry_report(disk_body):
    report = symmetry_report(_disk_opening(disk_body, 0.2))
    assert report["quarter_turn"] < 2e-3
    assert report["eighth_turn"] > 0.05


def test_predicted_ensemble_start_index(disk_body):
    above = predicted_ensemble(0.4, 0.3, [0.2, 0.4], SurfaceTension.constant(), body=disk_body)
    below = predicted_ensemble(0.2, 0.3, [0.2, 0.4], SurfaceTension.constant(), body=disk_body)
    assert above.indices == [0, 1]
    assert below.indices == [1, 2]
    assert below.curve(0) is None
    assert below.radius(2) == 0.4
    np.testing.assert_array_equal(above.curve(0), below.curve(1))


def test_predicted_ensemble_is_nested(disk_body):
    limit = predicted_ensemble(0.4, 0.3, [0.2, 0.4], SurfaceTension.constant(), body=disk_body)
    assert limit.is_nested()
    assert enclosed_area(limit.curve(1)) < enclosed_area(limit.curve(0))
    swapped = predicted_ensemble(0.4, 0.3, [0.4, 0.2], SurfaceTension.constant(), body=disk_body)
    assert swapped.is_nested()


def test_predicted_ensemble_at_the_critical_point(disk_body):
    with pytest.raises(CriticalPointError):
        predicted_ensemble(0.3, 0.3, [0.2], SurfaceTension.constant(), body=disk_body)


def test_predicted_ensemble_rejects_repeated_radii(disk_body):
    with pytest.raises(DegenerateShapeError):
        predicted_ensemble(0.4, 0.3, [0.2, 0.2], SurfaceTension.constant(), body=disk_body)
    with pytest.raises(ConfigError):
        predicted_ensemble(0.4, 0.3, [], SurfaceTension.constant(), body=disk_body)
    with pytest.raises(ConfigError):
        predicted_ensemble(0.4, 0.3, [1.0], SurfaceTension.constant(), body=disk_body)


def test_fit_radius_recovers_the_dilation():
    body = wulff_body(SurfaceTension.constant(), 128)
    observed = opening_boundary(dilate(body, 0.3))
    r_hat, residual = fit_radius(observed, SurfaceTension.constant(), body=body)
    assert r_hat == pytest.approx(0.3, abs=1e-3)
    assert residual < 1e-3


def test_fit_radius_needs_a_loop():
    with pytest.raises(EmptyGeometryError):
        fit_radius([], SurfaceTension.constant(), K=16)


def test_numeric_sos_tension():
    tension = SurfaceTension.numeric_sos(1.5)
    theta = np.linspace(0.0, 2 * np.pi, 37)
    values = tension(theta)
    assert np.all(values > 0)
    np.testing.assert_allclose(tension(theta + np.pi / 2), values, rtol=1e-6)
    np.testing.assert_allclose(tension(-theta), values, rtol=1e-6)
    # Cheapest along the axes
    assert values.min() == pytest.approx(float(tension(0.0)), rel=1e-9)


def test_numeric_sos_body_lies_between_disk_and_square():
    body = wulff_body(SurfaceTension.numeric_sos(1.5), 256)
    assert body.is_convex()
    assert body.is_centrally_symmetric(tol=1e-6)
    half_width = body.extents[1]
    assert 0.5 - 1e-9 <= half_width <= 1.0 / math.sqrt(math.pi) + 1e-9


def test_tension_table_must_be_symmetric():
    angles = 2 * np.pi * np.arange(8) / 8
    SurfaceTension.from_table(angles, np.ones(8))
    with pytest.raises(ConfigError, match="symmetries"):
        SurfaceTension.from_table(angles, np.arange(1.0, 9.0))
    with pytest.raises(ConfigError, match="non-positive"):
        SurfaceTension.from_table(angles, -np.ones(8))


def test_tension_by_name():
    assert tension_by_name("l1")(np.pi / 4) == pytest.approx(math.sqrt(2.0))
    assert tension_by_name("constant")(1.0) == 1.0
    with pytest.raises(ConfigError):
        tension_by_name("numeric-sos")
    with pytest.raises(ConfigError):
        tension_by_name("anisotropic")


def test_refinement_defect_shrinks():
    tension = SurfaceTension.constant()
    assert refinement_defect(tension, 64, 1e-3) < refinement_defect(tension, 16, 1e-3)
