import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from uavnet.scenario import (CylindricalObstacle, RectangularObstacle, Scenario, UserDevice,
                             Workspace, clearance_cyl, contains_cyl, contains_rect,
                             exterior_distance_rect, hosting_obstacle, intrusion_rect,
                             workspace_violation)

coord = st.floats(-1000, 1000, allow_nan=False)


def test_cylinder_membership_examples():
    o = CylindricalObstacle((0.0, 0.0), 5.0)
    assert contains_cyl((0.0, 0.0), o)
    assert not contains_cyl((3.0, 4.0), o)
    assert not contains_cyl((5.0, 0.0), o)


def test_rectangle_membership_examples():
    o = RectangularObstacle((10.0, 10.0), (2.0, 3.0))
    assert contains_rect((10.0, 10.0), o)
    assert not contains_rect((12.0, 11.0), o)  # on the x face
    assert not contains_rect((13.0, 10.0), o)


def test_clearance_examples():
    o = CylindricalObstacle((1.0, 1.0), 5.0)
    assert clearance_cyl((1.0, 1.0), o) == 5.0
    assert clearance_cyl((6.0, 1.0), o) == 0.0
    assert clearance_cyl((8.0, 1.0), o) == pytest.approx(-2.0)


def test_intrusion_examples():
    o = RectangularObstacle((0.0, 0.0), (2.0, 3.0))
    assert intrusion_rect((0.0, 0.0), o) == 3.0
    assert intrusion_rect((1.0, 0.0), o) == 3.0
    assert intrusion_rect((2.0, 3.0), o) == 0.0


def test_workspace_violation_examples():
    w = Workspace()
    assert workspace_violation((10.0, 10.0, 120.0), w) == 0.0
    assert workspace_violation((-3.0, 0.5 * w.y_max, w.h_min), w) == pytest.approx(3.0)
    assert workspace_violation((-3.0, -4.0, w.h_min), w) == pytest.approx(5.0)


def test_invalid_geometry_rejected():
    with pytest.raises(ValueError):
        Workspace(h_min=150, h_max=100)
    with pytest.raises(ValueError):
        CylindricalObstacle((0, 0), 0.0)
    with pytest.raises(ValueError):
        RectangularObstacle((0, 0), (1.0, -1.0))
    with pytest.raises(ValueError):
        UserDevice((1.0, 1.0), urgency=0.0)
    with pytest.raises(ValueError):
        Scenario(users=(UserDevice((600.0, 10.0)),))


def test_predicates_match_oracle_on_random_points():
    rng = np.random.default_rng(11)
    cyl = CylindricalObstacle((130.0, 370.0), 35.0)
    rect = RectangularObstacle((360.0, 140.0), (45.0, 30.0))
    pts = rng.uniform(0, 500, size=(1000, 2))
    # include exact boundary points to exercise strictness
    pts[:4] = [(165.0, 370.0), (130.0, 335.0), (405.0, 140.0), (360.0, 170.0)]
    for p in pts:
        assert contains_cyl(p, cyl) == oracles.in_cylinder(p, cyl.center, cyl.radius)
        assert contains_rect(p, rect) == oracles.in_rectangle(p, rect.center, rect.half_extents)
        if contains_rect(p, rect):
            assert intrusion_rect(p, rect) == pytest.approx(
                oracles.rect_intrusion(p, rect.center, rect.half_extents))


@given(coord, coord)
def test_clearance_sign_matches_membership(x, y):
    o = CylindricalObstacle((3.0, -2.0), 7.5)
    assert (clearance_cyl((x, y), o) > 0) == contains_cyl((x, y), o)


@given(st.floats(-1.999, 1.999), st.floats(-2.999, 2.999))
def test_interior_rectangle_points_have_positive_intrusion(dx, dy):
    o = RectangularObstacle((5.0, 5.0), (2.0, 3.0))
    assert intrusion_rect((5.0 + dx, 5.0 + dy), o) > 0


@given(st.tuples(coord, coord, coord), st.tuples(coord, coord, coord))
@settings(max_examples=200)
def test_workspace_violation_is_box_distance_and_lipschitz(q1, q2):
    w = Workspace()
    d1 = workspace_violation(q1, w)
    assert d1 == pytest.approx(oracles.box_distance(q1, w.lower, w.upper), abs=1e-9)
    inside = all(lo <= x <= hi for x, lo, hi in zip(q1, w.lower, w.upper))
    assert (d1 == 0.0) == inside
    d2 = workspace_violation(q2, w)
    assert abs(d1 - d2) <= math.dist(q1, q2) + 1e-9


def test_exterior_distance_is_chebyshev():
    o = RectangularObstacle((0.0, 0.0), (2.0, 3.0))
    assert exterior_distance_rect((5.0, 0.0), o) == 3.0
    assert exterior_distance_rect((5.0, 7.0), o) == 4.0
    assert exterior_distance_rect((0.0, 0.0), o) == 0.0


def test_hosting_obstacle_consistent_with_membership():
    cyl = CylindricalObstacle((100.0, 100.0), 20.0)
    rect = RectangularObstacle((300.0, 300.0), (10.0, 10.0))
    users = [UserDevice((100.0, 105.0)), UserDevice((305.0, 295.0)), UserDevice((10.0, 10.0))]
    sc = Scenario(cylinders=(cyl,), rectangles=(rect,), users=tuple(users))
    assert [u.hosting_obstacle for u in sc.users] == ["cyl0", "rect0", None]
    for u in sc.users:
        assert u.hosting_obstacle == hosting_obstacle(u.position, sc.obstacles)
    assert sc.obstacle("rect0").half_extents == (10.0, 10.0)
    assert sc.user_positions.shape == (3, 3)
    assert np.all(sc.user_positions[:, 2] == 0)
