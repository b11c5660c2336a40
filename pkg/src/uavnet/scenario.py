"""Static world description: workspace box, ground obstacles and user devices.

Obstacles are extruded footprints (cylinders and axis-aligned rectangles)
with an individual height. All predicates act on horizontal 2-D points;
altitude gating (a UAV above an obstacle's height may fly over it) is the
caller's business.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_OBSTACLE_HEIGHT = 120.0


@dataclass(frozen=True)
class Workspace:
    """Feasible flight box ``[0, x_max] x [0, y_max] x [h_min, h_max]``."""

    x_max: float = 500.0
    y_max: float = 500.0
    h_min: float = 100.0
    h_max: float = 150.0

    def __post_init__(self):
        if not (self.x_max > 0 and self.y_max > 0):
            raise ValueError("workspace footprint must have positive extent")
        if not (0 < self.h_min < self.h_max):
            raise ValueError("need 0 < h_min < h_max")

    @property
    def lower(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.h_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.h_max])

    def contains_footprint(self, p) -> bool:
        x, y = float(p[0]), float(p[1])
        return 0.0 <= x <= self.x_max and 0.0 <= y <= self.y_max


@dataclass(frozen=True)
class CylindricalObstacle:
    center: tuple
    radius: float
    height: float = DEFAULT_OBSTACLE_HEIGHT
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ValueError("obstacle center must be a 2-D point")
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if not self.height > 0:
            raise ValueError("obstacle height must be positive")


@dataclass(frozen=True)
class RectangularObstacle:
    """Axis-aligned box; ``half_extents`` are center-to-face distances."""

    center: tuple
    half_extents: tuple
    height: float = DEFAULT_OBSTACLE_HEIGHT
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_extents", tuple(float(c) for c in self.half_extents))
        if len(self.center) != 2 or len(self.half_extents) != 2:
            raise ValueError("rectangle center and half extents must be 2-D")
        if not all(h > 0 for h in self.half_extents):
            raise ValueError("rectangle half extents must be positive")
        if not self.height > 0:
            raise ValueError("obstacle height must be positive")


Obstacle = CylindricalObstacle | RectangularObstacle


@dataclass(frozen=True)
class UserDevice:
    """Single-antenna ground user.

    ``urgency`` is in 1/(bit/s) and ``target_rate`` in bit/s.
    ``hosting_obstacle`` names the obstacle whose footprint contains the
    user, or is ``None``.
    """

    position: tuple
    urgency: float = 1e-6
    target_rate: float = 2e6
    hosting_obstacle: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position[:2]))
        if not self.urgency > 0:
            raise ValueError("urgency must be positive")
        if not self.target_rate > 0:
            raise ValueError("target rate must be positive")


def contains_cyl(p, o: CylindricalObstacle) -> bool:
    """Strict interior test; the boundary circle counts as outside."""
    dx = float(p[0]) - o.center[0]
    dy = float(p[1]) - o.center[1]
    return bool(np.hypot(dx, dy) < o.radius)


def contains_rect(p, o: RectangularObstacle) -> bool:
    """Strict per-axis membership; faces and corners count as outside."""
    return bool(
        abs(float(p[0]) - o.center[0]) < o.half_extents[0]
        and abs(float(p[1]) - o.center[1]) < o.half_extents[1]
    )


def contains(p, o: Obstacle) -> bool:
    if isinstance(o, CylindricalObstacle):
        return contains_cyl(p, o)
    return contains_rect(p, o)


def clearance_cyl(p, o: CylindricalObstacle) -> float:
    """Signed intrusion depth ``radius - distance``: positive inside, negative outside."""
    return float(o.radius - np.hypot(float(p[0]) - o.center[0], float(p[1]) - o.center[1]))


def intrusion_rect(p, o: RectangularObstacle) -> float:
    """Largest per-axis margin ``half_extent - |offset|``.

    Positive for every strictly interior point. For exterior points the value
    carries no physical meaning and callers should gate on
    :func:`contains_rect` first.
    """
    dx = abs(float(p[0]) - o.center[0])
    dy = abs(float(p[1]) - o.center[1])
    return float(max(o.half_extents[0] - dx, o.half_extents[1] - dy))


def exterior_distance_rect(p, o: RectangularObstacle) -> float:
    """Chebyshev distance from an exterior point to the rectangle (0 if inside)."""
    dx = abs(float(p[0]) - o.center[0]) - o.half_extents[0]
    dy = abs(float(p[1]) - o.center[1]) - o.half_extents[1]
    return float(max(dx, dy, 0.0))


def workspace_violation(q, w: Workspace) -> float:
    """Euclidean distance from ``q`` to the closed flight box (0 inside)."""
    q = np.asarray(q, dtype=float)
    excess = np.maximum(w.lower - q, 0.0) + np.maximum(q - w.upper, 0.0)
    # hypot rescales internally, so tiny excesses do not underflow to zero
    return float(math.hypot(*excess))


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace = field(default_factory=Workspace)
    cylinders: tuple = ()
    rectangles: tuple = ()
    users: tuple = ()

    def __post_init__(self):
        names = []
        cyl = []
        for i, o in enumerate(self.cylinders):
            if not o.name:
                o = CylindricalObstacle(o.center, o.radius, o.height, f"cyl{i}")
            cyl.append(o)
        rect = []
        for j, o in enumerate(self.rectangles):
            if not o.name:
                o = RectangularObstacle(o.center, o.half_extents, o.height, f"rect{j}")
            rect.append(o)
        for o in cyl + rect:
            if o.name in names:
                raise ValueError(f"duplicate obstacle name {o.name!r}")
            names.append(o.name)
        object.__setattr__(self, "cylinders", tuple(cyl))
        object.__setattr__(self, "rectangles", tuple(rect))
        users = []
        for u in self.users:
            if not self.workspace.contains_footprint(u.position):
                raise ValueError(f"user at {u.position} lies outside the workspace")
            host = hosting_obstacle(u.position, self.obstacles)
            users.append(UserDevice(u.position, u.urgency, u.target_rate, host))
        object.__setattr__(self, "users", tuple(users))

    @property
    def obstacles(self) -> tuple:
        return tuple(self.cylinders) + tuple(self.rectangles)

    def obstacle(self, name: str) -> Obstacle:
        for o in self.obstacles:
            if o.name == name:
                return o
        raise KeyError(name)

    @property
    def user_positions(self) -> np.ndarray:
        """(K, 3) ground positions with zero altitude."""
        if not self.users:
            return np.zeros((0, 3))
        xy = np.array([u.position for u in self.users], dtype=float)
        return np.column_stack([xy, np.zeros(len(xy))])

    def with_users(self, users: Sequence[UserDevice]) -> "Scenario":
        return Scenario(self.workspace, self.cylinders, self.rectangles, tuple(users))


def hosting_obstacle(p, obstacles: Sequence[Obstacle]) -> Optional[str]:
    """Name of the first obstacle whose footprint strictly contains ``p``."""
    for o in obstacles:
        if contains(p, o):
            return o.name
    return None
