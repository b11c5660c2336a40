"""UAV kinematics, rotary-wing propulsion power and battery bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PropulsionConstants:
    """Rotary-wing propulsion model constants.

    ``P0`` is the blade-profile power and ``P1`` the induced hover power.
    ``d0``, ``rho0`` and ``g0`` (drag coefficient, air density, rotor
    solidity) default to common rotary-wing values.
    """

    P0: float = 59.03
    P1: float = 79.07
    U_tip: float = 120.0
    v0: float = 3.6
    d0: float = 0.6
    rho0: float = 1.225
    g0: float = 0.05
    A1: float = 0.5030

    def __post_init__(self):
        for name in ("P0", "P1", "U_tip", "v0", "d0", "rho0", "g0", "A1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"propulsion constant {name} must be positive")


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float = 20.0
    a_max: float = 5.0
    d_min: float = 3.0
    dt: float = 1.0


@dataclass
class UavState:
    position: np.ndarray
    velocity: np.ndarray
    residual_energy: float
    alive: bool = True
    capacity: int = 10
    power_budget: float = 1.0
    array_rows: int = 4
    array_cols: int = 4

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        if self.array_rows < 1 or self.array_cols < 1:
            raise ValueError("antenna array needs at least one element per axis")
        if self.capacity > self.n_antennas:
            raise ValueError("capacity exceeds antenna count; zero-forcing would be infeasible")

    @property
    def n_antennas(self) -> int:
        return self.array_rows * self.array_cols


def _radial_clip(vec: np.ndarray, limit: float) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm > limit:
        return vec * (limit / norm)
    return vec


def step_kinematics(q, v, a_cmd, dt, v_max=20.0, a_max=5.0):
    """Advance one slot under constant acceleration.

    The command is radially rescaled into the ``a_max`` ball, and the new
    velocity into the ``v_max`` ball. Position is not clipped to the
    workspace.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a_cmd, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v)) and np.all(np.isfinite(a))):
        raise ValueError("non-finite kinematic input")
    a = _radial_clip(a, a_max)
    q_next = q + v * dt + 0.5 * a * dt * dt
    v_next = _radial_clip(v + a * dt, v_max)
    return q_next, v_next


def propulsion_power(v, c: PropulsionConstants = PropulsionConstants()) -> float:
    """Propulsion power (W) at velocity ``v`` (vector or speed)."""
    speed = float(np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float))))
    s2 = speed * speed
    parasite = 0.5 * c.d0 * c.rho0 * c.g0 * c.A1 * speed**3
    blade = c.P0 * (1.0 + 3.0 * s2 / c.U_tip**2)
    radicand = 1.0 + s2 * s2 / (4.0 * c.v0**4) - s2 / (2.0 * c.v0**2)
    induced = c.P1 * np.sqrt(max(radicand, 0.0))
    return float(parasite + blade + induced)


class DeadUavError(RuntimeError):
    pass


def consume_and_update(s: UavState, p_fly: float, dt: float) -> UavState:
    """Drain ``p_fly * dt`` joules; the UAV fails once its residual energy is <= 0."""
    if not s.alive:
        raise DeadUavError("cannot draw energy from a failed UAV")
    energy = s.residual_energy - p_fly * dt
    return replace(s, residual_energy=energy, alive=bool(energy > 0))


def pairwise_separation_ok(states: Sequence[UavState], d_min: float) -> list:
    """Index pairs ``(n, n')`` with ``n < n'`` closer than ``d_min``."""
    bad = []
    for i, j in combinations(range(len(states)), 2):
        if np.linalg.norm(states[i].position - states[j].position) < d_min:
            bad.append((i, j))
    return bad
