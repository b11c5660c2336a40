"""Slot-level MDP for the multi-UAV downlink.

Every :meth:`UavNetworkEnv.step` runs the beamforming block (zero-forcing
with water-filling, or the equal-power baseline) inside the transition, so
a policy only controls trajectories and association.

Observation layout (version 1), all entries clipped to ``[-obs_clip, obs_clip]``::

    per UAV  : x/x_max, y/y_max, (z-h_min)/(h_max-h_min),
               vx/v_max, vy/v_max, vz/v_max, E_res/E_init, alive
    per user : x/x_max, y/y_max, urgency/max_urgency,
               target/max_target, inside_obstacle
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import beamforming as bf
from .channel import network_rates, sample_channels, slot_rng
from .config import ExperimentConfig, RewardConfig
from .dynamics import (UavState, consume_and_update, propulsion_power, step_kinematics)
from .scenario import (CylindricalObstacle, Scenario, clearance_cyl, contains_cyl,
                       contains_rect, exterior_distance_rect, intrusion_rect,
                       workspace_violation)
from .service import handle_failures, repair_association, satisfaction_f

OBS_VERSION = 1
UAV_FEATURES = 8
USER_FEATURES = 5


class EpisodeFinished(RuntimeError):
    pass


@dataclass
class HybridAction:
    """Raw policy output: (N, 3) acceleration commands in [-1, 1] and (K,) UAV choices."""

    accel: np.ndarray
    choice: np.ndarray


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag)]))


_INIT_TAG, _URGENCY_TAG = 0x1417, 0x0E6C


def compute_reward(states, alpha, s_total, scenario: Scenario, host_index, rcfg: RewardConfig,
                   d_min: float):
    """Scalar reward and its named components.

    ``reward = satisfaction + bonus - (boundary + cylinder + rectangle + collision)``.
    Failed UAVs neither incur penalties nor earn bonuses. ``host_index``
    maps each user to the index of its hosting obstacle in
    ``scenario.obstacles`` (or -1).
    """
    ws = scenario.workspace
    live = [n for n, s in enumerate(states) if s.alive]
    boundary = cyl_pen = rect_pen = collision = bonus = 0.0
    n_boundary = n_obstacle = n_collision = 0
    obstacles = scenario.obstacles
    for n in live:
        q = states[n].position
        dv = workspace_violation(q, ws)
        if dv > 0:
            boundary += rcfg.kappa1 * dv * dv
            n_boundary += 1
        for o in obstacles:
            if q[2] > o.height:
                continue
            if isinstance(o, CylindricalObstacle):
                if contains_cyl(q, o):
                    cyl_pen += rcfg.kappa2 * clearance_cyl(q, o) ** 2
                    n_obstacle += 1
            elif contains_rect(q, o):
                rect_pen += rcfg.kappa3 * intrusion_rect(q, o) ** 2
                n_obstacle += 1
    for a_i, n in enumerate(live):
        for m in live[a_i + 1:]:
            dist = float(np.linalg.norm(states[n].position - states[m].position))
            if dist < d_min:
                collision += rcfg.kappa4 * np.exp(-dist / d_min)
                n_collision += 1
    margin_rect = min(rcfg.d_safe_rect)
    for n in live:
        q = states[n].position
        for k in np.flatnonzero(alpha[n]):
            oi = host_index[k]
            if oi < 0:
                continue
            o = obstacles[oi]
            if q[2] > o.height:
                continue
            if isinstance(o, CylindricalObstacle):
                delta = -clearance_cyl(q, o)
                if 0 < delta <= rcfg.d_safe_cyl:
                    bonus += float(np.exp(rcfg.kappa5 * (rcfg.d_safe_cyl - delta)))
            else:
                delta = exterior_distance_rect(q, o)
                dx = abs(q[0] - o.center[0])
                dy = abs(q[1] - o.center[1])
                if (delta > 0 and dx <= o.half_extents[0] + rcfg.d_safe_rect[0]
                        and dy <= o.half_extents[1] + rcfg.d_safe_rect[1]):
                    bonus += float(np.exp(rcfg.kappa6 * (margin_rect - delta)))
    components = {
        "satisfaction": float(s_total),
        "bonus": bonus,
        "boundary": boundary,
        "cylinder": cyl_pen,
        "rectangle": rect_pen,
        "collision": collision,
    }
    counts = {"boundary": n_boundary, "obstacle": n_obstacle, "collision": n_collision}
    return reward_from_components(components), components, counts


def reward_from_components(c: dict) -> float:
    return c["satisfaction"] + c["bonus"] - (c["boundary"] + c["cylinder"] + c["rectangle"]
                                             + c["collision"])


class UavNetworkEnv:
    """Single-actor environment; not safe for concurrent ``step`` calls."""

    def __init__(self, cfg: ExperimentConfig, beamforming: Optional[str] = None,
                 eq23_literal: Optional[bool] = None, horizon: Optional[int] = None):
        self.cfg = cfg
        self.scenario = cfg.build_scenario()
        self.workspace = self.scenario.workspace
        self.limits = cfg.limits()
        self.propulsion = cfg.propulsion_constants()
        self.channel = cfg.channel_params()
        self.beamforming = beamforming or cfg.mdp.beamforming
        self.eq23_literal = cfg.mdp.eq23_literal if eq23_literal is None else eq23_literal
        self.horizon = horizon or cfg.mdp.horizon
        self.n_uav = cfg.uav.count
        self.n_user = len(self.scenario.users)
        self.user_pos = self.scenario.user_positions
        names = [o.name for o in self.scenario.obstacles]
        self.host_index = np.array([names.index(u.hosting_obstacle) if u.hosting_obstacle else -1
                                    for u in self.scenario.users], dtype=int)
        tiers = cfg.satisfaction.tiers
        self._tier_urgency = np.array([t.urgency_per_mbps * 1e-6 for t in tiers])
        self._tier_target = np.array([t.target_mbps * 1e6 for t in tiers])
        w = np.array([t.weight for t in tiers], dtype=float)
        self._tier_weight = w / w.sum()
        self._fixed_urgency = np.array([u.urgency_per_mbps * 1e-6 if u.urgency_per_mbps else np.nan
                                        for u in cfg.scenario.users] or [np.nan] * self.n_user)
        self._fixed_target = np.array([u.target_mbps * 1e6 if u.target_mbps else np.nan
                                       for u in cfg.scenario.users] or [np.nan] * self.n_user)
        self._urg_norm = max(self._tier_urgency.max(), np.nanmax(np.append(self._fixed_urgency, 0)))
        self._tgt_norm = max(self._tier_target.max(), np.nanmax(np.append(self._fixed_target, 0)))
        self._diag = float(np.hypot(self.workspace.x_max, self.workspace.y_max))
        self.states: list = []
        self.alpha = np.zeros((self.n_uav, self.n_user), dtype=np.int8)
        self.slot = 0
        self.done = True
        self.seed = None

    # -- spaces ------------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return self.n_uav * UAV_FEATURES + self.n_user * USER_FEATURES

    @property
    def accel_dim(self) -> int:
        return 3 * self.n_uav

    # -- episode control -----------------------------------------------------
    def reset(self, seed: int, initial_positions=None) -> np.ndarray:
        if self.cfg.mdp.strict_capacity and self.n_uav * self.cfg.uav.capacity < self.n_user:
            raise ValueError("aggregate UAV capacity is below the number of users")
        self.seed = int(seed)
        self._urgency_rng = _stream(seed, _URGENCY_TAG)
        self._assign_tiers()
        ws, u = self.workspace, self.cfg.uav
        if initial_positions is None:
            rng = _stream(seed, _INIT_TAG)
            lo = np.array([0.0, 0.0, u.init_altitude[0]])
            hi = np.array([ws.x_max, ws.y_max, u.init_altitude[1]])
            initial_positions = rng.uniform(lo, hi, size=(self.n_uav, 3))
        initial_positions = np.asarray(initial_positions, dtype=float).reshape(self.n_uav, 3)
        self.states = [UavState(p, np.zeros(3), u.initial_energy, True, u.capacity, u.power_budget,
                                u.array_rows, u.array_cols) for p in initial_positions]
        self.alpha = np.zeros((self.n_uav, self.n_user), dtype=np.int8)
        self.slot = 0
        self.done = False
        return self.observation()

    def _assign_tiers(self):
        idx = self._urgency_rng.choice(len(self._tier_weight), size=self.n_user, p=self._tier_weight)
        self.urgency = np.where(np.isnan(self._fixed_urgency), self._tier_urgency[idx], self._fixed_urgency)
        self.target = np.where(np.isnan(self._fixed_target), self._tier_target[idx], self._fixed_target)

    def observation(self) -> np.ndarray:
        ws, lim = self.workspace, self.limits
        e0 = self.cfg.uav.initial_energy
        uav = np.empty((self.n_uav, UAV_FEATURES))
        for n, s in enumerate(self.states):
            q, v = s.position, s.velocity
            uav[n] = (q[0] / ws.x_max, q[1] / ws.y_max, (q[2] - ws.h_min) / (ws.h_max - ws.h_min),
                      v[0] / lim.v_max, v[1] / lim.v_max, v[2] / lim.v_max,
                      max(s.residual_energy, 0.0) / e0, float(s.alive))
        user = np.column_stack([
            self.user_pos[:, 0] / ws.x_max,
            self.user_pos[:, 1] / ws.y_max,
            self.urgency / self._urg_norm,
            self.target / self._tgt_norm,
            (self.host_index >= 0).astype(float),
        ])
        obs = np.concatenate([uav.ravel(), user.ravel()])
        c = self.cfg.mdp.obs_clip
        return np.clip(obs, -c, c)

    # -- transition pieces ------------------------------------------------------
    def decode_action(self, action: HybridAction):
        """Accelerations (N, 3) in m/s^2 inside the a_max ball, and a repaired association."""
        accel = np.asarray(action.accel, dtype=float)
        choice = np.asarray(action.choice)
        if accel.shape != (self.n_uav, 3) or choice.shape != (self.n_user,):
            raise ValueError(f"action shapes {accel.shape}, {choice.shape} do not match "
                             f"({self.n_uav}, 3), ({self.n_user},)")
        if np.any(choice < 0) or np.any(choice >= self.n_uav):
            raise ValueError("association choice out of range")
        a = accel * self.limits.a_max
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        a = np.where(norms > self.limits.a_max, a * self.limits.a_max / np.maximum(norms, 1e-300), a)
        positions = np.array([s.position for s in self.states])
        d = np.linalg.norm(self.user_pos[:, None, :] - positions[None, :, :], axis=-1)
        scores = -d / (d + self._diag)
        scores[np.arange(self.n_user), choice.astype(int)] += 1.0
        return a, repair_association(scores, self.states)

    def _advance_uavs(self, accel):
        lim = self.limits
        failed = []
        for n, s in enumerate(self.states):
            if not s.alive:
                continue
            p_fly = propulsion_power(s.velocity, self.propulsion)
            q, v = step_kinematics(s.position, s.velocity, accel[n], lim.dt, lim.v_max, lim.a_max)
            if q[2] < 0.0:
                # ground contact: no flight below the terrain
                q[2] = 0.0
                v[2] = max(v[2], 0.0)
            s = consume_and_update(replace(s, position=q, velocity=v), p_fly, lim.dt)
            if not s.alive:
                failed.append(n)
            self.states[n] = s
        return failed

    def _beams(self, alpha, h):
        n_ant = h.shape[-1]
        beams = np.zeros((self.n_uav, self.n_user, n_ant), dtype=complex)
        powers = np.zeros((self.n_uav, self.n_user))
        for n, s in enumerate(self.states):
            users = np.flatnonzero(alpha[n])
            if not s.alive or len(users) == 0:
                continue
            H = h[n, users].conj()
            if self.beamforming == "equal":
                sol = bf.equal_beamforming(H, s.power_budget)
            else:
                sol = bf.solve_uav(H, self.channel.noise_power, s.power_budget,
                                   literal=self.eq23_literal)
            beams[n, users] = sol.beams
            powers[n, users] = sol.powers
        return beams, powers

    def step(self, action: HybridAction):
        if self.done:
            raise EpisodeFinished("episode is over; call reset()")
        accel, alpha = self.decode_action(action)
        failed = self._advance_uavs(accel)
        alpha = handle_failures(alpha, self.states, self.user_pos)
        self.alpha = alpha
        if self.cfg.satisfaction.resample_each_slot:
            self._assign_tiers()

        positions = np.array([s.position for s in self.states])
        h = sample_channels(positions, self.user_pos, self.channel, slot_rng(self.seed, self.slot),
                            self.cfg.uav.array_rows, self.cfg.uav.array_cols)
        beams, powers = self._beams(alpha, h)
        _, rate = network_rates(alpha, beams, h, self.channel.noise_power, self.channel.bandwidth)
        served = alpha.sum(axis=0) > 0
        f = satisfaction_f(rate, self.target, self.urgency, self.cfg.satisfaction.shaping)
        sat = np.where(served, f, 0.0)
        s_total = float(sat.sum())
        reward, comps, counts = compute_reward(self.states, alpha, s_total, self.scenario,
                                               self.host_index, self.cfg.reward, self.limits.d_min)
        slot = self.slot
        self.slot += 1
        n_alive = sum(s.alive for s in self.states)
        self.done = self.slot >= self.horizon or n_alive == 0
        diag = {
            "slot": slot,
            "positions": positions.copy(),
            "energy": np.array([s.residual_energy for s in self.states]),
            "alive": np.array([s.alive for s in self.states]),
            "alpha": alpha.copy(),
            "powers": powers,
            "rates": rate,
            "satisfaction": sat,
            "S_total": s_total,
            "components": comps,
            "violations": counts,
            "failed": failed,
        }
        return self.observation(), reward, self.done, diag


def diagnostics_record(diag: dict) -> dict:
    """JSON-ready per-slot record (schema ``uavnet.diagnostics/1``)."""
    return {
        "slot": int(diag["slot"]),
        "uavs": [
            {"id": n, "position": [float(x) for x in diag["positions"][n]],
             "energy": float(diag["energy"][n]), "alive": bool(diag["alive"][n]),
             "serving": np.flatnonzero(diag["alpha"][n]).tolist()}
            for n in range(len(diag["alive"]))
        ],
        "users": [{"id": k, "rate": float(diag["rates"][k]), "S": float(diag["satisfaction"][k])}
                  for k in range(len(diag["rates"]))],
        "S_total": float(diag["S_total"]),
        "reward_components": {k: float(v) for k, v in diag["components"].items()},
        "violations": {k: int(v) for k, v in diag["violations"].items()},
    }
