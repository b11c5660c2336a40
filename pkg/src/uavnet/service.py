"""User satisfaction and UAV-user association management."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .dynamics import UavState

MIN_SHAPING = 7.0


def satisfaction_f(rate, target_rate, urgency, shaping=8.0):
    """Logistic satisfaction of achieving ``rate`` against ``target_rate``.

    ``urgency`` is the slope in 1/(bit/s); ``shaping`` must exceed 7.
    Works elementwise on arrays.
    """
    if not shaping > MIN_SHAPING:
        raise ValueError(f"shaping constant must exceed {MIN_SHAPING}")
    urgency = np.asarray(urgency, dtype=float)
    if np.any(urgency <= 0):
        raise ValueError("urgency must be positive")
    x = urgency * (np.asarray(rate, dtype=float) - np.asarray(target_rate, dtype=float)) + shaping
    # tanh form is overflow-free for large |x|
    f = 0.5 * (1.0 + np.tanh(0.5 * x))
    return float(f) if np.ndim(f) == 0 else f


def satisfaction_S(f, alpha):
    """Satisfaction credited to a link: ``f`` when associated, else 0."""
    s = np.where(np.asarray(alpha) == 1, f, 0.0)
    return float(s) if np.ndim(s) == 0 else s


def check_association(alpha: np.ndarray, states: Sequence[UavState]) -> list:
    """Human-readable list of association constraint violations (empty when valid)."""
    problems = []
    alpha = np.asarray(alpha)
    if not np.all((alpha == 0) | (alpha == 1)):
        problems.append("non-binary entries")
    cols = alpha.sum(axis=0)
    if np.any(cols > 1):
        problems.append(f"users with several UAVs: {np.flatnonzero(cols > 1).tolist()}")
    live_capacity = sum(s.capacity for s in states if s.alive)
    if live_capacity >= alpha.shape[1] and np.any(cols == 0):
        problems.append(f"unserved users despite capacity: {np.flatnonzero(cols == 0).tolist()}")
    for n, s in enumerate(states):
        load = int(alpha[n].sum())
        if load > s.capacity:
            problems.append(f"UAV {n} over capacity ({load} > {s.capacity})")
        if not s.alive and load:
            problems.append(f"failed UAV {n} still serves users")
    return problems


def repair_association(pref: np.ndarray, states: Sequence[UavState]) -> np.ndarray:
    """Greedy capacity-respecting assignment from per-user UAV scores.

    ``pref`` has shape (K, N). Users are processed by descending best live
    score (ties: lower user index) and take their best live UAV with spare
    capacity (ties: lower UAV index). Returns the (N, K) 0/1 matrix.
    """
    pref = np.asarray(pref, dtype=float)
    n_user, n_uav = pref.shape
    if n_uav != len(states):
        raise ValueError("score columns must match the number of UAVs")
    if not np.all(np.isfinite(pref)):
        raise ValueError("scores must be finite")
    alive = np.array([s.alive for s in states], dtype=bool)
    spare = np.array([s.capacity if s.alive else 0 for s in states], dtype=int)
    alpha = np.zeros((n_uav, n_user), dtype=np.int8)
    if not alive.any():
        return alpha
    masked = np.where(alive[None, :], pref, -np.inf)
    best = masked.max(axis=1)
    users = sorted(range(n_user), key=lambda k: (-best[k], k))
    for k in users:
        # stable sort keeps lower UAV index first among equal scores
        for n in np.argsort(-masked[k], kind="stable"):
            if alive[n] and spare[n] > 0:
                alpha[n, k] = 1
                spare[n] -= 1
                break
    return alpha


def handle_failures(alpha_prev: np.ndarray, states: Sequence[UavState],
                    user_pos: np.ndarray) -> np.ndarray:
    """Drop links to failed UAVs and re-home unserved users on the nearest live UAV.

    Surviving links are kept unchanged. Orphans (and any user left unserved)
    go, in user-index order, to the nearest live UAV with positive energy and
    spare capacity.
    """
    alpha = np.array(alpha_prev, dtype=np.int8, copy=True)
    n_uav, n_user = alpha.shape
    alive = np.array([s.alive and s.residual_energy > 0 for s in states], dtype=bool)
    alpha[~alive] = 0
    load = alpha.sum(axis=1)
    spare = np.array([s.capacity for s in states]) - load
    spare[~alive] = 0
    positions = np.array([s.position for s in states])
    user_pos = np.asarray(user_pos, dtype=float)
    if user_pos.shape[1] == 2:
        user_pos = np.column_stack([user_pos, np.zeros(len(user_pos))])
    for k in np.flatnonzero(alpha.sum(axis=0) == 0):
        d = np.linalg.norm(positions - user_pos[k], axis=1)
        for n in np.argsort(d, kind="stable"):
            if alive[n] and spare[n] > 0:
                alpha[n, k] = 1
                spare[n] -= 1
                break
    return alpha


def distance_scores(states: Sequence[UavState], user_pos: np.ndarray) -> np.ndarray:
    """Negative UAV-user distances as (K, N) association scores."""
    positions = np.array([s.position for s in states])
    user_pos = np.asarray(user_pos, dtype=float)
    if user_pos.shape[1] == 2:
        user_pos = np.column_stack([user_pos, np.zeros(len(user_pos))])
    return -np.linalg.norm(user_pos[:, None, :] - positions[None, :, :], axis=-1)
