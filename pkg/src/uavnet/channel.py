"""Rician air-to-ground channels with uniform-planar-array LoS steering.

Channel vectors follow the downlink convention: the complex gain seen by
user ``k`` for a transmit beam ``w`` from UAV ``n`` is ``w^H h[n, k]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def dbm_to_watt(dbm: float) -> float:
    return float(10.0 ** ((dbm - 30.0) / 10.0))


@dataclass(frozen=True)
class ChannelParams:
    """Large-scale and array parameters.

    ``rician_factor=inf`` selects a deterministic pure-LoS channel.
    """

    ref_gain: float = db_to_linear(-30.0)
    path_loss_exp: float = 2.2
    rician_factor: float = 10.0
    carrier_hz: float = 2.4e9
    spacing_ratio: float = 0.5
    noise_power: float = dbm_to_watt(-65.0)
    bandwidth: float = 1e6
    min_distance: float = 1.0

    def __post_init__(self):
        for name in ("ref_gain", "path_loss_exp", "carrier_hz", "spacing_ratio",
                     "noise_power", "bandwidth", "min_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"channel parameter {name} must be positive")
        if not self.rician_factor >= 0:
            raise ValueError("rician factor must be non-negative")

    @property
    def los_weight(self) -> float:
        if np.isinf(self.rician_factor):
            return 1.0
        return float(np.sqrt(self.rician_factor / (1.0 + self.rician_factor)))

    @property
    def nlos_weight(self) -> float:
        if np.isinf(self.rician_factor):
            return 0.0
        return float(np.sqrt(1.0 / (1.0 + self.rician_factor)))


@dataclass
class ChannelRealization:
    h: np.ndarray
    distance: float
    los: np.ndarray
    nlos: np.ndarray

    @property
    def power_gain(self) -> float:
        return float(np.sum(np.abs(self.h) ** 2))


def aods(q, u):
    """Horizontal and vertical departure angles ``(theta, varpi)`` from UAV ``q`` to user ``u``."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] == 2:
        u = np.append(u, 0.0)
    d = float(np.linalg.norm(q - u))
    if d == 0.0:
        raise ValueError("UAV and user coincide; departure angles undefined")
    theta = float(np.arccos(np.clip((q[1] - u[1]) / d, -1.0, 1.0)))
    varpi = float(np.arcsin(np.clip(q[2] / d, -1.0, 1.0)))
    return theta, varpi


def los_steering(theta, varpi, rows, cols, spacing_ratio=0.5) -> np.ndarray:
    """UPA steering vector, row index major (Kronecker of row then column progression)."""
    if rows < 1 or cols < 1:
        raise ValueError("array dimensions must be >= 1")
    k = -2.0 * np.pi * spacing_ratio * np.sin(varpi) * np.cos(theta)
    ax = np.exp(1j * k * np.arange(rows))
    ay = np.exp(1j * k * np.arange(cols))
    return np.kron(ax, ay)


def sample_channel(q, u, params: ChannelParams, rng: np.random.Generator,
                   rows=4, cols=4) -> ChannelRealization:
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] == 2:
        u = np.append(u, 0.0)
    theta, varpi = aods(q, u)
    d = float(np.linalg.norm(q - u))
    n = rows * cols
    los = los_steering(theta, varpi, rows, cols, params.spacing_ratio)
    nlos = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    amp = np.sqrt(params.ref_gain * max(d, params.min_distance) ** (-params.path_loss_exp))
    h = amp * (params.los_weight * los + params.nlos_weight * nlos)
    return ChannelRealization(h, d, los, nlos)


def sample_channels(uav_pos, user_pos, params: ChannelParams, rng: np.random.Generator,
                    rows=4, cols=4) -> np.ndarray:
    """All links at once: returns ``h`` with shape (N, K, rows*cols).

    NLoS draws are consumed in (n, k, antenna) order, so the same generator
    state gives the same channels independently of associations or UAV
    liveness.
    """
    uav_pos = np.atleast_2d(np.asarray(uav_pos, dtype=float))
    user_pos = np.atleast_2d(np.asarray(user_pos, dtype=float))
    if user_pos.shape[1] == 2:
        user_pos = np.column_stack([user_pos, np.zeros(len(user_pos))])
    n_uav, n_user, n_ant = len(uav_pos), len(user_pos), rows * cols
    diff = uav_pos[:, None, :] - user_pos[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    if np.any(d == 0.0):
        raise ValueError("UAV and user coincide; departure angles undefined")
    cos_theta = np.clip(diff[..., 1] / d, -1.0, 1.0)
    sin_varpi = np.clip(uav_pos[:, None, 2] / d, -1.0, 1.0)
    k = -2.0 * np.pi * params.spacing_ratio * sin_varpi * cos_theta
    # phase of element (a_x, a_y) is k * (a_x + a_y) with zero-based indices
    idx = (np.arange(rows)[:, None] + np.arange(cols)[None, :]).reshape(-1)
    los = np.exp(1j * k[..., None] * idx)
    shape = (n_uav, n_user, n_ant)
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    amp = np.sqrt(params.ref_gain * np.maximum(d, params.min_distance) ** (-params.path_loss_exp))
    return amp[..., None] * (params.los_weight * los + params.nlos_weight * nlos)


def slot_rng(seed: int, slot: int) -> np.random.Generator:
    """Generator for the channel draws of one (episode seed, slot) pair."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0xC4A7, int(slot)]))


def link_rng(seed: int, slot: int, n: int, k: int) -> np.random.Generator:
    """Independent generator for a single (episode, slot, link)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0xC4A7, int(slot), int(n), int(k)]))


def gain_matrix(assoc: np.ndarray, beams: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Received powers ``G[k, j, i] = |w[j, i]^H h[j, k]|^2`` for active streams (j, i)."""
    # beams: (N, K, Nr), zero for inactive streams; h: (N, K, Nr)
    amp = np.einsum("jir,jkr->kji", beams.conj(), h)
    g = np.abs(amp) ** 2
    return g * assoc[None, :, :]


def sinr_and_rate(k: int, assoc: np.ndarray, beams: np.ndarray, h: np.ndarray,
                  noise_power: float, bandwidth: float):
    """SINR (linear) and rate (bit/s) of user ``k``.

    ``assoc`` is the (N, K) binary matrix, ``beams`` the (N, K, Nr) stream
    beamformers and ``h`` the (N, K, Nr) channels.
    """
    col = np.flatnonzero(assoc[:, k])
    if len(col) != 1:
        raise ValueError(f"user {k} must be associated with exactly one UAV")
    n = int(col[0])
    signal = float(np.abs(np.vdot(beams[n, k], h[n, k])) ** 2)
    interference = 0.0
    for j in range(assoc.shape[0]):
        for i in np.flatnonzero(assoc[j]):
            if i == k:
                continue
            interference += float(np.abs(np.vdot(beams[j, i], h[j, k])) ** 2)
    sinr = signal / (interference + noise_power)
    return sinr, bandwidth * float(np.log2(1.0 + sinr))


def network_rates(assoc: np.ndarray, beams: np.ndarray, h: np.ndarray,
                  noise_power: float, bandwidth: float):
    """Vectorised SINR and rate for every user; unassociated users get 0."""
    g = gain_matrix(assoc, beams, h)  # (K, N, K)
    n_user = assoc.shape[1]
    served = assoc.sum(axis=0) > 0
    serving = np.argmax(assoc, axis=0)
    users = np.arange(n_user)
    signal = g[users, serving, users]
    total = g.sum(axis=(1, 2))
    # the i == k stream is the own signal (only one UAV serves k)
    own_stream = g[users, :, users].sum(axis=1)
    interference = total - own_stream
    sinr = np.where(served, signal / (interference + noise_power), 0.0)
    rate = bandwidth * np.log2(1.0 + sinr)
    return sinr, rate
