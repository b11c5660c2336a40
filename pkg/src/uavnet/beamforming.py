"""Per-UAV zero-forcing precoding with bisection water-filling.

The channel matrix ``H`` of one UAV stacks the conjugated channels of its
associated users as rows (``H[k] = h_k^H``), so ``H @ W = I`` is exactly the
zero-forcing condition ``w_j^H h_k = 0`` for ``j != k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_CONDITION = 1e12


class ZfInfeasible(ValueError):
    """Raised when the Gram matrix of the channel rows is (near) singular."""


@dataclass
class ZfBasis:
    H: np.ndarray
    pinv: np.ndarray
    cost: np.ndarray

    @property
    def n_users(self) -> int:
        return self.H.shape[0]


@dataclass
class BeamformingSolution:
    beams: np.ndarray
    powers: np.ndarray
    water_level: float
    sum_power: float
    iterations: int = 0
    dropped: tuple = ()


def zf_basis(H) -> ZfBasis:
    """Right pseudo-inverse ``H^H (H H^H)^-1`` and per-user power costs.

    ``cost[k] = [pinv^H pinv]_kk = [(H H^H)^-1]_kk`` is the transmit power
    needed per unit of received power at user ``k``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    k, n_ant = H.shape
    if k > n_ant:
        raise ZfInfeasible(f"{k} users exceed {n_ant} antennas")
    gram = H @ H.conj().T
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > MAX_CONDITION:
        raise ZfInfeasible("channel Gram matrix is ill-conditioned")
    gram_inv = np.linalg.inv(gram)
    pinv = H.conj().T @ gram_inv
    cost = np.real(np.einsum("rk,rk->k", pinv.conj(), pinv))
    return ZfBasis(H, pinv, cost)


def allocate(floors, water):
    return np.maximum(water - floors, 0.0)


def water_fill(cost, noise_power, p_max, eps=None, max_iter=500):
    """Bisection on the water level's reciprocal ``mu``.

    Returns ``(powers, mu, iterations)`` with ``powers[k] = [1/mu - noise*cost[k]]^+``
    and ``|sum(powers) - p_max| <= eps``. ``eps`` defaults to ``1e-6 * p_max``.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 1 or len(cost) == 0:
        raise ValueError("cost must be a non-empty vector")
    if not (np.all(cost > 0) and noise_power > 0 and p_max > 0):
        raise ValueError("costs, noise power and power budget must be positive")
    if eps is None:
        eps = 1e-6 * p_max
    if not eps > 0:
        raise ValueError("eps must be positive")

    floors = noise_power * cost
    # mu at the lowest floor allocates nothing; at the highest floor pushed up
    # by the whole budget it allocates at least p_max
    mu_hi = 1.0 / floors.min()
    mu_lo = 1.0 / floors.max()
    while allocate(floors, 1.0 / mu_lo).sum() < p_max:
        mu_lo *= 0.5
    assert allocate(floors, 1.0 / mu_hi).sum() <= p_max

    it = 0
    while True:
        it += 1
        mu = 0.5 * (mu_lo + mu_hi)
        p = allocate(floors, 1.0 / mu)
        p_sum = p.sum()
        if abs(p_sum - p_max) <= eps:
            break
        if p_sum > p_max:
            mu_lo = mu
        else:
            mu_hi = mu
        if it >= max_iter:
            raise RuntimeError("water-filling bisection did not converge")
    return p, mu, it


def bisection_iteration_bound(cost, noise_power, p_max, eps=None) -> int:
    """Upper bound on :func:`water_fill` iterations from the initial bracket.

    ``sum(powers)`` is Lipschitz in ``mu`` with constant ``K / mu_lo**2`` on
    the bracket, so a ``mu``-interval of width ``eps * mu_lo**2 / K`` meets
    the power tolerance.
    """
    cost = np.asarray(cost, dtype=float)
    if eps is None:
        eps = 1e-6 * p_max
    floors = noise_power * cost
    mu_hi = 1.0 / floors.min()
    mu_lo = 1.0 / floors.max()
    while allocate(floors, 1.0 / mu_lo).sum() < p_max:
        mu_lo *= 0.5
    tol = eps * mu_lo**2 / len(cost)
    return max(1, math.ceil(math.log2((mu_hi - mu_lo) / tol))) + 1


def assemble_beams(basis: ZfBasis, powers, water_level=float("nan"), iterations=0) -> BeamformingSolution:
    """Scale pseudo-inverse columns so that ``||w_k||^2 = powers[k]``."""
    powers = np.asarray(powers, dtype=float)
    scale = np.sqrt(powers / basis.cost)
    beams = (basis.pinv * scale[None, :]).T
    return BeamformingSolution(beams, powers, float(water_level), float(powers.sum()), iterations)


def equal_beamforming(H, p_max) -> BeamformingSolution:
    """CSI-agnostic baseline: every stream uses the uniform-phase unit vector."""
    H = np.atleast_2d(np.asarray(H))
    k, n_ant = H.shape
    if k < 1:
        raise ValueError("need at least one user")
    powers = np.full(k, p_max / k)
    unit = np.ones(n_ant, dtype=complex) / np.sqrt(n_ant)
    beams = np.sqrt(powers)[:, None] * unit[None, :]
    return BeamformingSolution(beams, powers, float("nan"), float(powers.sum()))


def literal_costs(basis: ZfBasis) -> np.ndarray:
    """Diagonal of ``(pinv^H pinv)^-1``, i.e. ``||h_k||^2``, as printed in the source formula."""
    gram = basis.H @ basis.H.conj().T
    return np.real(np.diag(gram)).copy()


def solve_uav(H, noise_power, p_max, eps=None, literal=False) -> BeamformingSolution:
    """Zero-forcing + water-filling for one UAV, dropping weak users on rank deficiency.

    Users are dropped in ascending channel-norm order until the Gram matrix
    is well conditioned. Dropped users keep a zero beam and zero power.
    With ``literal=True`` the allocation uses :func:`literal_costs` instead
    of the KKT-consistent costs (beams still spend exactly ``powers[k]``).
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    k, n_ant = H.shape
    keep = list(range(k))
    norms = np.linalg.norm(H, axis=1)
    order = list(np.argsort(norms, kind="stable"))
    basis = None
    while keep:
        try:
            basis = zf_basis(H[keep])
            break
        except ZfInfeasible:
            weakest = next(i for i in order if i in keep)
            keep.remove(weakest)
    beams = np.zeros((k, n_ant), dtype=complex)
    powers = np.zeros(k)
    if basis is None:
        return BeamformingSolution(beams, powers, float("nan"), 0.0, 0, tuple(range(k)))
    alloc_cost = literal_costs(basis) if literal else basis.cost
    p, mu, it = water_fill(alloc_cost, noise_power, p_max, eps)
    sol = assemble_beams(basis, p, mu, it)
    beams[keep] = sol.beams
    powers[keep] = p
    dropped = tuple(i for i in range(k) if i not in keep)
    return BeamformingSolution(beams, powers, mu, float(p.sum()), it, dropped)


def zf_sum_rate(cost, powers, noise_power) -> float:
    """Sum spectral efficiency (bit/s/Hz) of interference-free ZF streams."""
    cost = np.asarray(cost, dtype=float)
    return float(np.sum(np.log2(1.0 + np.asarray(powers) / (noise_power * cost))))
