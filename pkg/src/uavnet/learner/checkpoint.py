"""Save and restore a trained agent (weights, optimiser moments, RNG state)."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..config import PPOConfig
from .nn import Adam
from .policy import HybridPolicy
from .ppo import Agent, RunningNorm

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(agent: Agent, path, extra: dict | None = None) -> Path:
    """Write ``agent`` to a single ``.npz`` archive and return its path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = agent.policy
    meta = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": p.obs_dim,
        "n_uav": p.n_uav,
        "n_user": p.n_user,
        "hidden": p.hidden,
        "hyper": asdict(agent.hyper),
        "rng_state": agent.rng.bit_generator.state,
        "incidents": list(agent.incidents),
        "extra": extra or {},
    }
    arrays = {"meta": np.array(json.dumps(meta, default=int))}
    for k, v in agent.actor.items():
        arrays[f"actor/{k}"] = v
    for k, v in agent.critic.items():
        arrays[f"critic/{k}"] = v
    for prefix, opt in (("actor_opt", agent.actor_opt), ("critic_opt", agent.critic_opt)):
        for k, v in opt.state_dict().items():
            arrays[f"{prefix}/{k}"] = np.asarray(v)
    if agent.obs_norm is not None:
        for k, v in agent.obs_norm.state_dict().items():
            arrays[f"obs_norm/{k}"] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def _section(data, prefix):
    n = len(prefix) + 1
    return {k[n:]: data[k] for k in data.files if k.startswith(prefix + "/")}


def load_checkpoint(path, obs_dim: int | None = None) -> Agent:
    """Rebuild an :class:`Agent` saved by :func:`save_checkpoint`.

    Raises :class:`CheckpointError` on a version or observation-size mismatch.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
        if obs_dim is not None and obs_dim != meta["obs_dim"]:
            raise CheckpointError(
                f"checkpoint expects observations of size {meta['obs_dim']}, environment gives {obs_dim}")
        actor = {k: np.array(v) for k, v in _section(data, "actor").items()}
        critic = {k: np.array(v) for k, v in _section(data, "critic").items()}
        opt_states = {p: _section(data, p) for p in ("actor_opt", "critic_opt")}
        norm_state = _section(data, "obs_norm")
    hyper = PPOConfig(**meta["hyper"])
    policy = HybridPolicy(meta["obs_dim"], meta["n_uav"], meta["n_user"], meta["hidden"])
    opt = dict(lr=hyper.lr, beta1=hyper.adam_beta1, beta2=hyper.adam_beta2, eps=hyper.adam_eps)
    actor_opt, critic_opt = Adam(actor, **opt), Adam(critic, **opt)
    actor_opt.load_state_dict(opt_states["actor_opt"])
    critic_opt.load_state_dict(opt_states["critic_opt"])
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    norm = None
    if norm_state:
        norm = RunningNorm(meta["obs_dim"])
        norm.load_state_dict(norm_state)
    return Agent(policy, actor, critic, actor_opt, critic_opt, rng, hyper, norm,
                 list(meta["incidents"]))
