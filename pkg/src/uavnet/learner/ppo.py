"""On-policy PPO training with GAE over the UAV network environment."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..config import PPOConfig
from ..environment import HybridAction
from .nn import Adam, clip_by_global_norm
from .policy import LOG_STD_MAX, LOG_STD_MIN, HybridPolicy

log = logging.getLogger(__name__)


def gae(rewards, values, dones, gamma=0.99, lam=0.95, last_value=0.0):
    """Generalised advantage estimates by backward recursion.

    ``values[t]`` is V(s_t); the bootstrap for the final step is
    ``last_value`` unless that step is terminal. ``dones[t]`` marks that the
    transition at ``t`` ended its episode (its successor value counts as 0).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("rewards, values and dones must have equal length")
    T = len(rewards)
    adv = np.zeros(T)
    next_value, running = float(last_value), 0.0
    for t in reversed(range(T)):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv


class RolloutBuffer:
    """Ordered on-policy transitions; cleared after each update cycle."""

    def __init__(self, capacity=50000):
        self.capacity = int(capacity)
        self.clear()

    def clear(self):
        self.obs, self.a_cont, self.a_disc = [], [], []
        self.logp, self.rewards, self.values, self.dones = [], [], [], []
        self.advantages = None
        self.returns = None

    def __len__(self):
        return len(self.rewards)

    def add(self, obs, a_cont, a_disc, logp, reward, value, done):
        if len(self) >= self.capacity:
            raise OverflowError("rollout buffer is full")
        self.obs.append(np.asarray(obs, dtype=float))
        self.a_cont.append(np.asarray(a_cont, dtype=float))
        self.a_disc.append(np.asarray(a_disc, dtype=int))
        self.logp.append(float(logp))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        self.advantages = None

    def compute_advantages(self, gamma, lam, last_value=0.0):
        self.advantages = gae(self.rewards, self.values, self.dones, gamma, lam, last_value)
        self.returns = self.advantages + np.asarray(self.values)

    def arrays(self):
        if self.advantages is None:
            raise RuntimeError("advantages must be computed before an update")
        return (np.array(self.obs), np.array(self.a_cont), np.array(self.a_disc),
                np.array(self.logp), self.advantages, self.returns)


class RunningNorm:
    """Running mean and variance of observations (parallel-merge update)."""

    def __init__(self, dim, clip=10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = float(clip)

    def update(self, x):
        x = np.atleast_2d(x)
        b_mean, b_var, b = x.mean(axis=0), x.var(axis=0), len(x)
        delta = b_mean - self.mean
        total = self.count + b
        self.mean = self.mean + delta * b / total
        m2 = self.var * self.count + b_var * b + delta**2 * self.count * b / total
        self.var = m2 / total
        self.count = total

    def __call__(self, x):
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"mean": self.mean, "var": self.var, "count": np.array(self.count)}

    def load_state_dict(self, state: dict) -> None:
        self.mean = np.array(state["mean"], dtype=float)
        self.var = np.array(state["var"], dtype=float)
        self.count = float(state["count"])


@dataclass
class Agent:
    policy: HybridPolicy
    actor: dict
    critic: dict
    actor_opt: Adam
    critic_opt: Adam
    rng: np.random.Generator
    hyper: PPOConfig
    obs_norm: Optional[RunningNorm] = None
    incidents: list = field(default_factory=list)

    @classmethod
    def create(cls, obs_dim, n_uav, n_user, hyper: PPOConfig, seed):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA6E7]))
        policy = HybridPolicy(obs_dim, n_uav, n_user, hyper.hidden)
        actor, critic = policy.init_params(rng, hyper.log_std_init, hyper.actor_out_gain)
        opt = dict(lr=hyper.lr, beta1=hyper.adam_beta1, beta2=hyper.adam_beta2, eps=hyper.adam_eps)
        norm = RunningNorm(obs_dim) if hyper.normalize_obs else None
        return cls(policy, actor, critic, Adam(actor, **opt), Adam(critic, **opt), rng, hyper, norm)

    def features(self, obs, update=False):
        """Network input for a raw observation; ``update`` folds it into the running statistics."""
        if self.obs_norm is None:
            return np.asarray(obs, dtype=float)
        if update:
            self.obs_norm.update(obs)
        return self.obs_norm(obs)

    def act(self, obs, greedy=False):
        return self.policy.act(self.actor, self.critic, self.features(obs), self.rng, greedy)

    def to_action(self, a_cont, a_disc) -> HybridAction:
        return HybridAction(np.asarray(a_cont).reshape(self.policy.n_uav, 3), np.asarray(a_disc))


def ppo_update(agent: Agent, buffer: RolloutBuffer) -> dict:
    """Several epochs of clipped-surrogate and value regression over shuffled minibatches."""
    h = agent.hyper
    obs, a_cont, a_disc, logp_old, adv_all, ret_all = buffer.arrays()
    n = len(obs)
    metrics = {"actor_loss": [], "critic_loss": [], "approx_kl": [], "clip_frac": [], "entropy": []}
    skipped = 0
    stopped = False
    for _ in range(h.epochs):
        if stopped:
            break
        order = agent.rng.permutation(n)
        for start in range(0, n, h.batch_size):
            idx = order[start:start + h.batch_size]
            adv = adv_all[idx]
            if len(idx) > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            a_loss, a_grads, info = agent.policy.actor_loss_and_grad(
                agent.actor, obs[idx], a_cont[idx], a_disc[idx], logp_old[idx], adv,
                h.clip_eps, h.entropy_coef)
            if h.target_kl is not None and info["approx_kl"] > 1.5 * h.target_kl:
                stopped = True
                break
            c_loss, c_grads = agent.policy.critic_loss_and_grad(agent.critic, obs[idx], ret_all[idx])
            a_grads, a_norm = clip_by_global_norm(a_grads, h.max_grad_norm)
            c_grads, c_norm = clip_by_global_norm(c_grads, h.max_grad_norm)
            if not (np.isfinite(a_norm) and np.isfinite(c_norm)):
                skipped += 1
                agent.incidents.append("non-finite gradient; minibatch skipped")
                log.warning("non-finite gradient; skipping minibatch update")
                continue
            agent.actor_opt.step(agent.actor, a_grads)
            np.clip(agent.actor["log_std"], LOG_STD_MIN, LOG_STD_MAX, out=agent.actor["log_std"])
            agent.critic_opt.step(agent.critic, c_grads)
            metrics["actor_loss"].append(a_loss)
            metrics["critic_loss"].append(c_loss)
            for k in ("approx_kl", "clip_frac", "entropy"):
                metrics[k].append(info[k])
    buffer.clear()
    out = {k: float(np.mean(v)) if v else float("nan") for k, v in metrics.items()}
    out["skipped"] = skipped
    out["early_stop"] = stopped
    out["samples"] = n
    return out


def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(episode)]).generate_state(1)[0])


@dataclass
class EpisodeStats:
    episode: int
    mean_reward: float
    mean_s_total: float
    obstacle_violation_slots: int
    boundary_violation_slots: int
    uav_failures: int
    slots: int
    wall_clock: float = 0.0


class _Tally:
    def __init__(self):
        self.t0 = time.perf_counter()
        self.reward = self.s_total = 0.0
        self.obstacle = self.boundary = self.failures = 0

    def add(self, reward, diag):
        self.reward += reward
        self.s_total += diag["S_total"]
        self.obstacle += diag["violations"]["obstacle"] > 0
        self.boundary += diag["violations"]["boundary"] > 0
        self.failures += len(diag["failed"])

    def finish(self, episode, env) -> EpisodeStats:
        # normalise by the horizon: slots after total failure count as zero
        L = env.horizon
        return EpisodeStats(episode, self.reward / L, self.s_total / L, int(self.obstacle),
                            int(self.boundary), self.failures, env.slot,
                            time.perf_counter() - self.t0)


def run_episode(env, select: Callable, seed: int, episode: int = 0, on_slot=None,
                initial_positions=None) -> EpisodeStats:
    """Roll out one episode with ``select(obs) -> HybridAction``.

    Means are taken over the full horizon: slots after every UAV has failed
    count as zero satisfaction and zero reward.
    """
    obs = env.reset(seed, initial_positions=initial_positions)
    tally = _Tally()
    done = False
    while not done:
        obs, r, done, diag = env.step(select(obs))
        tally.add(r, diag)
        if on_slot is not None:
            on_slot(diag)
    return tally.finish(episode, env)


@dataclass
class TrainResult:
    agent: Agent
    log: list
    updates: list


def train(env_factory: Callable, hyper: PPOConfig, seed: int, episodes: Optional[int] = None,
          progress: Optional[Callable] = None) -> TrainResult:
    """Alternate rollout collection and PPO updates for ``episodes`` episodes.

    An update runs after every ``update_every_episodes`` episodes and after
    the last one, so ``episodes=0`` returns the initial parameters.
    """
    env = env_factory()
    episodes = hyper.episodes if episodes is None else episodes
    agent = Agent.create(env.obs_dim, env.n_uav, env.n_user, hyper, seed)
    buffer = RolloutBuffer(hyper.buffer_capacity)
    history, updates = [], []

    for ep in range(episodes):
        obs = env.reset(episode_seed(seed, ep))
        tally = _Tally()
        done = False
        while not done:
            x = agent.features(obs, update=True)
            a_cont, a_disc, lp, v = agent.policy.act(agent.actor, agent.critic, x, agent.rng)
            next_obs, r, done, diag = env.step(agent.to_action(a_cont, a_disc))
            buffer.add(x, a_cont, a_disc, lp, hyper.reward_scale * r, v, done)
            tally.add(r, diag)
            obs = next_obs
        stats = tally.finish(ep, env)
        history.append(stats)
        if (ep + 1) % hyper.update_every_episodes == 0 or ep == episodes - 1:
            buffer.compute_advantages(hyper.gamma, hyper.gae_lambda)
            m = ppo_update(agent, buffer)
            m["episode"] = ep
            updates.append(m)
        if progress is not None:
            progress(stats)
    return TrainResult(agent, history, updates)
