"""Hybrid actor-critic: diagonal Gaussian over accelerations, categoricals over association."""
from __future__ import annotations

import numpy as np

from .nn import MLP

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gaussian_log_prob(a, mean, log_std):
    """Sum of per-dimension diagonal Gaussian log-densities (last axis)."""
    std = np.exp(log_std)
    return np.sum(-0.5 * ((a - mean) / std) ** 2 - log_std - _HALF_LOG_2PI, axis=-1)


def categorical_log_prob(logits, choice):
    """Sum over heads of log-masses; ``logits`` is (B, K, N), ``choice`` (B, K)."""
    lp = log_softmax(logits)
    return np.take_along_axis(lp, choice[..., None].astype(int), axis=-1)[..., 0].sum(axis=-1)


def categorical_entropy(logits):
    """Per-head entropy, shape (B, K)."""
    lp = log_softmax(logits)
    return -(np.exp(lp) * lp).sum(axis=-1)


class HybridPolicy:
    """Actor and critic networks sharing a trunk shape but not weights.

    Actor output layout: ``3 * n_uav`` acceleration means followed by
    ``n_user * n_uav`` association logits (user-major).
    """

    def __init__(self, obs_dim, n_uav, n_user, hidden=(256, 128)):
        self.obs_dim, self.n_uav, self.n_user = obs_dim, n_uav, n_user
        self.cont_dim = 3 * n_uav
        self.hidden = list(hidden)
        self.actor = MLP([obs_dim, *hidden, self.cont_dim + n_user * n_uav])
        self.critic = MLP([obs_dim, *hidden, 1])

    def init_params(self, rng, log_std_init=0.0, out_gain=0.01):
        actor = self.actor.init(rng, out_gain=out_gain)
        actor["log_std"] = np.full(self.cont_dim, float(log_std_init))
        critic = self.critic.init(rng, out_gain=1.0)
        return actor, critic

    def _split(self, out):
        mean = out[:, :self.cont_dim]
        logits = out[:, self.cont_dim:].reshape(-1, self.n_user, self.n_uav)
        return mean, logits

    def forward(self, actor, critic, obs):
        """``(means, log_stds, logits, values)`` for a batch of observations."""
        obs = np.atleast_2d(obs)
        out, _ = self.actor.forward(actor, obs)
        mean, logits = self._split(out)
        value, _ = self.critic.forward(critic, obs)
        log_std = np.broadcast_to(actor["log_std"], mean.shape)
        return mean, log_std, logits, value[:, 0]

    def log_prob(self, actor, obs, a_cont, a_disc):
        out, _ = self.actor.forward(actor, np.atleast_2d(obs))
        mean, logits = self._split(out)
        return (gaussian_log_prob(a_cont, mean, actor["log_std"])
                + categorical_log_prob(logits, a_disc))

    def value(self, critic, obs):
        v, _ = self.critic.forward(critic, np.atleast_2d(obs))
        return v[:, 0]

    def act(self, actor, critic, obs, rng, greedy=False):
        """Sample (or take the mode of) one hybrid action for a single observation.

        Returns ``(a_cont (cont_dim,), a_disc (n_user,), log_prob, value)``.
        """
        mean, log_std, logits, value = self.forward(actor, critic, obs)
        mean, log_std, logits = mean[0], log_std[0], logits[0]
        if greedy:
            a_cont = mean.copy()
            a_disc = logits.argmax(axis=-1)
        else:
            a_cont = mean + np.exp(log_std) * rng.standard_normal(self.cont_dim)
            # Gumbel-max sampling of all heads at once
            g = -np.log(-np.log(rng.uniform(size=logits.shape)))
            a_disc = (logits + g).argmax(axis=-1)
        lp = float(gaussian_log_prob(a_cont, mean, log_std)
                   + categorical_log_prob(logits[None], a_disc[None])[0])
        return a_cont, a_disc, lp, float(value[0])

    # -- losses with analytic gradients --------------------------------------
    def actor_loss_and_grad(self, actor, obs, a_cont, a_disc, logp_old, adv,
                            clip_eps=0.2, entropy_coef=0.01):
        """Negative clipped surrogate minus entropy bonus, and its gradient.

        ``loss = -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) - c * mean(H)``
        where H is the joint (Gaussian + categorical) entropy.
        """
        b = len(obs)
        out, acts = self.actor.forward(actor, obs)
        mean, logits = self._split(out)
        log_std = actor["log_std"]
        std = np.exp(log_std)
        lp_cat = log_softmax(logits)
        probs = np.exp(lp_cat)
        logp = (gaussian_log_prob(a_cont, mean, log_std)
                + np.take_along_axis(lp_cat, a_disc[..., None].astype(int), axis=-1)[..., 0].sum(-1))
        ratio = np.exp(logp - logp_old)
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        surr = np.minimum(ratio * adv, clipped * adv)
        ent_cat = -(probs * lp_cat).sum(axis=-1)  # (B, K)
        ent_gauss = float(np.sum(log_std + 0.5 + _HALF_LOG_2PI))
        entropy = ent_gauss + ent_cat.sum(axis=-1)
        loss = -surr.mean() - entropy_coef * entropy.mean()

        # gradient flows through the unclipped branch only where it is the minimum
        active = ratio * adv <= clipped * adv
        g_logp = -np.where(active, ratio * adv, 0.0) / b
        z = (a_cont - mean) / std
        d_mean = g_logp[:, None] * z / std
        d_log_std = (g_logp[:, None] * (z * z - 1.0)).sum(axis=0) - entropy_coef
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, a_disc[..., None].astype(int), 1.0, axis=-1)
        d_logits = g_logp[:, None, None] * (onehot - probs)
        d_logits += (entropy_coef / b) * probs * (lp_cat + ent_cat[..., None])
        d_out = np.concatenate([d_mean, d_logits.reshape(b, -1)], axis=1)
        grads = self.actor.backward(actor, acts, d_out)
        grads["log_std"] = d_log_std
        info = {
            "approx_kl": float(np.mean(logp_old - logp)),
            "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
            "entropy": float(entropy.mean()),
            "surrogate": float(surr.mean()),
        }
        return float(loss), grads, info

    def critic_loss_and_grad(self, critic, obs, returns):
        """Mean squared error to the return targets and its gradient."""
        b = len(obs)
        out, acts = self.critic.forward(critic, obs)
        err = out[:, 0] - returns
        loss = float(np.mean(err**2))
        grads = self.critic.backward(critic, acts, (2.0 * err / b)[:, None])
        return loss, grads
