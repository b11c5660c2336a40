from .nn import MLP, Adam
from .policy import HybridPolicy
from .ppo import Agent, RolloutBuffer, gae, ppo_update, run_episode, train

__all__ = ["MLP", "Adam", "HybridPolicy", "Agent", "RolloutBuffer", "gae", "ppo_update",
           "run_episode", "train"]
