from .sac import SacAgent, sample_action, action_log_prob, actor_and_alpha_update
from .dqn import DqnAgent

__all__ = ["SacAgent", "DqnAgent", "sample_action", "action_log_prob",
           "actor_and_alpha_update"]
