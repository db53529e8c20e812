from bicup.env.physics import (PhysicsConfig, PhysicsState, mechanical_energy,
                               physics_reset, physics_step)
from bicup.env.action_filter import ActionFilterState, filter_action, filter_beta
from bicup.env.rewards import (NUM_REWARDS, REWARD_NAMES, RewardConfig,
                               compute_rewards)
from bicup.env.render import RenderConfig, Renderer, frame_to_pgm
from bicup.env.bic import (BallInCupEnv, EnvConfig, Observation,
                           observation_spec)

__all__ = [
    "PhysicsConfig", "PhysicsState", "mechanical_energy", "physics_reset",
    "physics_step",
    "ActionFilterState", "filter_action", "filter_beta",
    "NUM_REWARDS", "REWARD_NAMES", "RewardConfig", "compute_rewards",
    "RenderConfig", "Renderer", "frame_to_pgm",
    "BallInCupEnv", "EnvConfig", "Observation", "observation_spec",
]
