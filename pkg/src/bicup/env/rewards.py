"""Reward family for the planar ball-in-a-cup task.

All geometric rewards are computed in the cup frame: the ball position
relative to the cup base center, so moving the cup under the ball is
just as good as swinging the ball over the cup. Rewards 1-5 are sparse
set indicators, 6 and 7 are shaped variants, and 8 is a motion penalty
on the cup velocity.
"""

from dataclasses import dataclass

import numpy as np

from bicup.env.physics import PhysicsConfig, PhysicsState

NUM_REWARDS = 8

REWARD_NAMES = (
    "above_base",
    "above_rim",
    "high_above",
    "near_mouth",
    "in_cup",
    "shaped_height",
    "shaped_lateral",
    "cup_speed_penalty",
)


@dataclass(frozen=True)
class RewardConfig:
    # high_above threshold, string length minus the ball diameter
    high_height: float = 0.35
    # near_mouth falloff scale, metres
    mouth_scale: float = 0.2
    # shaped height tanh steepness, 1/m
    height_gain: float = 7.5
    # shaped lateral Gaussian width, metres
    lateral_sigma: float = 0.09
    # cup speed penalty weight
    speed_penalty: float = 0.1

    def validate(self):
        for name in ("high_height", "mouth_scale", "height_gain",
                     "lateral_sigma", "speed_penalty"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be positive, got {v}")


def compute_rewards(state: PhysicsState, action, phys: PhysicsConfig,
                    rew: RewardConfig = RewardConfig()):
    """Reward vector (8,) float64 for a post-transition state.

    The action argument is part of the reward interface; the current
    family reads only the state (the motion penalty uses the actual cup
    velocity, not the command).
    """
    del action
    rel = state.ball_pos - state.cup_pos
    x, z = float(rel[0]), float(rel[1])
    r = np.zeros(NUM_REWARDS, dtype=np.float64)

    r[0] = 1.0 if z > 0.0 else 0.0
    r[1] = 1.0 if z > phys.cup_height else 0.0
    r[2] = 1.0 if z > rew.high_height else 0.0

    dx, dz = x, z - phys.cup_height
    r[3] = 1.0 - np.tanh(np.hypot(dx, dz) / rew.mouth_scale)

    # grazing the wall does not count as caught
    if abs(x) < phys.cup_radius - phys.ball_radius and 0.0 < z < phys.cup_height:
        r[4] = 1.0

    r[5] = 0.5 * (1.0 + np.tanh(rew.height_gain * z))

    if z >= 0.0:
        sig2 = rew.lateral_sigma ** 2
        r[6] = np.exp(-0.5 * x * x / sig2) / (2.0 * np.pi * sig2)

    r[7] = -rew.speed_penalty * float(np.sum(np.abs(state.cup_vel)))
    return r
