"""The playable ball-in-a-cup environment.

Wires the physics, the action low-pass, the reward family and the
camera into a step interface. Observations come in three groups:

  proprio  (8): cup position, cup velocity, previous raw action,
                low-pass filter state (exposed verbatim, float32)
  features (8): ball position in the cup frame, ball velocity, cup
                position, cup velocity; both velocities are finite
                differences of positions over one control step
  pixels (3, 32, 32): grayscale frames, oldest to newest; the stack
                repeats the initial frame after a reset

A non-finite physics state aborts the episode: step logs a diagnostic
and returns the last valid observation, zero rewards and aborted=True.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bicup.env.action_filter import ActionFilterState, filter_action
from bicup.env.physics import (PhysicsConfig, PhysicsState, physics_reset,
                               physics_step)
from bicup.env.render import RenderConfig, Renderer
from bicup.env.rewards import NUM_REWARDS, RewardConfig, compute_rewards
from bicup.gated import ObsSpec

log = logging.getLogger(__name__)

ACTION_DIM = 2
PROPRIO_DIM = 8
FEATURE_DIM = 8
FRAME_STACK = 3


@dataclass
class EnvConfig:
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    render: RenderConfig = field(default_factory=RenderConfig)


@dataclass
class Observation:
    proprio: np.ndarray    # (8,) float32
    features: np.ndarray   # (8,) float32
    pixels: np.ndarray     # (3, H, W) float32, oldest to newest

    def groups(self) -> dict:
        return {"proprio": self.proprio, "features": self.features,
                "image": self.pixels}


def observation_spec(cfg: Optional[EnvConfig] = None) -> ObsSpec:
    """Group layout plus the fixed normalization affine.

    Scales map operating ranges roughly onto [-1, 1]. The previous
    action and the filter state already live there; their identity
    affine keeps the filter state bit-exact through normalization.
    """
    cfg = cfg or EnvConfig()
    phys = cfg.physics
    cx = 0.5 * (phys.workspace_x[0] + phys.workspace_x[1])
    cz = 0.5 * (phys.workspace_z[0] + phys.workspace_z[1])
    sx = 2.0 / (phys.workspace_x[1] - phys.workspace_x[0])
    sz = 2.0 / (phys.workspace_z[1] - phys.workspace_z[0])
    sv = 1.0 / phys.max_speed
    srel = 1.0 / phys.string_length
    # the ball briefly outruns the cup when the string snaps taut
    sfv = 0.5 / phys.max_speed
    p_off = np.array([cx, cz, 0, 0, 0, 0, 0, 0], dtype=np.float32)
    p_sc = np.array([sx, sz, sv, sv, 1, 1, 1, 1], dtype=np.float32)
    f_off = np.array([0, 0, 0, 0, cx, cz, 0, 0], dtype=np.float32)
    f_sc = np.array([srel, srel, sfv, sfv, sx, sz, sv, sv], dtype=np.float32)
    return ObsSpec(
        vector_sizes={"proprio": PROPRIO_DIM, "features": FEATURE_DIM},
        image_shape=(FRAME_STACK, cfg.render.size, cfg.render.size),
        offsets={"proprio": p_off, "features": f_off},
        scales={"proprio": p_sc, "features": f_sc})


class BallInCupEnv:
    def __init__(self, cfg: Optional[EnvConfig] = None):
        self.cfg = cfg or EnvConfig()
        self.cfg.physics.validate()
        self.cfg.rewards.validate()
        self.renderer = Renderer(self.cfg.physics, self.cfg.render)
        self._state: Optional[PhysicsState] = None
        self._aborted = False

    def obs_spec(self) -> ObsSpec:
        return observation_spec(self.cfg)

    @property
    def state(self) -> PhysicsState:
        return self._state

    @property
    def filter_state(self) -> ActionFilterState:
        return self._filter

    @property
    def newest_frame(self) -> np.ndarray:
        return self._frames[-1]

    def reset(self, rng: np.random.Generator) -> Observation:
        self._state = physics_reset(rng, self.cfg.physics)
        self._filter = ActionFilterState.initial(ACTION_DIM)
        self._prev_raw = np.zeros(ACTION_DIM, dtype=np.float32)
        frame = self.renderer.render(self._state)
        self._frames = [frame, frame, frame]
        self._aborted = False
        self._obs = self._observe(fd_ball=np.zeros(2), fd_cup=np.zeros(2))
        return self._obs

    def step(self, raw_action):
        """Apply one 50 ms control step. Returns (obs, rewards, aborted)."""
        if self._state is None:
            raise RuntimeError("reset the environment first")
        if self._aborted:
            raise RuntimeError("episode aborted; reset required")
        phys = self.cfg.physics
        raw = np.asarray(raw_action, dtype=np.float32).reshape(ACTION_DIM)
        command, filt = filter_action(raw, self._filter, phys.control_dt,
                                      phys.max_speed)
        prev_ball = self._state.ball_pos
        prev_cup = self._state.cup_pos
        new_state = physics_step(self._state, command, phys)
        if not new_state.finite():
            self._aborted = True
            log.error("non-finite physics state at t=%d (command %s), "
                      "aborting episode", self._state.t, command)
            return self._obs, np.zeros(NUM_REWARDS), True
        self._state = new_state
        self._filter = filt
        rewards = compute_rewards(new_state, raw, phys, self.cfg.rewards)
        self._frames = self._frames[1:] + [self.renderer.render(new_state)]
        self._prev_raw = raw
        dt = phys.control_dt
        self._obs = self._observe(
            fd_ball=(new_state.ball_pos - prev_ball) / dt,
            fd_cup=(new_state.cup_pos - prev_cup) / dt)
        return self._obs, rewards, False

    def _observe(self, fd_ball, fd_cup) -> Observation:
        s = self._state
        proprio = np.empty(PROPRIO_DIM, dtype=np.float32)
        proprio[0:2] = s.cup_pos
        proprio[2:4] = s.cup_vel
        proprio[4:6] = self._prev_raw
        proprio[6:8] = self._filter.y
        features = np.empty(FEATURE_DIM, dtype=np.float32)
        features[0:2] = s.ball_pos - s.cup_pos
        features[2:4] = fd_ball
        features[4:6] = s.cup_pos
        features[6:8] = fd_cup
        return Observation(proprio=proprio, features=features,
                           pixels=np.stack(self._frames))
