"""First-order low-pass on raw policy actions.

Raw actions live in [-1, 1] per dimension; the filter smooths them with
a 0.5 Hz cutoff before scaling to the velocity command. The filter
state is float32 end to end because it is exposed verbatim inside the
proprioceptive observation.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

CUTOFF_HZ = 0.5


def filter_beta(control_dt: float) -> float:
    """Discrete smoothing factor dt / (tau + dt) for the RC time constant
    tau = 1 / (2 pi f_c). At 20 Hz this is about 0.13576."""
    tau = 1.0 / (2.0 * math.pi * CUTOFF_HZ)
    return control_dt / (tau + control_dt)


@dataclass
class ActionFilterState:
    y: np.ndarray                 # filtered action, float32, [-1, 1] units
    clipped_steps: int = 0

    @staticmethod
    def initial(dim: int = 2) -> "ActionFilterState":
        return ActionFilterState(y=np.zeros(dim, dtype=np.float32))


def filter_action(raw, state: ActionFilterState, control_dt: float,
                  max_speed: float):
    """Clip, smooth, scale. Returns (velocity command, new state)."""
    raw = np.asarray(raw, dtype=np.float32)
    clipped = np.clip(raw, -1.0, 1.0)
    if not np.array_equal(clipped, raw):
        state = ActionFilterState(y=state.y, clipped_steps=state.clipped_steps + 1)
        log.debug("raw action %s outside [-1, 1], clipped", raw)
    beta = np.float32(filter_beta(control_dt))
    y = state.y + beta * (clipped - state.y)
    command = max_speed * y.astype(np.float64)
    return command, ActionFilterState(y=y, clipped_steps=state.clipped_steps)
