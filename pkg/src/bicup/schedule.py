"""Uniform random intention scheduling.

Episodes are divided into fixed-length segments; at each segment start
the executing intention is redrawn uniformly over the configured tasks.
Every task learns from the data regardless of who collected it.
"""

import numpy as np


def schedule_intention(tasks: list, rng: np.random.Generator) -> int:
    """Draw the next executing intention, uniform over the task set."""
    if not tasks:
        raise ValueError("empty task set")
    return tasks[rng.integers(len(tasks))].task_id


def intention_sequence(tasks: list, rng: np.random.Generator,
                       episode_len: int, switch_period: int) -> np.ndarray:
    """Per-step executing intention ids for one episode."""
    if episode_len % switch_period:
        raise ValueError("switch_period must divide episode_len")
    ids = np.empty(episode_len, dtype=np.int32)
    for start in range(0, episode_len, switch_period):
        ids[start:start + switch_period] = schedule_intention(tasks, rng)
    return ids
