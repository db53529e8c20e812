"""Episode replay with snippet-window sampling.

Trajectories arrive whole and stay contiguous; sampled snippets are
fixed-length windows that never cross an episode boundary (they freely
cross intention switches inside an episode). Every serving bumps the
use count of the transitions in the window; once a transition hits the
use cap it can no longer be served, and fully exhausted or over-capacity
episodes are dropped oldest-first.

Camera frames are stored deduplicated: one (T+3, H, W) array per
episode instead of a (3, H, W) stack per step. Window stacks are
rebuilt on sampling, which is exact because consecutive observation
stacks share frames (validated on append).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class BufferUnderflow(RuntimeError):
    """Not enough eligible data to sample; callers should wait."""


@dataclass
class Transition:
    """Single-step view, mostly for logs and tests."""

    proprio: np.ndarray
    features: np.ndarray
    pixels: Optional[np.ndarray]
    action: np.ndarray
    behavior_log_prob: float
    reward_vector: np.ndarray
    executed_task: int
    terminal: bool
    use_count: int = 0


@dataclass
class Trajectory:
    """One episode: T transitions plus the final observation.

    frames holds the deduplicated camera history: frames[t:t+3] is the
    pixel stack of observation t (the initial stack repeats the first
    frame, so frames[0] == frames[1] == frames[2]). frames may be None
    when no configured task consumes pixels.
    """

    episode_id: int
    proprio: np.ndarray            # (T+1, P)
    features: np.ndarray           # (T+1, F)
    frames: Optional[np.ndarray]   # (T+3, H, W)
    actions: np.ndarray            # (T, d)
    log_probs: np.ndarray          # (T,)
    rewards: np.ndarray            # (T, K)
    executed: np.ndarray           # (T,)
    terminal: np.ndarray           # (T,)

    def __len__(self) -> int:
        return self.actions.shape[0]

    def pixel_stack(self, t: int) -> np.ndarray:
        return self.frames[t:t + 3]

    def validate(self, max_len: int) -> None:
        t = len(self)
        if t < 1:
            raise ValueError("empty trajectory")
        if t > max_len:
            raise ValueError(f"trajectory length {t} exceeds max {max_len}")
        if self.proprio.shape[0] != t + 1 or self.features.shape[0] != t + 1:
            raise ValueError("observation arrays must hold T+1 steps")
        if self.frames is not None and self.frames.shape[0] != t + 3:
            raise ValueError(f"frames must hold T+3 entries, got "
                             f"{self.frames.shape[0]} for T={t}")
        for name in ("log_probs", "rewards", "executed", "terminal"):
            if getattr(self, name).shape[0] != t:
                raise ValueError(f"{name} must hold T entries")
        if not np.all(np.isfinite(self.log_probs)):
            raise ValueError("behavior log-probs must be finite")
        if np.any(self.terminal[:-1]):
            raise ValueError("terminal flag before the final transition")


@dataclass
class SnippetBatch:
    """Batch of windows: obs arrays cover steps j..j+L, scalars j..j+L-1."""

    obs: dict                      # group -> (B, L+1, ...)
    actions: np.ndarray            # (B, L, d)
    log_probs: np.ndarray          # (B, L)
    rewards: np.ndarray            # (B, L, K)
    executed: np.ndarray           # (B, L)
    terminal: np.ndarray           # (B, L)
    indices: list = field(default_factory=list)   # (episode_id, start)

    @property
    def batch(self) -> int:
        return self.actions.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[1]


class ReplayBuffer:
    def __init__(self, capacity: int, max_use: int = 2500,
                 rng: Optional[np.random.Generator] = None,
                 groups: tuple = ("proprio", "features", "image"),
                 max_episode_len: int = 500):
        if capacity < max_episode_len:
            raise ValueError(f"capacity {capacity} below one episode "
                             f"({max_episode_len})")
        self.capacity = capacity
        self.max_use = max_use
        self.rng = rng or np.random.default_rng()
        self.groups = tuple(groups)
        self.max_episode_len = max_episode_len
        self._trajs: list[Trajectory] = []
        self._use: list[np.ndarray] = []
        self.transitions = 0
        self.total_appended = 0
        self.total_served = 0

    def __len__(self) -> int:
        return self.transitions

    def append(self, traj: Trajectory) -> None:
        traj.validate(self.max_episode_len)
        if "image" in self.groups and traj.frames is None:
            raise ValueError("buffer stores pixels but trajectory has no frames")
        self._trajs.append(traj)
        self._use.append(np.zeros(len(traj), dtype=np.int32))
        self.transitions += len(traj)
        self.total_appended += len(traj)
        self._evict()

    def _evict(self) -> None:
        # oldest-first beyond capacity, plus fully exhausted episodes
        keep_from = 0
        while (self.transitions - sum(len(t) for t in self._trajs[:keep_from])
               > self.capacity):
            keep_from += 1
        alive_t, alive_u = [], []
        for i, (traj, use) in enumerate(zip(self._trajs, self._use)):
            if i < keep_from or np.min(use) >= self.max_use:
                self.transitions -= len(traj)
                continue
            alive_t.append(traj)
            alive_u.append(use)
        self._trajs, self._use = alive_t, alive_u

    def num_windows(self, length: int) -> int:
        return sum(max(0, len(t) - length + 1) for t in self._trajs)

    def _eligible(self, ti: int, start: int, length: int) -> bool:
        return int(np.max(self._use[ti][start:start + length])) < self.max_use

    def _draw(self, length: int) -> tuple:
        counts = np.array([max(0, len(t) - length + 1) for t in self._trajs])
        total = int(counts.sum())
        if total == 0:
            raise BufferUnderflow(f"no window of length {length} available")
        cum = np.cumsum(counts)
        for _ in range(64):
            u = int(self.rng.integers(total))
            ti = int(np.searchsorted(cum, u, side="right"))
            start = u - (int(cum[ti - 1]) if ti else 0)
            if self._eligible(ti, start, length):
                return ti, start
        # use caps have bitten: enumerate what is left and stay uniform
        pool = [(ti, s) for ti in range(len(self._trajs))
                for s in range(int(counts[ti])) if self._eligible(ti, s, length)]
        if not pool:
            raise BufferUnderflow(f"all windows of length {length} exhausted")
        return pool[int(self.rng.integers(len(pool)))]

    def sample_snippets(self, batch: int, length: int) -> SnippetBatch:
        if length < 1:
            raise ValueError(f"bad snippet length {length}")
        picks = [self._draw(length) for _ in range(batch)]
        first = self._trajs[picks[0][0]]
        obs: dict = {}
        for g in self.groups:
            if g == "image":
                continue
            width = getattr(first, g).shape[1]
            obs[g] = np.empty((batch, length + 1, width),
                              dtype=getattr(first, g).dtype)
        if "image" in self.groups:
            h, w = first.frames.shape[1:]
            obs["image"] = np.empty((batch, length + 1, 3, h, w),
                                    dtype=first.frames.dtype)
        out = SnippetBatch(
            obs=obs,
            actions=np.empty((batch, length) + first.actions.shape[1:],
                             dtype=first.actions.dtype),
            log_probs=np.empty((batch, length), dtype=first.log_probs.dtype),
            rewards=np.empty((batch, length) + first.rewards.shape[1:],
                             dtype=first.rewards.dtype),
            executed=np.empty((batch, length), dtype=first.executed.dtype),
            terminal=np.empty((batch, length), dtype=bool),
        )
        stack_idx = np.arange(length + 1)[:, None] + np.arange(3)[None, :]
        for b, (ti, s) in enumerate(picks):
            traj = self._trajs[ti]
            for g in self.groups:
                if g == "image":
                    out.obs[g][b] = traj.frames[s + stack_idx]
                else:
                    out.obs[g][b] = getattr(traj, g)[s:s + length + 1]
            out.actions[b] = traj.actions[s:s + length]
            out.log_probs[b] = traj.log_probs[s:s + length]
            out.rewards[b] = traj.rewards[s:s + length]
            out.executed[b] = traj.executed[s:s + length]
            out.terminal[b] = traj.terminal[s:s + length]
            out.indices.append((traj.episode_id, s))
            self._use[ti][s:s + length] += 1
        self.total_served += batch
        self._evict()
        return out


TRAJ_FORMAT_VERSION = 1


def save_trajectory(path, traj: Trajectory) -> None:
    arrays = {f: getattr(traj, f) for f in
              ("proprio", "features", "actions", "log_probs", "rewards",
               "executed", "terminal")}
    if traj.frames is not None:
        arrays["frames"] = traj.frames
    np.savez_compressed(path, __version__=np.array(TRAJ_FORMAT_VERSION),
                        episode_id=np.array(traj.episode_id), **arrays)


def load_trajectory(path) -> Trajectory:
    with np.load(path) as z:
        if int(z["__version__"]) != TRAJ_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported trajectory version")
        return Trajectory(
            episode_id=int(z["episode_id"]),
            proprio=z["proprio"], features=z["features"],
            frames=z["frames"] if "frames" in z.files else None,
            actions=z["actions"], log_probs=z["log_probs"],
            rewards=z["rewards"], executed=z["executed"],
            terminal=z["terminal"])
