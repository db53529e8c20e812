"""Actor loop, evaluation protocol, and the experiment driver.

One experiment = several independent seeds. Per seed: collect episodes
under uniformly scheduled intentions, feed a shared replay, take paced
learner steps, and periodically evaluate the catch task with the policy
mean. Results land in one learning-curve CSV per seed plus a final
checkpoint; seeds whose checkpoint already reports the full episode
budget are skipped on re-run.

Two execution modes. "sequential" strictly alternates episodes and
learner steps in one thread and is bit-reproducible for a fixed seed.
"threaded" runs the actor against published actor snapshots while the
learner trains concurrently, paced to the same steps-per-env-step
ratio; replay access is serialized through a lock.
"""

import csv
import logging
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from bicup.config import ExperimentConfig, serialize_config
from bicup.env.bic import BallInCupEnv, Observation, observation_spec
from bicup.gated import GatedNetworks, log_prob, sample_action
from bicup.learner import Learner
from bicup.nn.checkpoint import load_params, save_params
from bicup.replay import ReplayBuffer, Trajectory
from bicup.schedule import schedule_intention

log = logging.getLogger(__name__)

CURVE_HEADER = ["episode", "task", "eval_return", "catch",
                "first_catch_step", "learner_steps", "seed"]

# reward column of the catch indicator in the environment vector
CATCH_REWARD = 4


def _obs_dict(obs: Observation) -> dict:
    return {"proprio": obs.proprio[None], "features": obs.features[None],
            "image": obs.pixels[None]}


# log density of the uniform policy on the [-1, 1] action box
_LOG_UNIFORM = ACTION_DIM_LOG = None  # set below once ACTION_DIM is known


def build_engine(cfg: ExperimentConfig) -> GatedNetworks:
    return GatedNetworks(observation_spec(cfg.env), cfg.sizes,
                         cfg.task_specs(), dtype=np.float32)


def run_episode(env: BallInCupEnv, engine: GatedNetworks, actor_params: dict,
                tasks: list, rng: np.random.Generator, episode_len: int,
                switch_period: int, collect_frames: bool,
                episode_id: int = 0,
                explore_eps: float = 0.0) -> Optional[Trajectory]:
    """Collect one exploration episode under scheduled intentions.

    Rewards are stored per task (columns follow the task list), so every
    task can learn from this data no matter who executed. On an
    environment abort the trajectory is truncated at the last valid
    transition and flagged terminal; returns None if nothing valid
    happened before the abort.

    explore_eps > 0 mixes in uniform actions on [-1, 1]: each step is
    uniform with that probability, sampled from the intention policy
    otherwise. The recorded behavior log-probability is the mixture's,
    so off-policy corrections stay exact.
    """
    by_id = {t.task_id: t for t in tasks}
    reward_cols = np.array([t.reward_id - 1 for t in tasks])
    obs = env.reset(rng)
    proprio, features = [obs.proprio], [obs.features]
    frames = [env.newest_frame] * 3 if collect_frames else None
    actions, logps, rewards, executed = [], [], [], []
    current = -1
    for step in range(episode_len):
        if step % switch_period == 0:
            current = schedule_intention(tasks, rng)
        pol, _ = engine.actor_forward(actor_params, _obs_dict(obs),
                                      by_id[current])
        if explore_eps and rng.random() < explore_eps:
            action = rng.uniform(-1.0, 1.0, pol.mean.shape).astype(
                pol.mean.dtype)
        else:
            noise = rng.standard_normal(pol.mean.shape).astype(pol.mean.dtype,
                                                               copy=False)
            action = sample_action(pol, noise)
        logb = float(log_prob(pol, action)[0])
        if explore_eps:
            logb = _mixture_logb(explore_eps, logb, action[0])
        obs, r, aborted = env.step(action[0])
        if aborted:
            break
        actions.append(action[0].astype(np.float32, copy=False))
        logps.append(logb)
        rewards.append(r[reward_cols])
        executed.append(current)
        proprio.append(obs.proprio)
        features.append(obs.features)
        if collect_frames:
            frames.append(env.newest_frame)
    if not actions:
        log.warning("episode %d aborted on the first step, dropped", episode_id)
        return None
    t = len(actions)
    terminal = np.zeros(t, dtype=bool)
    terminal[-1] = t < episode_len
    return Trajectory(
        episode_id=episode_id,
        proprio=np.stack(proprio),
        features=np.stack(features),
        frames=np.stack(frames) if collect_frames else None,
        actions=np.stack(actions),
        log_probs=np.asarray(logps, dtype=np.float64),
        rewards=np.stack(rewards),
        executed=np.asarray(executed, dtype=np.int32),
        terminal=terminal)


@dataclass
class EvalResult:
    eval_return: float
    catch: bool
    first_catch_step: int          # -1 when the ball never lands in


def evaluate(env: BallInCupEnv, engine: GatedNetworks, actor_params: dict,
             task, rng: np.random.Generator, episode_len: int) -> EvalResult:
    """One evaluation episode: mean actions, no exploration noise.

    Returns the summed task reward; touches neither parameters nor
    replay.
    """
    obs = env.reset(rng)
    total = 0.0
    catch_step = -1
    for step in range(episode_len):
        pol, _ = engine.actor_forward(actor_params, _obs_dict(obs), task)
        obs, r, aborted = env.step(pol.mean[0])
        if aborted:
            break
        total += float(r[task.reward_id - 1])
        if catch_step < 0 and r[CATCH_REWARD] == 1.0:
            catch_step = step
    return EvalResult(eval_return=total, catch=catch_step >= 0,
                      first_catch_step=catch_step)


class _SharedReplay:
    """Single-writer replay access for the threaded mode."""

    def __init__(self, buffer: ReplayBuffer):
        self.buffer = buffer
        self.lock = threading.Lock()

    def __len__(self):
        with self.lock:
            return len(self.buffer)

    def append(self, traj: Trajectory) -> None:
        with self.lock:
            self.buffer.append(traj)

    def sample_snippets(self, batch_size: int, length: int):
        with self.lock:
            return self.buffer.sample_snippets(batch_size, length)


class _SeedRun:
    """Everything owned by one seed of one experiment."""

    def __init__(self, cfg: ExperimentConfig, seed: int, out_dir: Path):
        self.cfg = cfg
        self.seed = seed
        self.out_dir = out_dir
        self.tasks = cfg.task_specs()
        self.eval_tasks = [t for t in self.tasks if t.reward_id == 5]
        self.curve_path = out_dir / f"curve_seed{seed}.csv"
        self.ck_path = out_dir / f"checkpoint_seed{seed}.npz"

        streams = np.random.SeedSequence(seed).spawn(5)
        init_s, self.ep_rng, self.learn_rng, self.buf_rng, self.eval_rng = (
            streams[0], *map(np.random.default_rng, streams[1:]))
        self.env = BallInCupEnv(cfg.env)
        self.eval_env = BallInCupEnv(cfg.env)
        self.engine = GatedNetworks(observation_spec(cfg.env), cfg.sizes,
                                    self.tasks, dtype=np.float32)
        self.store = self.engine.init_store(np.random.default_rng(init_s))
        self.collect_frames = "image" in self.engine.groups
        buffer = ReplayBuffer(cfg.replay_capacity, max_use=cfg.max_use,
                              rng=self.buf_rng, groups=self.engine.groups,
                              max_episode_len=cfg.episode_len)
        self.replay = _SharedReplay(buffer)
        metrics = (out_dir / f"learner_seed{seed}.csv"
                   if cfg.learner_metrics else None)
        self.learner = Learner(self.engine, self.store, self.tasks,
                               cfg.learner, self.learn_rng, metrics)

    # ---- shared pieces ----

    def _collect(self, episode: int, actor_params: dict) -> int:
        traj = run_episode(self.env, self.engine, actor_params, self.tasks,
                           self.ep_rng, self.cfg.episode_len,
                           self.cfg.switch_period, self.collect_frames,
                           episode_id=episode,
                           explore_eps=self.cfg.explore_eps)
        if traj is None:
            return 0
        self.replay.append(traj)
        return len(traj)

    def _eval_rows(self, episode: int, actor_params: dict, writer) -> None:
        if (episode + 1) % self.cfg.eval_every:
            return
        for task in self.eval_tasks:
            res = evaluate(self.eval_env, self.engine, actor_params, task,
                           self.eval_rng, self.cfg.episode_len)
            writer.writerow([episode, task.label, float(res.eval_return),
                             int(res.catch), res.first_catch_step,
                             self.learner.steps, self.seed])

    def _checkpoint(self, episode: int) -> None:
        meta = {"config": serialize_config(self.cfg), "seed": self.seed,
                "episode": episode}
        save_params(self.ck_path, self.store.tree(), meta)

    def _maybe_checkpoint(self, episode: int) -> None:
        # in threaded mode a periodic checkpoint may pair actor and
        # critic trees from adjacent learner steps; each component dict
        # is still internally consistent (whole-dict swaps)
        every = self.cfg.checkpoint_every
        if every and (episode + 1) % every == 0:
            self._checkpoint(episode + 1)

    # ---- sequential mode ----

    def run_sequential(self) -> None:
        debt = 0.0
        with open(self.curve_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CURVE_HEADER)
            for episode in range(self.cfg.episodes):
                steps = self._collect(episode, self.store.actor)
                debt += steps * self.cfg.learner_ratio
                while debt >= 1.0:
                    if self.learner.step(self.replay) is None:
                        break
                    debt -= 1.0
                self._eval_rows(episode, self.store.actor, writer)
                f.flush()
                self._maybe_checkpoint(episode)
        self._checkpoint(self.cfg.episodes)

    # ---- threaded mode ----

    def run_threaded(self) -> None:
        state = {"env_steps": 0, "snapshot": self.store.snapshot_actor(),
                 "done": False, "stop": False, "error": None}
        lock = threading.Lock()

        def actor_loop():
            try:
                with open(self.curve_path, "w", newline="") as f:
                    writer = csv.writer(f)
                    writer.writerow(CURVE_HEADER)
                    for episode in range(self.cfg.episodes):
                        with lock:
                            if state["stop"]:
                                return
                            params = state["snapshot"]
                        steps = self._collect(episode, params)
                        with lock:
                            state["env_steps"] += steps
                        self._eval_rows(episode, params, writer)
                        f.flush()
                        self._maybe_checkpoint(episode)
            except BaseException as e:     # surfaced by the main thread
                state["error"] = e
            finally:
                state["done"] = True

        actor = threading.Thread(target=actor_loop, name="actor")
        actor.start()
        try:
            while True:
                with lock:
                    allowance = state["env_steps"] * self.cfg.learner_ratio
                    done = state["done"]
                if self.learner.steps >= allowance:
                    if done:
                        break
                    time.sleep(0.001)
                    continue
                if self.learner.step(self.replay) is None:
                    if done:
                        break
                    time.sleep(0.001)
                    continue
                with lock:
                    state["snapshot"] = self.store.snapshot_actor()
        finally:
            with lock:
                state["stop"] = True
            actor.join()
        if state["error"] is not None:
            raise state["error"]
        self._checkpoint(self.cfg.episodes)

    def run(self) -> Path:
        if self.cfg.mode == "sequential":
            self.run_sequential()
        else:
            self.run_threaded()
        self.learner.close()
        return self.curve_path


def _seed_complete(ck_path: Path, cfg: ExperimentConfig) -> bool:
    if not ck_path.exists():
        return False
    try:
        _, meta = load_params(ck_path)
    except (ValueError, OSError):
        return False
    return (meta.get("episode") == cfg.episodes
            and meta.get("config") == serialize_config(cfg))


def run_experiment(cfg: ExperimentConfig) -> list:
    """Train every seed; returns the per-seed learning-curve CSV paths."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(serialize_config(cfg))
    paths = []
    for seed in cfg.seeds:
        ck = out_dir / f"checkpoint_seed{seed}.npz"
        if _seed_complete(ck, cfg):
            log.info("seed %d already complete, skipping", seed)
            paths.append(out_dir / f"curve_seed{seed}.csv")
            continue
        t0 = time.time()
        run = _SeedRun(cfg, seed, out_dir)
        paths.append(run.run())
        log.info("seed %d finished in %.1f s (%d learner steps)",
                 seed, time.time() - t0, run.learner.steps)
    return paths


def read_curve(path) -> dict:
    """Curve CSV -> dict of numpy columns."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = {}
    for name in CURVE_HEADER:
        col = [r[name] for r in rows]
        if name == "task":
            out[name] = np.array(col)
        elif name == "eval_return":
            out[name] = np.array([float(v) for v in col])
        else:
            out[name] = np.array([int(v) for v in col])
    return out
