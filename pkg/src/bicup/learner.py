"""Multi-task learner: critic regression onto corrected targets plus a
reparameterized entropy-regularized policy update, one sweep over every
configured task per step.

The policy objective per task is mean_n [ Q(s, a) - alpha * log pi(a|s) ]
with a = mean + std * noise, maximized by gradient ascent. Gradients
reach the actor only through a and through log pi's explicit mean/std
dependence; critic parameters are never touched by the policy update
(their gradients from it are structurally zero).

Encoder outputs are computed once per parameter set and batch, then
shared: across tasks, between the critic loss and the policy update's
critic evaluations, and across trunk passes with different actions.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bicup.gated import entropy, log_prob, sample_action
from bicup.nn.adam import adam_init, adam_step
from bicup.replay import BufferUnderflow
from bicup.retrace import RetraceConfig, retrace_targets, snippet_rows

log = logging.getLogger(__name__)


@dataclass
class LearnerConfig:
    retrace: RetraceConfig = field(default_factory=RetraceConfig)
    batch_size: int = 32
    snippet_len: int = 20
    lr: float = 1e-4
    target_period: int = 1000
    min_replay: int = 2000
    actor_decay: float = 0.0     # decoupled weight decay on actor params

    def validate(self) -> None:
        self.retrace.validate()
        if self.batch_size < 1 or self.snippet_len < 1:
            raise ValueError("batch_size and snippet_len must be positive")
        if self.target_period < 1:
            raise ValueError("target_period must be positive")
        if self.actor_decay < 0:
            raise ValueError("actor_decay must be >= 0")


@dataclass
class LearnerMetrics:
    step: int
    critic_loss: dict            # task_id -> float
    policy_objective: dict       # task_id -> float
    entropy: dict                # task_id -> float
    grad_norm: float
    skipped_snippets: int = 0


def flatten_tree(tree: dict) -> dict:
    return {(c, k): v for c, d in tree.items() for k, v in d.items()}


def unflatten_tree(flat: dict) -> dict:
    tree: dict = {}
    for (c, k), v in flat.items():
        tree.setdefault(c, {})[k] = v
    return tree


def grad_global_norm(*trees) -> float:
    total = 0.0
    for tree in trees:
        for comp in tree.values():
            for g in comp.values():
                total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


class MetricsWriter:
    HEADER = ["step", "task_id", "critic_loss", "policy_objective", "entropy",
              "grad_norm"]

    def __init__(self, path):
        self.path = path
        self._file = open(path, "w", newline="")
        self._csv = csv.writer(self._file)
        self._csv.writerow(self.HEADER)

    def write(self, m: LearnerMetrics, tasks) -> None:
        for t in tasks:
            tid = t.task_id
            self._csv.writerow([m.step, tid,
                                f"{m.critic_loss[tid]:.6g}",
                                f"{m.policy_objective[tid]:.6g}",
                                f"{m.entropy[tid]:.6g}",
                                f"{m.grad_norm:.6g}"])
        self._file.flush()

    def close(self) -> None:
        self._file.close()


class Learner:
    def __init__(self, engine, store, tasks: list, cfg: LearnerConfig,
                 rng: np.random.Generator, metrics_path=None):
        cfg.validate()
        self.engine = engine
        self.store = store
        self.tasks = list(tasks)
        self.cfg = cfg
        self.rng = rng
        self.steps = 0
        self.skipped_snippets = 0
        self.adam_actor = adam_init(flatten_tree(store.actor), lr=cfg.lr)
        self.adam_critic = adam_init(flatten_tree(store.critic), lr=cfg.lr)
        self.metrics = MetricsWriter(metrics_path) if metrics_path else None
        self._policy_groups = tuple(sorted(
            {g for t in tasks for g in t.policy_filter.enabled()}))
        self._critic_groups = tuple(sorted(
            {g for t in tasks for g in t.critic_filter.enabled()}))

    def close(self) -> None:
        if self.metrics:
            self.metrics.close()

    # ---- loss passes ----

    def critic_pass(self, batch, targets: dict):
        """Returns (grads tree, per-task loss, per-task bad-row mask)."""
        engine, store = self.engine, self.store
        b, length = batch.batch, batch.length
        n = b * length
        sa_rows, _ = snippet_rows(b, length)
        obs_sa = {g: np.reshape(a, (b * (length + 1),) + a.shape[2:])[sa_rows]
                  for g, a in batch.obs.items()}
        actions = batch.actions.reshape(n, -1)
        emb = engine.embed("critic", store.critic, obs_sa, self._critic_groups)
        applies, q_pred = [], {}
        for group in engine.group_tasks(self.tasks, "critic"):
            q, tape = engine.critic_apply_group(store.critic, emb, actions, group)
            q_pred.update(q)
            applies.append(tape)
        d_out, losses, bad_rows = {}, {}, {}
        for col, task in enumerate(self.tasks):
            tid = task.task_id
            tgt = targets[tid]
            bad = ~np.all(np.isfinite(tgt), axis=1)          # (B,) snippets
            if np.any(bad):
                self.skipped_snippets += int(np.sum(bad))
                log.warning("skipping %d snippets with non-finite targets "
                            "(task %d)", int(np.sum(bad)), tid)
            diff = q_pred[tid].astype(np.float64).reshape(b, length) - tgt
            diff[bad] = 0.0
            valid = max(1, (b - int(np.sum(bad))) * length)
            losses[tid] = float(np.sum(diff * diff) / valid)
            d_out[tid] = (2.0 / valid) * diff.reshape(n)
            bad_rows[tid] = bad
        grads, d_emb = {}, {}
        for tape in applies:
            engine.apply_group_backward("critic", tape, d_out, d_emb, grads)
        grads.update(engine.embed_backward(emb, d_emb))
        return grads, losses, bad_rows, emb, obs_sa

    def policy_pass(self, batch, critic_emb, obs_sa, bad_rows: dict):
        """Returns (actor grads tree, per-task objective, per-task entropy)."""
        engine, store = self.engine, self.store
        cfg = self.cfg.retrace
        b, length = batch.batch, batch.length
        n = b * length
        emb_a = engine.embed("actor", store.actor, obs_sa, self._policy_groups)
        applies, policies = [], {}
        for group in engine.group_tasks(self.tasks, "policy"):
            pol, tape = engine.actor_apply_group(store.actor, emb_a, group)
            policies.update(pol)
            applies.append(tape)
        d_out, objectives, entropies = {}, {}, {}
        alpha = cfg.entropy_weight
        for task in self.tasks:
            tid = task.task_id
            pol = policies[tid]
            noise = self.rng.standard_normal(pol.mean.shape).astype(pol.mean.dtype)
            action = sample_action(pol, noise)
            logp = log_prob(pol, action)
            q, q_tape = engine.critic_apply_group(store.critic, critic_emb,
                                                  action, [task])
            valid_mask = ~np.repeat(bad_rows[tid], length)
            valid = max(1, int(np.sum(valid_mask)))
            objectives[tid] = float(
                np.sum((q[tid].astype(np.float64) - alpha * logp) * valid_mask)
                / valid)
            entropies[tid] = float(np.mean(entropy(pol)))
            # loss = -objective; d loss / d q = -mask / valid
            dq = (-valid_mask.astype(np.float64) / valid)
            scratch_grads, scratch_emb = {}, {}
            d_action = engine.apply_group_backward("critic", q_tape, {tid: dq},
                                                   scratch_emb, scratch_grads)
            d_action = d_action.astype(np.float64)
            # critic parameter/encoder gradients from the policy update are
            # structurally zero: scratch dicts are dropped here
            sigma = pol.std.astype(np.float64)
            eps = noise.astype(np.float64)
            coef = alpha * valid_mask[:, None] / valid
            d_action += coef * (-eps / sigma)
            d_mean = d_action + coef * (eps / sigma)
            d_std = d_action * eps + coef * (eps * eps - 1.0) / sigma
            d_out[tid] = (d_mean, d_std)
        grads, d_emb = {}, {}
        for tape in applies:
            engine.apply_group_backward("actor", tape, d_out, d_emb, grads)
        grads.update(engine.embed_backward(emb_a, d_emb))
        return grads, objectives, entropies

    # ---- full step ----

    def step(self, replay) -> Optional[LearnerMetrics]:
        if len(replay) < self.cfg.min_replay:
            return None
        try:
            batch = replay.sample_snippets(self.cfg.batch_size,
                                           self.cfg.snippet_len)
        except BufferUnderflow:
            return None
        targets = retrace_targets(self.engine, self.store, batch, self.tasks,
                                  self.cfg.retrace, self.rng)
        critic_grads, critic_losses, bad_rows, critic_emb, obs_sa = \
            self.critic_pass(batch, targets)
        actor_grads, objectives, entropies = self.policy_pass(
            batch, critic_emb, obs_sa, bad_rows)

        new_critic, self.adam_critic = adam_step(
            flatten_tree(self.store.critic), flatten_tree(critic_grads),
            self.adam_critic)
        self.store.critic = unflatten_tree(new_critic)
        new_actor, self.adam_actor = adam_step(
            flatten_tree(self.store.actor), flatten_tree(actor_grads),
            self.adam_actor, decay=self.cfg.actor_decay)
        self.store.actor = unflatten_tree(new_actor)

        self.steps += 1
        if self.steps % self.cfg.target_period == 0:
            self.store.sync_targets()

        m = LearnerMetrics(step=self.steps, critic_loss=critic_losses,
                           policy_objective=objectives, entropy=entropies,
                           grad_norm=grad_global_norm(critic_grads, actor_grads),
                           skipped_snippets=self.skipped_snippets)
        if self.metrics:
            self.metrics.write(m, self.tasks)
        return m
