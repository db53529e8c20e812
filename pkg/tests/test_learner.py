"""Learner losses: gradient correctness, entropy term, full-step wiring."""

import csv

import numpy as np
import pytest

from bicup.gated import log_prob, sample_action
from bicup.learner import (Learner, LearnerConfig, LearnerMetrics,
                           MetricsWriter, flatten_tree, grad_global_norm,
                           unflatten_tree)
from bicup.replay import ReplayBuffer, Trajectory
from bicup.retrace import RetraceConfig, retrace_targets, snippet_rows
from helpers import build_engine, fd_check_tree
from test_retrace import make_batch


class SeqNoise:
    """Replays a fixed noise sequence; everything else is unseeded."""

    def __init__(self, arrays):
        self.arrays = list(arrays)

    def standard_normal(self, shape):
        arr = self.arrays.pop(0)
        assert arr.shape == tuple(shape), (arr.shape, shape)
        return arr.copy()


def make_learner(labels=("1F",), seed=0, **cfg_kw):
    engine, store, tasks = build_engine(labels, seed=seed)
    cfg_kw.setdefault("batch_size", 2)
    cfg_kw.setdefault("snippet_len", 3)
    cfg_kw.setdefault("min_replay", 0)
    cfg = LearnerConfig(**cfg_kw)
    learner = Learner(engine, store, tasks, cfg,
                      np.random.default_rng(seed + 100))
    return engine, store, tasks, learner


def zero_critic_heads(engine, store):
    for comp in store.critic:
        if comp.startswith("head/"):
            last = max(int(k[1:k.index(".")]) for k in store.critic[comp])
            for k in list(store.critic[comp]):
                if k.startswith(f"L{last}."):
                    store.critic[comp][k] = np.zeros_like(store.critic[comp][k])
    store.sync_targets()


class TestTreeHelpers:
    def test_flatten_round_trip(self):
        tree = {"a": {"x": np.ones(2)}, "b": {"y": np.zeros(1), "z": np.ones(3)}}
        flat = flatten_tree(tree)
        assert set(flat) == {("a", "x"), ("b", "y"), ("b", "z")}
        back = unflatten_tree(flat)
        assert np.array_equal(back["b"]["z"], tree["b"]["z"])

    def test_grad_norm(self):
        tree = {"a": {"x": np.array([3.0]), "y": np.array([4.0])}}
        assert grad_global_norm(tree) == 5.0


class TestPolicyGradients:
    def test_entropy_term_matches_closed_form(self):
        # with the critic head zeroed, q and dq/da vanish identically and
        # the policy loss reduces to alpha * mean(log pi). Its exact
        # sigma-gradient per element is -alpha / (N * sigma) and its
        # mean-gradient is exactly zero.
        engine, store, tasks, learner = make_learner(["1F"], seed=1)
        zero_critic_heads(engine, store)
        batch = make_batch(engine, tasks, b=2, length=3, seed=2)
        targets = retrace_targets(engine, store, batch, tasks,
                                  learner.cfg.retrace, np.random.default_rng(3))
        _, _, bad_rows, critic_emb, obs_sa = learner.critic_pass(batch, targets)
        n = batch.batch * batch.length
        noise = np.random.default_rng(4).standard_normal((n, 2))
        learner.rng = SeqNoise([noise])
        grads, objectives, _ = learner.policy_pass(batch, critic_emb, obs_sa,
                                                   bad_rows)
        # manual: fresh actor forward, push the closed-form d_std through
        tid = tasks[0].task_id
        pol, tape = engine.actor_forward_tasks(store.actor, obs_sa, tasks)
        alpha = learner.cfg.retrace.entropy_weight
        d_std = -alpha / (n * pol[tid].std.astype(np.float64))
        d_mean = np.zeros_like(d_std)
        manual = engine.actor_backward_tasks(tape, {tid: (d_mean, d_std)})
        for comp in manual:
            for k in manual[comp]:
                assert np.allclose(grads[comp][k], manual[comp][k],
                                   atol=1e-12), (comp, k)

    def test_full_policy_gradient_matches_finite_differences(self):
        engine, store, tasks, learner = make_learner(["1F", "2P"], seed=5)
        batch = make_batch(engine, tasks, b=2, length=2, seed=6)
        targets = retrace_targets(engine, store, batch, tasks,
                                  learner.cfg.retrace, np.random.default_rng(7))
        _, _, bad_rows, critic_emb, obs_sa = learner.critic_pass(batch, targets)
        n = batch.batch * batch.length
        rng = np.random.default_rng(8)
        noises = [rng.standard_normal((n, 2)) for _ in tasks]
        learner.rng = SeqNoise([x.copy() for x in noises])
        grads, objectives, _ = learner.policy_pass(batch, critic_emb, obs_sa,
                                                   bad_rows)
        alpha = learner.cfg.retrace.entropy_weight

        def neg_objective(actor_params):
            emb_a = engine.embed("actor", actor_params, obs_sa,
                                 learner._policy_groups)
            total = 0.0
            for i, task in enumerate(tasks):
                pol, _ = engine.actor_apply_group(actor_params, emb_a, [task])
                pol = pol[task.task_id]
                a = sample_action(pol, noises[i].astype(pol.mean.dtype))
                logp = log_prob(pol, a)
                q, _ = engine.critic_apply_group(store.critic, critic_emb,
                                                 a, [task])
                total += float(np.mean(q[task.task_id].astype(np.float64)
                                       - alpha * logp))
            return -total

        err = fd_check_tree(neg_objective, store.actor, grads, eps=1e-6)
        assert err <= 1e-4

    def test_policy_pass_touches_no_critic_components(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=9)
        batch = make_batch(engine, tasks, b=2, length=3, seed=10)
        targets = retrace_targets(engine, store, batch, tasks,
                                  learner.cfg.retrace, np.random.default_rng(11))
        _, _, bad_rows, critic_emb, obs_sa = learner.critic_pass(batch, targets)
        before = {c: {k: v.copy() for k, v in d.items()}
                  for c, d in store.critic.items()}
        critic_adam_step = learner.adam_critic.step
        grads, _, _ = learner.policy_pass(batch, critic_emb, obs_sa, bad_rows)
        assert set(grads) <= set(store.actor)
        assert learner.adam_critic.step == critic_adam_step
        for c in before:
            for k in before[c]:
                assert np.array_equal(before[c][k], store.critic[c][k])


class TestCriticPass:
    def test_perfect_targets_give_zero_loss_and_gradients(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=12)
        batch = make_batch(engine, tasks, b=2, length=3, seed=13)
        # build targets equal to the online predictions: loss must vanish
        n = batch.batch * batch.length
        sa_rows, _ = snippet_rows(batch.batch, batch.length)
        obs_sa = {g: np.reshape(a, (-1,) + a.shape[2:])[sa_rows]
                  for g, a in batch.obs.items()}
        emb = engine.embed("critic", store.critic, obs_sa,
                           learner._critic_groups)
        q, _ = engine.critic_apply_group(store.critic, emb,
                                         batch.actions.reshape(n, -1), tasks)
        tid = tasks[0].task_id
        targets = {tid: q[tid].astype(np.float64).reshape(batch.batch,
                                                          batch.length)}
        grads, losses, bad, _, _ = learner.critic_pass(batch, targets)
        assert losses[tid] <= 1e-15
        assert grad_global_norm(grads) <= 1e-6

    def test_nonfinite_targets_skip_snippets(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=14)
        batch = make_batch(engine, tasks, b=3, length=3, seed=15)
        targets = retrace_targets(engine, store, batch, tasks,
                                  learner.cfg.retrace, np.random.default_rng(16))
        tid = tasks[0].task_id
        targets[tid][1, 2] = np.nan
        grads, losses, bad, _, _ = learner.critic_pass(batch, targets)
        assert learner.skipped_snippets == 1
        assert bad[tid].tolist() == [False, True, False]
        assert np.isfinite(losses[tid])
        for comp in grads.values():
            for g in comp.values():
                assert np.all(np.isfinite(g))

    def test_critic_gradients_match_finite_differences(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=17)
        batch = make_batch(engine, tasks, b=2, length=2, seed=18)
        targets = retrace_targets(engine, store, batch, tasks,
                                  learner.cfg.retrace, np.random.default_rng(19))
        grads, losses, bad, _, _ = learner.critic_pass(batch, targets)
        tid = tasks[0].task_id
        n = batch.batch * batch.length
        sa_rows, _ = snippet_rows(batch.batch, batch.length)
        obs_sa = {g: np.reshape(a, (-1,) + a.shape[2:])[sa_rows]
                  for g, a in batch.obs.items()}

        def probe(critic_params):
            emb = engine.embed("critic", critic_params, obs_sa,
                               learner._critic_groups)
            q, _ = engine.critic_apply_group(critic_params, emb,
                                             batch.actions.reshape(n, -1), tasks)
            diff = q[tid].astype(np.float64).reshape(batch.batch, -1) \
                - targets[tid]
            return float(np.mean(diff * diff))

        assert fd_check_tree(probe, store.critic, grads, eps=1e-6) <= 1e-4


def tiny_trajectory(engine, tasks, episode_id, t=20, seed=None):
    rng = np.random.default_rng(seed if seed is not None else episode_id)
    spec = engine.obs_spec
    frames = rng.uniform(0, 1, (t + 3, spec.image_shape[1],
                                spec.image_shape[2])).astype(np.float32)
    frames[1] = frames[0]
    frames[2] = frames[0]
    return Trajectory(
        episode_id=episode_id,
        proprio=rng.standard_normal((t + 1, spec.vector_sizes["proprio"]))
        .astype(np.float32),
        features=rng.standard_normal((t + 1, spec.vector_sizes["features"]))
        .astype(np.float32),
        frames=frames,
        actions=rng.uniform(-1, 1, (t, 2)).astype(np.float32),
        log_probs=rng.uniform(-2, -0.5, t),
        rewards=rng.uniform(0, 1, (t, len(tasks))),
        executed=rng.integers(0, len(tasks), t).astype(np.int32),
        terminal=np.zeros(t, dtype=bool),
    )


class TestLearnerStep:
    def test_waits_until_min_replay(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=20,
                                                     min_replay=1000)
        buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(0),
                           max_episode_len=50)
        buf.append(tiny_trajectory(engine, tasks, 0))
        assert learner.step(buf) is None

    def test_step_updates_parameters_and_counters(self):
        engine, store, tasks, learner = make_learner(["1F", "2P"], seed=21,
                                                     batch_size=3,
                                                     snippet_len=4)
        buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(1),
                           max_episode_len=50)
        for e in range(3):
            buf.append(tiny_trajectory(engine, tasks, e))
        before = store.actor["trunk"]["L0.W"].copy()
        before_c = store.critic["trunk"]["L0.W"].copy()
        m = learner.step(buf)
        assert isinstance(m, LearnerMetrics)
        assert m.step == 1
        assert not np.array_equal(before, store.actor["trunk"]["L0.W"])
        assert not np.array_equal(before_c, store.critic["trunk"]["L0.W"])
        assert set(m.critic_loss) == {t.task_id for t in tasks}
        assert np.isfinite(m.grad_norm)

    def test_actor_decay_shrinks_params_and_spares_critic(self):
        # identical data and rng: the decayed run differs from the plain
        # one by exactly lr * decay * theta on every actor parameter
        decay = 0.05
        runs = {}
        for d in (0.0, decay):
            engine, store, tasks, learner = make_learner(["1F"], seed=25,
                                                         actor_decay=d)
            buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(4),
                               max_episode_len=50)
            buf.append(tiny_trajectory(engine, tasks, 0, t=30))
            before = {c: {k: v.copy() for k, v in store.actor[c].items()}
                      for c in store.actor}
            learner.step(buf)
            runs[d] = (before, store, learner.cfg.lr)
        before, plain, lr = runs[0.0]
        _, decayed, _ = runs[decay]
        for comp in plain.actor:
            for k in plain.actor[comp]:
                expect = plain.actor[comp][k] - lr * decay * before[comp][k]
                assert np.allclose(decayed.actor[comp][k], expect,
                                   rtol=0, atol=1e-12)
        for comp in plain.critic:
            for k in plain.critic[comp]:
                assert np.array_equal(decayed.critic[comp][k],
                                      plain.critic[comp][k])

    def test_targets_sync_on_period(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=22,
                                                     target_period=2)
        buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(2),
                           max_episode_len=50)
        buf.append(tiny_trajectory(engine, tasks, 0, t=30))
        learner.step(buf)
        drifted = not np.array_equal(store.actor["trunk"]["L0.W"],
                                     store.actor_target["trunk"]["L0.W"])
        assert drifted
        learner.step(buf)
        assert np.array_equal(store.actor["trunk"]["L0.W"],
                              store.actor_target["trunk"]["L0.W"])
        assert np.array_equal(store.critic["trunk"]["L0.W"],
                              store.critic_target["trunk"]["L0.W"])

    def test_sync_count_over_many_steps(self):
        engine, store, tasks, learner = make_learner(["1F"], seed=23,
                                                     target_period=3)
        buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(3),
                           max_episode_len=50)
        buf.append(tiny_trajectory(engine, tasks, 0, t=30))
        syncs = 0
        for i in range(7):
            learner.step(buf)
            if np.array_equal(store.actor["trunk"]["L0.W"],
                              store.actor_target["trunk"]["L0.W"]):
                syncs += 1
        assert syncs == 7 // 3

    def test_metrics_csv_schema(self, tmp_path):
        engine, store, tasks = build_engine(["1F", "2P"], seed=24)
        cfg = LearnerConfig(batch_size=2, snippet_len=3, min_replay=0)
        path = tmp_path / "metrics.csv"
        learner = Learner(engine, store, tasks, cfg,
                          np.random.default_rng(25), metrics_path=path)
        buf = ReplayBuffer(capacity=2000, rng=np.random.default_rng(4),
                           max_episode_len=50)
        buf.append(tiny_trajectory(engine, tasks, 0))
        learner.step(buf)
        learner.step(buf)
        learner.close()
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == MetricsWriter.HEADER
        assert len(rows) == 1 + 2 * len(tasks)
        assert rows[1][0] == "1" and rows[1][1] == "0"
        for row in rows[1:]:
            assert all(np.isfinite(float(v)) for v in row[2:])
