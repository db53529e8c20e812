"""Gated network engine: filter semantics, gradients, Gaussian heads."""

import numpy as np
import pytest
import scipy.stats

from bicup.gated import (GatedNetworks, GaussianPolicy, entropy, log_prob,
                         merge_groups, sample_action)
from bicup.tasks import (FEATURES_FILTER, PIXELS_FILTER, FilterVector, TaskSpec,
                         task_from_label, tasks_from_labels)
from helpers import build_engine, fd_check_tree, random_obs, small_obs_spec


class TestFilters:
    def test_filter_without_proprio_rejected(self):
        with pytest.raises(ValueError, match="Markov"):
            FilterVector(proprio=False, features=True, image=False).validate()

    def test_filter_with_only_proprio_rejected(self):
        with pytest.raises(ValueError, match="Markov"):
            FilterVector(proprio=True, features=False, image=False).validate()

    def test_label_parsing(self):
        t = task_from_label("5F", 3)
        assert t.reward_id == 5
        assert t.policy_filter == FEATURES_FILTER
        assert t.critic_filter == FEATURES_FILTER
        p = task_from_label("2P", 0)
        assert p.policy_filter == PIXELS_FILTER

    def test_asymmetric_label_gets_features_critic(self):
        t = task_from_label("2P", 0, asymmetric=True)
        assert t.policy_filter == PIXELS_FILTER
        assert t.critic_filter == FEATURES_FILTER

    def test_bad_labels_rejected(self):
        for bad in ("5", "F", "9F", "0P", "5X"):
            with pytest.raises(ValueError):
                task_from_label(bad, 0)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            tasks_from_labels(["1F", "1F"])


class TestGatingInvariance:
    def test_disabled_group_cannot_affect_outputs(self):
        engine, store, tasks = build_engine(["1F", "2P"], seed=1)
        rng = np.random.default_rng(2)
        obs = random_obs(rng, engine.obs_spec, 4)
        f_task = tasks[0]
        pol, _ = engine.actor_forward(store.actor, obs, f_task)
        q, _ = engine.critic_forward(store.critic, obs,
                                     rng.standard_normal((4, 2)), f_task)
        # scramble the image group; a features task must not notice
        obs2 = dict(obs)
        obs2["image"] = rng.uniform(0.0, 1.0, obs["image"].shape)
        pol2, _ = engine.actor_forward(store.actor, obs2, f_task)
        q2, _ = engine.critic_forward(store.critic, obs2,
                                      np.zeros((4, 2)) + 0.0, f_task)
        assert np.array_equal(pol.mean, pol2.mean)
        assert np.array_equal(pol.std, pol2.std)

    def test_pixels_task_ignores_features(self):
        engine, store, tasks = build_engine(["1F", "2P"], seed=3)
        rng = np.random.default_rng(4)
        obs = random_obs(rng, engine.obs_spec, 3)
        p_task = tasks[1]
        action = rng.standard_normal((3, 2))
        q, _ = engine.critic_forward(store.critic, obs, action, p_task)
        obs2 = dict(obs)
        obs2["features"] = rng.standard_normal(obs["features"].shape) * 100
        q2, _ = engine.critic_forward(store.critic, obs2, action, p_task)
        assert np.array_equal(q, q2)

    def test_merge_is_sum_of_enabled(self):
        emb = {"proprio": np.ones((2, 3)), "features": 2 * np.ones((2, 3)),
               "image": 7 * np.ones((2, 3))}
        out = merge_groups(emb, FEATURES_FILTER)
        assert np.array_equal(out, 3 * np.ones((2, 3)))

    def test_disabled_encoder_gets_no_gradient(self):
        engine, store, tasks = build_engine(["1F", "2P"], seed=5)
        rng = np.random.default_rng(6)
        obs = random_obs(rng, engine.obs_spec, 4)
        f_task = tasks[0]
        pol, tape = engine.actor_forward(store.actor, obs, f_task)
        grads = engine.actor_backward_tasks(
            tape, {f_task.task_id: (np.ones_like(pol.mean), np.ones_like(pol.std))})
        assert "enc/image" not in grads
        assert "enc/proprio" in grads and "enc/features" in grads
        q, ctape = engine.critic_forward(store.critic, obs,
                                         rng.standard_normal((4, 2)), f_task)
        cgrads = engine.critic_backward(ctape, {f_task.task_id: np.ones(4)})
        assert "enc/image" not in cgrads
        # only this task's head is touched
        assert f"head/{tasks[1].task_id}" not in cgrads


class TestGradients:
    def test_actor_params_match_finite_differences(self):
        engine, store, tasks = build_engine(["1P"], seed=7)
        rng = np.random.default_rng(8)
        obs = random_obs(rng, engine.obs_spec, 2)
        task = tasks[0]
        w_mean = rng.standard_normal((2, 2))
        w_std = rng.standard_normal((2, 2))

        def probe(params):
            pol, _ = engine.actor_forward(params, obs, task)
            return float(np.sum(w_mean * pol.mean) + np.sum(w_std * pol.std))

        pol, tape = engine.actor_forward(store.actor, obs, task)
        grads = engine.actor_backward_tasks(tape, {task.task_id: (w_mean, w_std)})
        assert fd_check_tree(probe, store.actor, grads) <= 1e-5

    def test_critic_params_and_action_match_finite_differences(self):
        engine, store, tasks = build_engine(["1F"], seed=9)
        rng = np.random.default_rng(10)
        obs = random_obs(rng, engine.obs_spec, 3)
        task = tasks[0]
        action = rng.standard_normal((3, 2))
        w = rng.standard_normal(3)

        def probe(params):
            q, _ = engine.critic_forward(params, obs, action, task)
            return float(np.sum(w * q))

        q, tape = engine.critic_forward(store.critic, obs, action, task)
        grads, d_action = engine.critic_backward(tape, {task.task_id: w},
                                                 need_action_grad=True)
        assert fd_check_tree(probe, store.critic, grads) <= 1e-6
        # action gradient by central differences
        eps = 1e-6
        for idx in range(action.size):
            bumped = action.copy().ravel()
            bumped[idx] += eps
            hi = probe_action(engine, store, obs, bumped.reshape(action.shape),
                              task, w)
            bumped[idx] -= 2 * eps
            lo = probe_action(engine, store, obs, bumped.reshape(action.shape),
                              task, w)
            numeric = (hi - lo) / (2 * eps)
            a = d_action.ravel()[idx]
            assert abs(a - numeric) / max(abs(a), abs(numeric), 1e-8) <= 1e-6

    def test_shared_trunk_pass_equals_individual_passes(self):
        engine, store, tasks = build_engine(["1F", "5F", "2P"], seed=11)
        rng = np.random.default_rng(12)
        obs = random_obs(rng, engine.obs_spec, 4)
        out, _ = engine.actor_forward_tasks(store.actor, obs, tasks)
        for t in tasks:
            single, _ = engine.actor_forward(store.actor, obs, t)
            assert np.array_equal(out[t.task_id].mean, single.mean)
            assert np.array_equal(out[t.task_id].std, single.std)


def probe_action(engine, store, obs, action, task, w):
    q, _ = engine.critic_forward(store.critic, obs, action, task)
    return float(np.sum(w * q))


class TestGaussianHead:
    def test_mean_bounded_and_variance_clamped(self):
        engine, store, tasks = build_engine(["1F"], seed=13)
        rng = np.random.default_rng(14)
        # extreme observations push the head outputs far out
        obs = random_obs(rng, engine.obs_spec, 8)
        obs = {g: v * 1e3 if g != "image" else v for g, v in obs.items()}
        pol, _ = engine.actor_forward(store.actor, obs, tasks[0])
        assert np.all(np.abs(pol.mean) <= 1.0)
        assert np.all(pol.std ** 2 >= engine.sizes.var_min - 1e-12)
        assert np.all(pol.std ** 2 <= engine.sizes.var_max + 1e-12)

    def test_log_prob_matches_scipy(self):
        rng = np.random.default_rng(15)
        mean = rng.standard_normal((6, 2))
        std = rng.uniform(0.1, 1.0, (6, 2))
        pol = GaussianPolicy(mean=mean, std=std)
        a = rng.standard_normal((6, 2))
        expected = scipy.stats.norm.logpdf(a, loc=mean, scale=std).sum(axis=1)
        assert np.allclose(log_prob(pol, a), expected, atol=1e-10)

    def test_entropy_matches_scipy(self):
        rng = np.random.default_rng(16)
        std = rng.uniform(0.1, 1.0, (4, 2))
        pol = GaussianPolicy(mean=np.zeros((4, 2)), std=std)
        expected = scipy.stats.norm.entropy(loc=0.0, scale=std).sum(axis=1)
        assert np.allclose(entropy(pol), expected, atol=1e-10)

    def test_sample_moments(self):
        rng = np.random.default_rng(17)
        mean = np.array([[0.3, -0.7]])
        std = np.array([[0.5, 0.2]])
        pol = GaussianPolicy(mean=np.repeat(mean, 200_000, 0),
                             std=np.repeat(std, 200_000, 0))
        noise = rng.standard_normal((200_000, 2))
        samples = sample_action(pol, noise)
        se = std[0] / np.sqrt(200_000)
        assert np.all(np.abs(samples.mean(axis=0) - mean[0]) <= 4 * se)
        assert np.allclose(samples.std(axis=0), std[0], rtol=0.02)

    def test_sampling_reproducible_from_fixed_noise(self):
        pol = GaussianPolicy(mean=np.zeros((3, 2)), std=np.ones((3, 2)))
        noise = np.random.default_rng(18).standard_normal((3, 2))
        assert np.array_equal(sample_action(pol, noise), sample_action(pol, noise))


class TestParamStore:
    def test_sync_targets_copies_exactly(self):
        engine, store, tasks = build_engine(["1F", "2P"], seed=19)
        rng = np.random.default_rng(20)
        # drift online params away from targets
        for comp in store.actor:
            for k in store.actor[comp]:
                store.actor[comp][k] = store.actor[comp][k] + 0.1
        store.sync_targets()
        for comp in store.actor:
            for k in store.actor[comp]:
                assert np.array_equal(store.actor[comp][k],
                                      store.actor_target[comp][k])

    def test_target_unaffected_by_later_online_updates(self):
        engine, store, tasks = build_engine(["1F"], seed=21)
        store.sync_targets()
        before = {c: dict(p) for c, p in store.actor_target.items()}
        for comp in store.actor:
            for k in store.actor[comp]:
                store.actor[comp][k] = store.actor[comp][k] * 2.0
        for comp in before:
            for k in before[comp]:
                assert np.array_equal(before[comp][k], store.actor_target[comp][k])

    def test_store_round_trips_through_tree(self):
        from bicup.gated import ParamStore
        engine, store, tasks = build_engine(["1F"], seed=22)
        clone = ParamStore.from_tree(store.tree())
        assert np.array_equal(clone.actor["trunk"]["L0.W"],
                              store.actor["trunk"]["L0.W"])
