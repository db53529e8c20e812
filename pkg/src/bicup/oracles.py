"""Self-contained numerical oracles, runnable from the CLI.

Two independent ground truths: central finite differences for every
analytic gradient path (single layers through full actor/critic
pipelines, in float64), and a naive double-loop recursion for the
corrected multi-step value targets. Random instances, fresh every run
unless seeded.
"""

from dataclasses import dataclass

import numpy as np

from bicup.gated import GatedNetworks, NetSizes, ObsSpec
from bicup.nn.gradcheck import finite_diff_check
from bicup.nn.layers import LayerSpec
from bicup.nn.network import Network, mlp
from bicup.retrace import (TRACE_MODES, retrace_from_components,
                           retrace_reference)
from bicup.tasks import tasks_from_labels

GRAD_TOL = 1e-4
RETRACE_TOL = 1e-10


@dataclass
class OracleResult:
    name: str
    worst: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _random_sizes(rng) -> NetSizes:
    return NetSizes(
        actor_embed=int(rng.integers(4, 8)),
        critic_embed=int(rng.integers(4, 8)),
        actor_trunk=(int(rng.integers(5, 9)), int(rng.integers(4, 8))),
        actor_head=int(rng.integers(4, 7)),
        critic_trunk=(int(rng.integers(5, 9)), int(rng.integers(4, 8))),
        critic_head=int(rng.integers(4, 7)),
        conv_channels=(2, 3),
        conv_kernels=(4, 3),
        conv_strides=(2, 2),
        action_dim=2)


def _random_engine(rng):
    spec = ObsSpec(vector_sizes={"proprio": int(rng.integers(3, 6)),
                                 "features": int(rng.integers(3, 6))},
                   image_shape=(3, 12, 12))
    labels = [["1F", "3F"], ["2P", "5P"], ["1F", "2P", "5F"]][int(rng.integers(3))]
    tasks = tasks_from_labels(labels, asymmetric=bool(rng.integers(2)))
    engine = GatedNetworks(spec, _random_sizes(rng), tasks, dtype=np.float64)
    store = engine.init_store(rng)
    obs = {g: rng.standard_normal((3, w))
           for g, w in spec.vector_sizes.items()}
    obs["image"] = rng.uniform(0.0, 1.0, (3,) + spec.image_shape)
    return engine, store, tasks, obs


def check_layer_gradients(rng) -> OracleResult:
    """Each layer kind in isolation, parameters and inputs."""
    worst = 0.0
    dense = mlp("dense_elu", [5, 7, 3], activation="elu")
    params = dense.init_params(rng, np.float64)
    worst = max(worst, finite_diff_check(dense, params,
                                         rng.standard_normal((4, 5)),
                                         check_input=True))
    conv = Network("conv", [
        LayerSpec.conv2d(2, 3, kernel=3, stride=2),
        LayerSpec.activation("tanh"),
        LayerSpec.conv2d(3, 2, kernel=3, stride=1),
    ])
    params = conv.init_params(rng, np.float64)
    worst = max(worst, finite_diff_check(conv, params,
                                         rng.standard_normal((2, 2, 9, 9)),
                                         check_input=True))
    norm = Network("ln_softplus", [
        LayerSpec.dense(6, 5),
        LayerSpec.layer_norm(5),
        LayerSpec.activation("softplus"),
    ])
    params = norm.init_params(rng, np.float64)
    worst = max(worst, finite_diff_check(norm, params,
                                         rng.standard_normal((3, 6)),
                                         check_input=True))
    return OracleResult("gradient/layers", worst, GRAD_TOL,
                        "dense+elu, conv+tanh, layer_norm+softplus")


def _fd_over_tree(probe, params: dict, grads: dict, eps: float = 1e-5) -> float:
    worst = 0.0
    for comp, comp_params in params.items():
        for key, base in comp_params.items():
            g = grads.get(comp, {}).get(key)
            flat = np.zeros(base.size) if g is None else np.asarray(g).ravel()
            for idx in range(base.size):
                bumped = base.copy().ravel()
                bumped[idx] += eps
                hi = probe({**params, comp: {**comp_params,
                                             key: bumped.reshape(base.shape)}})
                bumped[idx] -= 2 * eps
                lo = probe({**params, comp: {**comp_params,
                                             key: bumped.reshape(base.shape)}})
                numeric = (hi - lo) / (2 * eps)
                err = abs(flat[idx] - numeric) / max(abs(flat[idx]),
                                                     abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst


def check_network_gradients(instances: int, rng) -> OracleResult:
    """Full actor and critic pipelines on random instances."""
    worst = 0.0
    for _ in range(instances):
        engine, store, tasks, obs = _random_engine(rng)
        task = tasks[int(rng.integers(len(tasks)))]
        action = rng.standard_normal((3, engine.sizes.action_dim))
        w_q = rng.standard_normal(3)

        def critic_probe(params):
            q, _ = engine.critic_forward(params, obs, action, task)
            return float(np.sum(w_q * q))

        q, tape = engine.critic_forward(store.critic, obs, action, task)
        grads = engine.critic_backward(tape, {task.task_id: w_q})
        worst = max(worst, _fd_over_tree(critic_probe, store.critic, grads))

        w_mu = rng.standard_normal((3, engine.sizes.action_dim))
        w_sd = rng.standard_normal((3, engine.sizes.action_dim))

        def actor_probe(params):
            pol, _ = engine.actor_forward(params, obs, task)
            return float(np.sum(w_mu * pol.mean) + np.sum(w_sd * pol.std))

        pol, tape = engine.actor_forward(store.actor, obs, task)
        grads = engine.actor_backward_tasks(
            tape, {task.task_id: (w_mu, w_sd)})
        worst = max(worst, _fd_over_tree(actor_probe, store.actor, grads))
    return OracleResult("gradient/actor_critic", worst, GRAD_TOL,
                        f"{instances} random instances")


def check_retrace(cases: int, rng) -> OracleResult:
    """Vectorized recursion against the naive double loop, both modes."""
    worst = 0.0
    for _ in range(cases):
        b = int(rng.integers(1, 5))
        length = int(rng.integers(1, 21))
        rewards = rng.standard_normal((b, length))
        q_behavior = rng.standard_normal((b, length))
        exp_q_next = rng.standard_normal((b, length))
        trace = rng.uniform(0.0, 1.0, (b, length))
        gamma = float(rng.uniform(0.5, 0.999))
        for mode in TRACE_MODES:
            fast = retrace_from_components(rewards, q_behavior, exp_q_next,
                                           trace, gamma, mode)
            slow = retrace_reference(rewards, q_behavior, exp_q_next,
                                     trace, gamma, mode)
            worst = max(worst, float(np.max(np.abs(fast - slow))))
    return OracleResult("retrace/double_loop", worst, RETRACE_TOL,
                        f"{cases} snippets x {len(TRACE_MODES)} modes")


def run_all(instances: int = 20, retrace_cases: int = 100,
            seed=None) -> list:
    rng = np.random.default_rng(seed)
    return [check_layer_gradients(rng),
            check_network_gradients(instances, rng),
            check_retrace(retrace_cases, rng)]
