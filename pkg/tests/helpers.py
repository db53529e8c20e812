"""Shared test utilities: tiny gated networks and a finite-difference
probe that walks whole component parameter trees."""

import numpy as np

from bicup.gated import GatedNetworks, NetSizes, ObsSpec
from bicup.tasks import tasks_from_labels


def small_sizes(rng=None):
    """Random small architecture; full pipeline, toy widths."""
    r = rng or np.random.default_rng(0)
    return NetSizes(
        actor_embed=int(r.integers(4, 8)),
        critic_embed=int(r.integers(4, 8)),
        actor_trunk=(int(r.integers(5, 9)), int(r.integers(4, 8))),
        actor_head=int(r.integers(4, 7)),
        critic_trunk=(int(r.integers(5, 9)), int(r.integers(4, 8))),
        critic_head=int(r.integers(4, 7)),
        conv_channels=(2, 3),
        conv_kernels=(4, 3),
        conv_strides=(2, 2),
        action_dim=2,
    )


def small_obs_spec():
    return ObsSpec(vector_sizes={"proprio": 5, "features": 4},
                   image_shape=(3, 12, 12))


def build_engine(labels=("1F", "2P"), seed=0, dtype=np.float64, sizes=None,
                 asymmetric=False):
    rng = np.random.default_rng(seed)
    tasks = tasks_from_labels(labels, asymmetric=asymmetric)
    engine = GatedNetworks(small_obs_spec(), sizes or small_sizes(rng), tasks,
                           dtype=dtype)
    store = engine.init_store(rng)
    return engine, store, tasks


def random_obs(rng, spec, n):
    obs = {g: rng.standard_normal((n, w)) for g, w in spec.vector_sizes.items()}
    obs["image"] = rng.uniform(0.0, 1.0, (n,) + spec.image_shape)
    return obs


def fd_check_tree(probe, params: dict, grads: dict, eps: float = 1e-5) -> float:
    """Central finite differences over a component->param->array tree.

    probe(params) must return a float. grads mirrors params (missing
    entries are treated as exactly zero). Returns the max relative error
    max(|a - n|) / max(|a|, |n|, 1e-8) over every element.
    """
    worst = 0.0
    for comp, comp_params in params.items():
        for key, base in comp_params.items():
            g = grads.get(comp, {}).get(key)
            flat_g = np.zeros(base.size) if g is None else np.asarray(g).ravel()
            for idx in range(base.size):
                bumped = base.copy().ravel()
                bumped[idx] += eps
                hi = probe({**params, comp: {**comp_params,
                                             key: bumped.reshape(base.shape)}})
                bumped[idx] -= 2 * eps
                lo = probe({**params, comp: {**comp_params,
                                             key: bumped.reshape(base.shape)}})
                numeric = (hi - lo) / (2 * eps)
                a = flat_g[idx]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
