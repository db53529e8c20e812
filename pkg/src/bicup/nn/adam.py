"""Adam with bias correction over flat parameter dicts.

Updates are out of place: new parameter arrays are returned so forward
tapes and published snapshots taken earlier stay valid. Non-finite
gradients skip the whole step (moments and counter untouched) and bump
a skip counter so callers can surface it.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    skipped: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for k, p in params.items():
        state.m[k] = np.zeros_like(p)
        state.v[k] = np.zeros_like(p)
    return state


def adam_step(params: dict, grads: dict, state: AdamState, decay: float = 0.0):
    """One update over the keys present in grads.

    Keys absent from grads are left untouched; in this codebase a
    parameter is either updated every step or has structurally zero
    gradients (disabled groups), for which skipping equals updating.

    decay is decoupled weight decay: lr * decay * param comes off each
    updated parameter, outside the moment estimates.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            log.warning("non-finite gradient in %s; step %d skipped", k, state.step)
            return params, state
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    out = dict(params)
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        out[k] = params[k] - state.lr * ((m / bc1) / (np.sqrt(v / bc2) + state.eps)
                                         + decay * params[k])
    return out, state
