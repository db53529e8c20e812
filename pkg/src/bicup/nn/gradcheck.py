"""Central finite-difference check of analytic gradients.

The scalar probe is sum(weights * output); its analytic parameter
gradient comes from backward() with dy = weights. Every parameter
component is bumped by +/-eps and the relative error reported is

    max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

Meant for float64 parameters; float32 round-off swamps the signal.
"""

import numpy as np


def finite_diff_check(net, params: dict, x: np.ndarray, eps: float = 1e-5,
                      weights=None, check_input: bool = False) -> float:
    y, tape = net.forward(params, x)
    if weights is None:
        weights = np.ones_like(y)
    dx, grads = net.backward(tape, weights)

    def probe(p, xin):
        out, _ = net.forward(p, xin)
        return float(np.sum(weights * out))

    worst = 0.0
    for key, analytic in grads.items():
        base = params[key]
        flat_analytic = np.asarray(analytic).ravel()
        for idx in range(base.size):
            bumped = base.copy().ravel()
            bumped[idx] += eps
            hi = probe({**params, key: bumped.reshape(base.shape)}, x)
            bumped[idx] -= 2 * eps
            lo = probe({**params, key: bumped.reshape(base.shape)}, x)
            numeric = (hi - lo) / (2 * eps)
            a = flat_analytic[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    if check_input:
        flat_dx = dx.ravel()
        for idx in range(x.size):
            bumped = x.copy().ravel()
            bumped[idx] += eps
            hi = probe(params, bumped.reshape(x.shape))
            bumped[idx] -= 2 * eps
            lo = probe(params, bumped.reshape(x.shape))
            numeric = (hi - lo) / (2 * eps)
            a = flat_dx[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
