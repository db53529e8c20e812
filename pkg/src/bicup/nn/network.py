"""Sequential network container with a forward tape for backprop.

A Network owns only layer specs; parameters live in plain dicts keyed
"L{i}.{name}" so they can be stored, swapped and checkpointed freely.
forward() returns (output, tape); backward() consumes the tape once and
returns (d_input, grads) with grads keyed like the params.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bicup.nn import layers
from bicup.nn.layers import LayerSpec, ShapeError


class TapeError(RuntimeError):
    """Raised when a tape does not belong to this network or call."""


@dataclass
class Tape:
    net: "Network"
    caches: list
    out_shape: tuple
    used: bool = False


@dataclass
class Network:
    name: str
    layers: list = field(default_factory=list)

    def param_shapes(self) -> dict:
        shapes = {}
        for i, spec in enumerate(self.layers):
            for pname, shape in spec.param_shapes().items():
                shapes[f"L{i}.{pname}"] = shape
        return shapes

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> dict:
        params = {}
        for i, spec in enumerate(self.layers):
            for pname, arr in spec.init_params(rng, dtype).items():
                params[f"L{i}.{pname}"] = arr
        return params

    def _layer_params(self, params: dict, i: int, spec: LayerSpec) -> dict:
        out = {}
        for pname, shape in spec.param_shapes().items():
            key = f"L{i}.{pname}"
            try:
                arr = params[key]
            except KeyError:
                raise ShapeError(f"{self.name}: missing parameter {key}") from None
            if arr.shape != shape:
                raise ShapeError(f"{self.name}: parameter {key} has shape "
                                 f"{arr.shape}, expected {shape}")
            out[pname] = arr
        return out

    def forward(self, params: dict, x: np.ndarray):
        caches = []
        for i, spec in enumerate(self.layers):
            p = self._layer_params(params, i, spec)
            try:
                x, cache = layers.FORWARD[spec.kind](spec, p, x)
            except ShapeError as exc:
                raise ShapeError(f"{self.name} layer {i} ({spec.kind}): {exc}") from None
            caches.append(cache)
        return x, Tape(net=self, caches=caches, out_shape=x.shape)

    def backward(self, tape: Tape, dy: np.ndarray):
        if tape.net is not self:
            raise TapeError(f"tape belongs to {tape.net.name}, not {self.name}")
        if tape.used:
            raise TapeError(f"{self.name}: tape already consumed")
        if dy.shape != tape.out_shape:
            raise TapeError(f"{self.name}: output grad shape {dy.shape} does not "
                            f"match forward output {tape.out_shape}")
        tape.used = True
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            dy, layer_grads = layers.BACKWARD[spec.kind](spec, tape.caches[i], dy)
            for pname, g in layer_grads.items():
                grads[f"L{i}.{pname}"] = g
        return dy, grads

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())


def mlp(name: str, sizes: list, activation: str = "elu",
        final_activation: Optional[str] = None) -> Network:
    """Dense stack with activations between layers."""
    specs = []
    for i in range(len(sizes) - 1):
        specs.append(LayerSpec.dense(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            specs.append(LayerSpec.activation(activation))
    if final_activation is not None:
        specs.append(LayerSpec.activation(final_activation))
    return Network(name, specs)
