"""Dense MLP parameters, initialization and forward/backward passes."""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from ..rng import make_rng
from . import autodiff as ad


@dataclass(frozen=True)
class MLPSpec:
    """Stack of affine layers; ``layer_dims[i]`` is the output width of layer i."""

    input_dim: int
    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]
    init_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(int(w) for w in self.layer_dims))
        object.__setattr__(self, "activations", tuple(self.activations))
        if not self.layer_dims:
            raise ValueError("an MLP needs at least one layer")
        if len(self.activations) != len(self.layer_dims):
            raise ValueError("need exactly one activation per layer")
        if self.input_dim <= 0 or any(w <= 0 for w in self.layer_dims):
            raise ValueError(f"layer widths must be positive: {self.input_dim}, {self.layer_dims}")
        unknown = set(self.activations) - set(ad.ACTIVATIONS)
        if unknown:
            raise ValueError(f"unknown activations {sorted(unknown)}")

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class ParamBlock:
    """Named weight/bias arrays with a flat-vector view.

    ``version`` increments on every in-place update so stale forward caches
    can be detected.
    """

    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __len__(self) -> int:
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def flat(self) -> np.ndarray:
        if not self.arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.size:
            raise ValueError(f"flat vector has {vec.size} entries, block has {self.size}")
        offset = 0
        for a in self.arrays.values():
            a[...] = vec[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        self.bump()

    def bump(self) -> None:
        self.version += 1

    def copy(self) -> ParamBlock:
        return ParamBlock({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


def mlp_init(spec: MLPSpec, prefix: str = "") -> ParamBlock:
    """Glorot-uniform weights, zero biases, fully determined by ``spec.init_seed``."""
    rng = make_rng(spec.init_seed, "mlp-init", prefix)
    arrays: dict[str, np.ndarray] = {}
    fan_in = spec.input_dim
    for i, fan_out in enumerate(spec.layer_dims):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        arrays[f"{prefix}layer{i}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        arrays[f"{prefix}layer{i}.b"] = np.zeros(fan_out)
        fan_in = fan_out
    return ParamBlock(arrays)


def leaves(params: ParamBlock) -> dict[str, ad.Tensor]:
    return {name: ad.leaf(arr, name) for name, arr in params.items()}


def apply(spec: MLPSpec, nodes: dict[str, ad.Tensor], x: ad.Tensor, prefix: str = "") -> ad.Tensor:
    """Build the graph of the MLP on ``x`` using parameter nodes from :func:`leaves`."""
    if x.data.ndim != 2 or x.data.shape[1] != spec.input_dim:
        raise ValueError(f"expected input of width {spec.input_dim}, got shape {x.data.shape}")
    h = x
    for i, act in enumerate(spec.activations):
        h = ad.affine(h, nodes[f"{prefix}layer{i}.W"], nodes[f"{prefix}layer{i}.b"])
        h = ad.ACTIVATIONS[act](h)
    return h


@dataclass
class ForwardCache:
    params: ParamBlock
    version: int
    inputs: ad.Tensor
    nodes: dict[str, ad.Tensor]
    output: ad.Tensor


def forward(spec: MLPSpec, params: ParamBlock, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = ad.leaf(np.asarray(inputs, dtype=float), "input")
    nodes = leaves(params)
    out = apply(spec, nodes, x)
    return out.data, ForwardCache(params, params.version, x, nodes, out)


def backward(cache: ForwardCache, upstream: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of <upstream, output> w.r.t. parameters and inputs."""
    if cache.params.version != cache.version:
        raise RuntimeError("stale cache: parameters changed since the forward pass")
    for t in (*cache.nodes.values(), cache.inputs):
        t.grad = None
    ad.backward([(cache.output, upstream)])
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in cache.nodes.items()
    }
    gin = cache.inputs.grad if cache.inputs.grad is not None else np.zeros_like(cache.inputs.data)
    return grads, gin
