"""Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import ParamBlock


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamBlock, **kw) -> AdamState:
        return cls(m=params.zeros_like(), v=params.zeros_like(), **kw)


def adam_step(
    state: AdamState, params: ParamBlock, grads: dict[str, np.ndarray]
) -> tuple[AdamState, ParamBlock]:
    """One bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.bump()
    return state, params
