"""Adam with bias correction; moments kept in float64, params in float32."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .unet import ScorerModel


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    model: ScorerModel, grads: dict[str, np.ndarray], state: AdamState
) -> tuple[ScorerModel, AdamState]:
    """One bias-corrected update, applied in place to the model's params."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, param in model.params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != param.shape:
            raise ShapeError(f"gradient for {name} is {g.shape}, parameter is {param.shape}")
        m = state.m.setdefault(name, np.zeros(param.shape, dtype=np.float64))
        v = state.v.setdefault(name, np.zeros(param.shape, dtype=np.float64))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        param[...] = (param.astype(np.float64) - update).astype(np.float32)
    return model, state
