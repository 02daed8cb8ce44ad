"""Adam optimizer and parameter initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from .rng import Rng
from .tensor import Tensor


def init_normal(shape, rng: Rng, std: float = 0.02, mean: float = 0.0) -> Tensor:
    """Trainable tensor drawn from N(mean, std^2)."""
    return Tensor(rng.normal(shape, mean=mean, std=std), requires_grad=True)


def init_zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict) -> AdamState:
    state = AdamState()
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float = 3e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-12,
) -> None:
    """One bias-corrected Adam update, in place on param.data.

    A zero gradient leaves first-step parameters unchanged; with scalar
    gradient g the first step moves the parameter by ~lr*sign(g).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ParameterError(
                f"adam_step: gradient shape {g.shape} does not match parameter '{name}' shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        g = g.astype(p.data.dtype, copy=False)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)
