"""Central finite-difference gradient verification.

The analytic route (tape backward) and the numeric route (central
differences) must agree elementwise. Relative error uses the denominator
max(|ad|, |fd|, 1e-4); the absolute floor keeps finite-difference noise on
exactly-zero gradients (e.g. never-indexed embedding rows) from registering
as disagreement. Default step and tolerance follow the compute dtype:
(h=1e-3, tol=1e-3) in float32, (h=1e-5, tol=1e-5) in float64.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward, default_dtype, no_grad, zero_grads

REL_FLOOR = 1e-4


def _defaults():
    if default_dtype() is np.float64:
        return 1e-5, 1e-5
    return 1e-3, 1e-3


def analytic_grads(build_loss, params: dict) -> dict:
    """One taped forward/backward; returns {name: grad array}."""
    zero_grads(params.values())
    with Tape():
        loss = build_loss()
        backward(loss, params=params.values())
    return {name: p.grad.copy() for name, p in params.items()}


def finite_difference_grads(build_loss, params: dict, h: float | None = None) -> dict:
    """Central differences, perturbing every element of every parameter."""
    if h is None:
        h, _ = _defaults()
    out = {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            g = np.zeros_like(flat, dtype=np.float64)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = float(build_loss().data)
                flat[i] = orig - h
                lm = float(build_loss().data)
                flat[i] = orig
                g[i] = (lp - lm) / (2.0 * h)
            out[name] = g.reshape(p.data.shape)
    return out


def max_relative_error(ad: np.ndarray, fd: np.ndarray) -> float:
    ad = np.asarray(ad, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), REL_FLOOR)
    return float(np.max(np.abs(ad - fd) / denom)) if ad.size else 0.0


def check_gradients(build_loss, params: dict, h: float | None = None, tol: float | None = None) -> dict:
    """Compare both routes; returns {name: max relative error}.

    ``build_loss`` must be a deterministic closure over ``params`` (no
    dropout, no RNG consumption) returning a scalar Tensor.
    """
    if tol is None:
        _, tol = _defaults()
    ad = analytic_grads(build_loss, params)
    fd = finite_difference_grads(build_loss, params, h=h)
    report = {name: max_relative_error(ad[name], fd[name]) for name in params}
    report["__max__"] = max(report.values()) if report else 0.0
    report["__tol__"] = tol
    return report
