"""Adam and initialization contracts, against an independent scalar reference."""

import math

import numpy as np
import pytest

import pickt.numeric as nc
from pickt.errors import ParameterError
from pickt.numeric import Rng, Tensor, adam_init, adam_step, init_normal


def _ref_adam_scalar(x0, grad_fn, steps, lr=3e-4, b1=0.9, b2=0.999, eps=1e-12):
    # hand-written reference, plain python floats
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        x -= lr * mhat / (math.sqrt(vhat) + eps)
    return x


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        p = {"w": Tensor(np.full(4, 1.5), True)}
        st = adam_init(p)
        adam_step(p, {"w": np.zeros(4, dtype=np.float32)}, st)
        np.testing.assert_array_equal(p["w"].data, np.full(4, 1.5, dtype=np.float32))

    def test_missing_grad_treated_as_zero(self):
        p = {"w": Tensor(np.ones(3), True)}
        st = adam_init(p)
        adam_step(p, {}, st)
        np.testing.assert_array_equal(p["w"].data, np.ones(3, dtype=np.float32))

    def test_first_step_moves_by_lr(self):
        # bias correction makes |step 1 update| ~ lr regardless of |g|
        for g in (0.013, 7.0):
            p = {"w": Tensor(np.array([1.0]), True)}
            st = adam_init(p)
            adam_step(p, {"w": np.array([g], dtype=np.float32)}, st, lr=3e-4)
            delta = 1.0 - float(p["w"].data[0])
            assert delta == pytest.approx(3e-4, rel=1e-4)

    def test_hundred_steps_match_scalar_reference(self):
        nc.set_default_dtype(np.float64)
        x0 = 2.3
        p = {"x": Tensor(np.array([x0]), True)}
        st = adam_init(p)
        for _ in range(100):
            g = 2.0 * p["x"].data  # d(x^2)/dx
            adam_step(p, {"x": g}, st, lr=1e-2)
        want = _ref_adam_scalar(x0, lambda x: 2.0 * x, 100, lr=1e-2)
        assert float(p["x"].data[0]) == pytest.approx(want, rel=1e-12)

    def test_converges_on_quadratic(self):
        nc.set_default_dtype(np.float64)
        p = {"x": Tensor(np.array([5.0]), True)}
        st = adam_init(p)
        for _ in range(4000):
            adam_step(p, {"x": 2.0 * p["x"].data}, st, lr=5e-2)
        assert abs(float(p["x"].data[0])) < 1e-3

    def test_shape_mismatch_names_parameter(self):
        p = {"w_query": Tensor(np.ones((2, 2)), True)}
        st = adam_init(p)
        with pytest.raises(ParameterError, match="w_query"):
            adam_step(p, {"w_query": np.ones(3, dtype=np.float32)}, st)


class TestInit:
    def test_init_normal_moments(self):
        # Monte-Carlo: sample mean ~ 0, sample std ~ 0.02
        t = init_normal((500, 500), Rng(123), std=0.02)
        assert t.requires_grad
        assert abs(float(t.data.mean())) < 3e-4
        assert float(t.data.std()) == pytest.approx(0.02, rel=0.01)

    def test_init_deterministic(self):
        a = init_normal((16, 16), Rng(5), std=0.02)
        b = init_normal((16, 16), Rng(5), std=0.02)
        np.testing.assert_array_equal(a.data, b.data)
