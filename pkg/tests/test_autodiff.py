"""Backward-pass verification: analytic tape gradients vs central finite differences."""

import numpy as np
import pytest

import pickt.numeric as nc
from pickt.errors import DimensionError
from pickt.numeric import Rng, Tape, Tensor
from pickt.numeric.gradcheck import check_gradients, max_relative_error


def _check(build_loss, params, tol=1e-5):
    report = check_gradients(build_loss, params)
    worst = report["__max__"]
    assert worst < tol, f"gradcheck failed: {report}"


@pytest.fixture(autouse=True)
def _f64():
    nc.set_default_dtype(np.float64)
    yield


class TestOpGradients:
    def test_matmul(self):
        rng = Rng(10)
        p = {"a": Tensor(rng.normal((3, 4)), True), "b": Tensor(rng.normal((4, 2)), True)}
        _check(lambda: nc.tsum(nc.mul(nc.matmul(p["a"], p["b"]), nc.matmul(p["a"], p["b"]))), p)

    def test_batched_matmul(self):
        rng = Rng(11)
        p = {"a": Tensor(rng.normal((2, 2, 3, 4)), True), "b": Tensor(rng.normal((2, 2, 4, 3)), True)}
        _check(lambda: nc.tsum(nc.tanh(nc.matmul(p["a"], p["b"]))), p)

    def test_softmax_with_mask(self):
        rng = Rng(12)
        mask = np.zeros((2, 5))
        mask[:, 3:] = -1e9
        p = {"x": Tensor(rng.normal((2, 5)), True)}
        w = Tensor(rng.normal((2, 5)))

        def loss():
            probs = nc.softmax(nc.add(p["x"], mask))
            return nc.tsum(nc.mul(probs, w))

        _check(loss, p)

    def test_gelu(self):
        p = {"x": Tensor(np.linspace(-3, 3, 13), True)}
        _check(lambda: nc.tsum(nc.gelu(p["x"])), p)

    def test_sigmoid_tanh_log_clip(self):
        rng = Rng(13)
        p = {"x": Tensor(rng.normal((7,)), True)}

        def loss():
            s = nc.sigmoid(p["x"])
            c = nc.clip(s, 1e-7, 1.0 - 1e-7)
            return nc.tsum(nc.mul(nc.log(c), nc.tanh(p["x"])))

        _check(loss, p)

    def test_layer_norm(self):
        rng = Rng(14)
        p = {
            "x": Tensor(rng.normal((3, 6)), True),
            "g": Tensor(rng.normal((6,), mean=1.0, std=0.1), True),
            "b": Tensor(rng.normal((6,), std=0.1), True),
        }
        _check(lambda: nc.tsum(nc.gelu(nc.layer_norm(p["x"], p["g"], p["b"]))), p)

    def test_leaky_relu(self):
        # keep inputs away from the kink at 0
        x = np.array([-2.0, -1.0, 0.5, 1.5])
        p = {"x": Tensor(x, True)}
        _check(lambda: nc.tsum(nc.mul(nc.leaky_relu(p["x"]), nc.leaky_relu(p["x"]))), p)

    def test_gather_rows(self):
        rng = Rng(15)
        ids = np.array([[0, 2, 2], [1, 0, 3]])
        p = {"t": Tensor(rng.normal((4, 3)), True)}
        _check(lambda: nc.tsum(nc.gelu(nc.gather_rows(p["t"], ids))), p)

    def test_gather_unused_rows_zero_grad(self):
        p = {"t": Tensor(Rng(16).normal((5, 2)), True)}
        with Tape():
            loss = nc.tsum(nc.gather_rows(p["t"], np.array([1, 1])))
            nc.backward(loss, params=p.values())
        assert np.all(p["t"].grad[0] == 0)
        assert np.all(p["t"].grad[1] == 2.0)
        assert np.all(p["t"].grad[2:] == 0)

    def test_concat_stack_transpose_reshape(self):
        rng = Rng(17)
        p = {"a": Tensor(rng.normal((2, 3)), True), "b": Tensor(rng.normal((2, 3)), True)}

        def loss():
            c = nc.concat([p["a"], p["b"]], axis=1)
            s = nc.stack([p["a"], p["b"]], axis=0)
            t = nc.transpose(s, (0, 2, 1))
            return nc.tsum(nc.mul(c, c)) + nc.tsum(nc.reshape(nc.tanh(t), (12,)))

        _check(loss, p)

    def test_broadcast_add_mul(self):
        rng = Rng(18)
        p = {
            "m": Tensor(rng.normal((3, 4)), True),
            "row": Tensor(rng.normal((4,)), True),
            "col": Tensor(rng.normal((3, 1)), True),
        }

        def loss():
            y = nc.mul(nc.add(p["m"], p["row"]), p["col"])
            return nc.tsum(nc.sigmoid(y))

        _check(loss, p)

    def test_sum_mean_axes(self):
        rng = Rng(19)
        p = {"x": Tensor(rng.normal((3, 4, 2)), True)}

        def loss():
            a = nc.tsum(p["x"], axis=1)
            b = nc.tmean(p["x"], axis=(0, 2), keepdims=True)
            return nc.tsum(nc.mul(a, a)) + nc.tsum(nc.mul(b, b))

        _check(loss, p)

    def test_dropout_backward_uses_same_mask(self):
        nc.set_default_dtype(np.float32)
        x = Tensor(np.ones((64, 64), dtype=np.float32), True)
        with Tape():
            y = nc.dropout(x, 0.4, Rng(20), training=True)
            nc.backward(nc.tsum(y))
        mask = (y.data != 0).astype(np.float32)
        np.testing.assert_allclose(x.grad, mask / 0.6, rtol=1e-6)


class TestTapeSemantics:
    def test_reused_tensor_accumulates(self):
        x = Tensor(np.array([3.0]), True)
        with Tape():
            y = nc.add(nc.mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1
            nc.backward(nc.tsum(y))
        np.testing.assert_allclose(x.grad, [7.0])

    def test_tape_is_topologically_ordered(self):
        x = Tensor(np.array([1.0]), True)
        with Tape() as tape:
            y = nc.mul(x, 2.0)
            z = nc.add(y, x)
            nc.tsum(z)
        seen = {id(x.data)}
        for out, inputs, _ in tape.ops:
            for t in inputs:
                assert id(t.data) in seen, "op recorded before its input"
            seen.add(id(out.data))

    def test_unreached_params_get_zero_grads(self):
        used = Tensor(np.ones(3), True)
        unused = Tensor(np.ones(4), True)
        with Tape():
            nc.backward(nc.tsum(used), params=[used, unused])
        np.testing.assert_array_equal(unused.grad, np.zeros(4))

    def test_caller_zeroes_grads(self):
        x = Tensor(np.array([2.0]), True)
        with Tape():
            nc.backward(nc.tsum(nc.mul(x, x)))
        np.testing.assert_allclose(x.grad, [4.0])  # d(x^2)/dx = 2x
        with Tape():
            nc.backward(nc.tsum(nc.mul(x, x)))
        np.testing.assert_allclose(x.grad, [8.0])  # accumulates until zeroed
        nc.zero_grads([x])
        assert x.grad is None

    def test_backward_requires_tape_and_scalar(self):
        x = Tensor(np.ones(3), True)
        with pytest.raises(RuntimeError):
            nc.backward(x)
        with Tape():
            y = nc.mul(x, 1.0)
            with pytest.raises(DimensionError):
                nc.backward(y)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), True)
        with Tape() as tape:
            with nc.no_grad():
                y = nc.mul(x, x)
        assert tape.ops == []
        assert not y.requires_grad

    def test_determinism_same_seed_same_grads(self):
        def run():
            nc.set_default_dtype(np.float32)
            rng = Rng(99)
            p = Tensor(rng.normal((8, 8)), True)
            with Tape():
                y = nc.dropout(nc.gelu(nc.matmul(p, p)), 0.2, rng.child(1), training=True)
                nc.backward(nc.tsum(y))
            return p.grad.copy()

        a, b = run(), run()
        np.testing.assert_array_equal(a, b)


class TestGradcheckHelper:
    def test_detects_wrong_gradient(self):
        # a deliberately broken analytic gradient must be caught
        ad = np.array([1.0, 2.0])
        fd = np.array([1.0, 2.5])
        assert max_relative_error(ad, fd) > 0.1

    def test_floor_suppresses_fd_noise_on_zero_grads(self):
        ad = np.array([0.0])
        fd = np.array([1e-9])  # finite-difference noise
        assert max_relative_error(ad, fd) < 1e-4
