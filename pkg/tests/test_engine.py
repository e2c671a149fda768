import numpy as np
import pytest

from lpwavenet import engine
from lpwavenet.engine import Tensor


def numeric_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar function at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn()
        flat[i] = orig - eps
        fm = fn()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def check_op(build, inputs, rtol=1e-7, atol=1e-9):
    """Compare reverse-mode grads of sum(out * R) with finite differences."""
    params = [Tensor(x, requires_grad=True) for x in inputs]
    out = build(*params)
    rng = np.random.default_rng(99)
    r = rng.standard_normal(out.data.shape)

    def loss():
        return float(np.sum(build(*params).data * r))

    for p in params:
        p.zero_grad()
    engine.backward(out, r)
    for p, x in zip(params, inputs):
        num = numeric_grad(loss, x)
        got = p.grad if p.grad is not None else np.zeros_like(x)
        np.testing.assert_allclose(got, num, rtol=rtol, atol=max(atol, 1e-9))


class TestElementwise:
    def test_add_broadcast(self, rng):
        check_op(lambda a, b: engine.add(a, b),
                 [rng.standard_normal((2, 5, 3)), rng.standard_normal(3)])

    def test_mul(self, rng):
        check_op(lambda a, b: engine.mul(a, b),
                 [rng.standard_normal((2, 4)), rng.standard_normal((2, 4))])

    def test_tanh(self, rng):
        check_op(engine.tanh, [rng.standard_normal((3, 4))])

    def test_sigmoid(self, rng):
        check_op(engine.sigmoid, [rng.standard_normal((3, 4))])

    def test_relu(self, rng):
        x = rng.standard_normal((5, 5))
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        check_op(engine.relu, [x])


class TestLinear:
    def test_matmul(self, rng):
        check_op(engine.matmul,
                 [rng.standard_normal((2, 6, 4)), rng.standard_normal((4, 3))])

    def test_take_rows(self, rng):
        idx = rng.integers(0, 7, size=(2, 9))
        check_op(lambda w: engine.take_rows(w, idx),
                 [rng.standard_normal((7, 3))])

    def test_causal_conv2(self, rng):
        for d in (1, 3):
            check_op(lambda x, w, b: engine.causal_conv2(x, w, b, d),
                     [rng.standard_normal((2, 8, 3)),
                      rng.standard_normal((2, 3, 4)),
                      rng.standard_normal(4)])

    def test_causal_conv2_matches_shift_matmul(self, rng):
        x = Tensor(rng.standard_normal((2, 10, 3)))
        w = Tensor(rng.standard_normal((2, 3, 5)))
        b = Tensor(rng.standard_normal(5))
        d = 4
        fused = engine.causal_conv2(x, w, b, d)
        manual = (engine.time_shift(x, d).data @ w.data[0]
                  + x.data @ w.data[1] + b.data)
        np.testing.assert_allclose(fused.data, manual, atol=1e-14)


class TestShapeOps:
    def test_time_shift_forward(self):
        x = Tensor(np.arange(8.0).reshape(1, 4, 2))
        out = engine.time_shift(x, 1)
        np.testing.assert_array_equal(out.data[0, 0], [0.0, 0.0])
        np.testing.assert_array_equal(out.data[0, 1:], x.data[0, :-1])
        back = engine.time_shift(x, -2)
        np.testing.assert_array_equal(back.data[0, -2:], 0.0)
        np.testing.assert_array_equal(back.data[0, :2], x.data[0, 2:])

    def test_time_shift_grad(self, rng):
        for d in (-2, 2):
            check_op(lambda x: engine.time_shift(x, d),
                     [rng.standard_normal((2, 6, 3))])

    def test_slice_time_padded(self, rng):
        x = rng.standard_normal((1, 10, 2))
        for start, length in [(-3, 6), (2, 5), (7, 6)]:
            check_op(lambda t: engine.slice_time_padded(t, start, length), [x])
        out = engine.slice_time_padded(Tensor(x), -2, 4)
        np.testing.assert_array_equal(out.data[:, :2], 0.0)
        np.testing.assert_array_equal(out.data[:, 2:], x[:, :2])

    def test_concat0(self, rng):
        check_op(lambda a, b: engine.concat0([a, b]),
                 [rng.standard_normal((2, 3, 2)), rng.standard_normal((1, 3, 2))])

    def test_upsample_tconv_length(self, rng):
        hop = 4
        x = Tensor(rng.standard_normal((2, 5, 3)))
        w = Tensor(rng.standard_normal((2 * hop, 3, 6)))
        out = engine.upsample_tconv(x, w, hop)
        assert out.data.shape == (2, 20, 6)

    def test_upsample_tconv_grad(self, rng):
        hop = 3
        check_op(lambda x, w: engine.upsample_tconv(x, w, hop),
                 [rng.standard_normal((1, 4, 2)),
                  rng.standard_normal((2 * hop, 2, 3))])

    def test_upsample_kernel_validation(self, rng):
        with pytest.raises(ValueError):
            engine.upsample_tconv(Tensor(np.zeros((1, 2, 2))),
                                  Tensor(np.zeros((5, 2, 2))), 3)


class TestWeightNorm:
    def test_identity_when_unit(self):
        v = Tensor(np.array([[0.6], [0.8]]), requires_grad=True)
        g = Tensor(np.array([1.0]), requires_grad=True)
        out = engine.weight_norm(v, g)
        np.testing.assert_allclose(out.data, v.data, atol=1e-15)

    def test_scale_invariance(self, rng):
        v = rng.standard_normal((4, 3))
        g = rng.uniform(0.5, 2.0, 3)
        w1 = engine.weight_norm(Tensor(v), Tensor(g)).data
        w2 = engine.weight_norm(Tensor(5.0 * v), Tensor(g)).data
        np.testing.assert_allclose(w1, w2, atol=1e-12)

    def test_grad(self, rng):
        check_op(engine.weight_norm,
                 [rng.standard_normal((2, 4, 3)), rng.uniform(0.5, 2.0, 3)])

    def test_zero_direction_rejected(self):
        v = Tensor(np.zeros((3, 2)), requires_grad=True)
        g = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ValueError):
            engine.weight_norm(v, g)


class TestBackwardMachinery:
    def test_diamond_graph_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = engine.add(engine.mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1
        engine.backward(y, np.ones(1))
        assert x.grad[0] == pytest.approx(5.0)

    def test_constant_subgraph_untracked(self):
        a = Tensor(np.ones((2, 2)))
        b = Tensor(np.ones((2, 2)))
        out = engine.add(a, b)
        assert not out.requires_grad and out._bw is None

    def test_seed_shape_checked(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ValueError):
            engine.backward(engine.tanh(x), np.ones(3))

    def test_reused_tensor_two_consumers(self, rng):
        check_op(lambda x: engine.add(engine.tanh(x), engine.sigmoid(x)),
                 [rng.standard_normal((3, 3))])
