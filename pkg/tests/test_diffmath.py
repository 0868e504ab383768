import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from visprefix import diffmath as dm
from visprefix.errors import ConfigError, DimensionError, UsageError

from conftest import numeric_grad, rel_err

finite = st.floats(-2.0, 2.0, allow_nan=False, width=64)


def small(shape):
    return arrays(np.float64, shape, elements=finite)


def grad_of(build, *arrays_in):
    """Analytic gradients of sum(build(*params) * w) for a fixed random weighting w."""
    params = [dm.Param(a.copy()) for a in arrays_in]
    out = build(*params)
    w = np.random.default_rng(0).normal(size=out.shape)
    dm.backward((out * dm.Tensor(w)).sum())
    return [p.grad for p in params], w


def check_primitive(build, *arrays_in, tol=1e-6):
    grads, w = grad_of(build, *arrays_in)
    for k, a in enumerate(arrays_in):
        work = [x.copy() for x in arrays_in]

        def f():
            ps = [dm.Tensor(x) for x in work]
            return float(np.sum(build(*ps).data * w))

        num = numeric_grad(f, work[k])
        assert rel_err(grads[k], num) <= tol or np.max(np.abs(grads[k] - num)) <= 1e-9


# ---------------------------------------------------------------- conv2d / pooling


def test_conv_identity_kernel(f64):
    x = np.random.default_rng(1).normal(size=(1, 5, 6))
    k = dm.Param(np.ones((1, 1, 1, 1)))
    assert np.array_equal(dm.conv2d(dm.Tensor(x), k).data, x)


def test_conv_zero_input_zero_output(f64):
    k = dm.Param(np.random.default_rng(2).normal(size=(4, 2, 3, 3)))
    out = dm.conv2d(dm.Tensor(np.zeros((2, 7, 7))), k, dm.Param(np.zeros(4)), stride=2, pad=1)
    assert not out.data.any()


def test_conv_ones_example(f64):
    out = dm.conv2d(dm.Tensor(np.ones((1, 3, 3))), dm.Param(np.ones((1, 1, 2, 2))))
    assert np.array_equal(out.data, np.full((1, 2, 2), 4.0))


def naive_conv(x, k, b, stride, pad):
    c, h, w = x.shape
    o, _, kk, _ = k.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - kk) // stride + 1, (w + 2 * pad - kk) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride:i * stride + kk, j * stride:j * stride + kk]
                out[oc, i, j] = np.sum(patch * k[oc]) + b[oc]
    return out


@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 7), st.sampled_from([1, 3]),
       st.integers(1, 2), st.integers(0, 1), st.integers(0, 2**31))
def test_conv_matches_direct_summation(c, o, h, k, stride, pad, seed):
    with dm.precision(64):
        rng = np.random.default_rng(seed)
        x, kern, b = rng.normal(size=(c, h, h + 1)), rng.normal(size=(o, c, k, k)), rng.normal(size=o)
        out = dm.conv2d(dm.Tensor(x), dm.Param(kern), dm.Param(b), stride=stride, pad=pad)
        ref = naive_conv(x, kern, b, stride, pad)
        assert out.shape == ref.shape
        assert np.allclose(out.data, ref, atol=1e-12)


def test_conv_output_size_formula(f64):
    for h, k, s, p in [(32, 3, 2, 1), (16, 3, 2, 1), (2, 3, 2, 1), (1, 3, 2, 1), (7, 1, 1, 0)]:
        out = dm.conv2d(dm.Tensor(np.zeros((1, h, h))), dm.Param(np.zeros((1, 1, k, k))), stride=s, pad=p)
        assert out.shape[-1] == (h + 2 * p - k) // s + 1


def test_conv_channel_mismatch(f64):
    with pytest.raises(DimensionError):
        dm.conv2d(dm.Tensor(np.zeros((2, 4, 4))), dm.Param(np.zeros((1, 3, 1, 1))))


def test_conv_gradients(f64):
    rng = np.random.default_rng(3)
    check_primitive(lambda x, k, b: dm.conv2d(x, k, b, stride=2, pad=1),
                    rng.uniform(-2, 2, (2, 2, 5, 5)), rng.uniform(-2, 2, (3, 2, 3, 3)),
                    rng.uniform(-2, 2, 3))


def test_pool_examples(f64):
    assert np.allclose(dm.avg_pool2d(dm.Tensor(np.full((2, 4, 4), 3.5)), 2, 2).data, 3.5)
    assert dm.avg_pool2d(dm.Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 1, 1).data[0, 0, 0] == 2.5
    ramp = np.arange(16.0).reshape(1, 4, 4)
    assert np.array_equal(dm.avg_pool2d(dm.Tensor(ramp), 2, 2).data[0], [[2.5, 4.5], [10.5, 12.5]])


def test_pool_non_divisible(f64):
    with pytest.raises(ConfigError):
        dm.avg_pool2d(dm.Tensor(np.zeros((1, 5, 4))), 2, 2)


def test_pool_gradients(f64):
    check_primitive(lambda x: dm.avg_pool2d(x, 2, 1), np.random.default_rng(4).uniform(-2, 2, (3, 4, 6)))


# ---------------------------------------------------------------- softmax / logsumexp / norm


def test_softmax_examples(f64):
    assert np.allclose(dm.softmax_rows(dm.Tensor(np.full(5, 0.3))).data, 0.2)
    assert np.allclose(dm.softmax_rows(dm.Tensor([0.0, math.log(3)])).data, [0.25, 0.75], atol=1e-15)


@given(small((3, 5)), st.floats(-50, 50), st.permutations(range(5)))
def test_softmax_properties(x, shift, perm):
    with dm.precision(64):
        p = dm.softmax_rows(dm.Tensor(x)).data
        assert np.all(np.abs(p.sum(-1) - 1) <= 1e-12)
        assert np.all((p > 0) & (p < 1))
        assert np.allclose(dm.softmax_rows(dm.Tensor(x + shift)).data, p, atol=1e-12)
        assert np.allclose(dm.softmax_rows(dm.Tensor(x[:, perm])).data, p[:, perm], atol=1e-15)


def test_logsumexp_examples(f64):
    assert dm.logsumexp(dm.Tensor([1.7])).item() == 1.7
    assert abs(dm.logsumexp(dm.Tensor([0.0, 0.0])).item() - math.log(2)) <= 1e-15
    assert abs(dm.logsumexp(dm.Tensor([1000.0, 1000.0])).item() - (1000 + math.log(2))) <= 1e-12


@given(small((4, 6)))
def test_logsumexp_bounds(x):
    with dm.precision(64):
        v = dm.logsumexp(dm.Tensor(x), axis=-1).data
        assert np.all(v >= x.max(-1) - 1e-12)
        assert np.all(v <= x.max(-1) + math.log(6) + 1e-12)


def test_layer_norm_examples(f64):
    one, zero = dm.Param(np.ones(4)), dm.Param(np.zeros(4))
    x = np.random.default_rng(5).normal(3.0, 2.0, (6, 4))
    y = dm.layer_norm(dm.Tensor(x), one, zero).data
    assert np.all(np.abs(y.mean(-1)) <= 1e-9)
    assert not dm.layer_norm(dm.Tensor(np.full((2, 4), 7.0)), one, zero).data.any()
    y2 = dm.layer_norm(dm.Tensor([1.0, 3.0]), dm.Param(np.ones(2)), dm.Param(np.zeros(2)), eps=1e-14)
    assert np.allclose(y2.data, [-1.0, 1.0], atol=1e-12)
    with pytest.raises(DimensionError):
        dm.layer_norm(dm.Tensor([1.0]), dm.Param(np.ones(1)), dm.Param(np.zeros(1)))


def test_leaky_relu_examples(f64):
    y = dm.leaky_relu(dm.Tensor([0.0, 2.0, -3.0]), 0.01).data
    assert y[0] == 0 and y[1] == 2 and abs(y[2] + 0.03) <= 1e-16


# ---------------------------------------------------------------- gradient contracts


@given(small((3, 4)), small((4,)))
def test_elementwise_gradients(a, b):
    with dm.precision(64):
        check_primitive(lambda x, y: x + y, a, b)
        check_primitive(lambda x, y: x * y, a, b)
        check_primitive(lambda x: x * 1.7, a)
        check_primitive(lambda x: dm.exp(x), a)
        check_primitive(lambda x: dm.log(dm.exp(x) + 1.0), a)


off_kink = st.one_of(st.floats(1e-3, 2.0), st.floats(-2.0, -1e-3))


@given(arrays(np.float64, (3, 4), elements=off_kink))
def test_leaky_relu_gradient_off_kink(a):
    with dm.precision(64):
        check_primitive(lambda x: dm.leaky_relu(x, 0.01), a)


@given(small((2, 3, 4)), small((4, 5)))
def test_matmul_linear_gradients(a, b):
    with dm.precision(64):
        check_primitive(lambda x, y: dm.matmul(x, y), a, b)
        check_primitive(lambda x, w, bias: dm.linear(x, w, bias), a, b, b[0])


@given(small((2, 5)))
def test_normalisation_gradients(a):
    with dm.precision(64):
        check_primitive(lambda x: dm.softmax_rows(x, axis=-1), a)
        check_primitive(lambda x: dm.logsumexp(x, axis=-1), a)
        check_primitive(lambda x: dm.log_softmax(x, axis=-1), a)


@given(st.integers(0, 2**31))
def test_layer_norm_gradient(seed):
    # drawn rather than shrunk: near-constant rows put curvature ~ eps^-1/2 into the
    # central difference itself
    rng = np.random.default_rng(seed)
    a, g, s = rng.uniform(-2, 2, (3, 5)), rng.uniform(0.5, 1.5, 5), rng.normal(size=5)
    with dm.precision(64):
        check_primitive(lambda x, gain, shift: dm.layer_norm(x, gain, shift), a, g, s)


@given(small((2, 3, 4)))
def test_shape_gradients(a):
    with dm.precision(64):
        check_primitive(lambda x: x.reshape((4, 6)), a)
        check_primitive(lambda x: dm.transpose(x, (2, 0, 1)), a)
        check_primitive(lambda x: dm.swapaxes(x, 0, 2), a)
        check_primitive(lambda x: x.sum(axis=1), a)
        check_primitive(lambda x: x.mean(axis=(0, 2)), a)
        check_primitive(lambda x, y: dm.concat([x, y], axis=1), a, a[:, :2] * 0.5)
        check_primitive(lambda x, y: dm.stack([x, y], axis=0), a, -a)
        check_primitive(lambda x: x[:, 1:, ::2], a)
        check_primitive(lambda x: x[np.array([0, 1, 1]), np.array([2, 0, 2])], a)


def test_embedding_gradient_accumulates_repeats(f64):
    table = np.random.default_rng(6).uniform(-2, 2, (5, 3))
    ids = np.array([[1, 3, 1], [0, 1, 4]])
    check_primitive(lambda t: dm.embedding(t, ids), table)


def test_dropout_contract(f64):
    x = dm.Param(np.ones((50, 40)))
    assert dm.dropout(x, 0.1, None, training=False) is x
    rng = np.random.default_rng(7)
    y = dm.dropout(x, 0.25, rng, training=True)
    kept = y.data != 0
    assert np.allclose(y.data[kept], 1 / 0.75)
    assert 0.65 < kept.mean() < 0.85
    dm.backward(y.sum())
    assert np.array_equal(x.grad, y.data)  # gradient uses the same mask


# ---------------------------------------------------------------- backward


def test_backward_examples(f64):
    p = dm.Param([1.0, 2.0, 3.0])
    p.sum().backward()
    assert np.array_equal(p.grad, [1, 1, 1])
    q = dm.Param([1.0, 2.0])
    (q * q).sum().backward()
    assert np.array_equal(q.grad, [2.0, 4.0])


def test_multiple_uses_accumulate(f64):
    p = dm.Param([1.5])
    (p * 3.0 + p * p).sum().backward()
    assert np.allclose(p.grad, [3.0 + 3.0])


def test_backward_non_scalar(f64):
    with pytest.raises(UsageError):
        dm.backward(dm.Param([1.0, 2.0]) * 2.0)


def test_zero_grad():
    p = dm.Param([1.0, 2.0])
    (p * p).sum().backward()
    p.zero_grad()
    assert not p.grad.any() and p.grad.shape == p.shape


def test_non_finite_raises(f64):
    with pytest.raises(FloatingPointError):
        dm.log(dm.Tensor([0.0]))


def test_no_grad_records_nothing(f64):
    p = dm.Param([1.0])
    with dm.no_grad():
        y = p * 2.0
    assert not y.requires_grad


def test_backward_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        w = dm.Param(rng.normal(size=(8, 8)))
        x = dm.Tensor(rng.normal(size=(4, 8)))
        y = dm.softmax_rows(dm.matmul(dm.leaky_relu(dm.matmul(x, w)), w))
        dm.backward(dm.logsumexp(y, axis=-1).sum())
        return w.grad.copy()

    assert np.array_equal(run(), run())


# ---------------------------------------------------------------- finite_diff_check


def test_fd_check_linear_model(f64):
    rng = np.random.default_rng(0)
    w = dm.Param(rng.normal(size=5), name="w")
    x = dm.Tensor(rng.normal(size=5))
    err = dm.finite_diff_check(lambda: (w * x).sum(), {"w": w})
    assert err <= 1e-10


def test_fd_check_softmax_cross_entropy(f64):
    rng = np.random.default_rng(1)
    w = dm.Param(rng.normal(size=(6, 4)))
    b = dm.Param(rng.normal(size=4))
    x = dm.Tensor(rng.normal(size=(3, 6)))
    gold = np.array([0, 3, 1])

    def loss():
        lp = dm.log_softmax(dm.linear(x, w, b), axis=-1)
        return -lp[np.arange(3), gold].sum()

    assert dm.finite_diff_check(loss, {"w": w, "b": b}) <= 1e-7


def test_fd_check_needs_64_bit():
    p = dm.Param(np.ones(3, dtype=np.float32))
    with pytest.raises(UsageError):
        dm.finite_diff_check(lambda: p.sum(), {"p": p})


def test_fd_check_flags_nan_group(f64):
    p = dm.Param([1e-300])

    def loss():
        return dm.log(p * 1e-300).sum()

    with pytest.raises((dm.GradCheckError, FloatingPointError)):
        dm.finite_diff_check(loss, {"p": p})


def test_fd_check_detects_wrong_gradient(f64):
    p = dm.Param(np.array([0.7, -0.3]))

    def bad_square(a):
        return dm._node(a.data ** 2, (a,), lambda g: (g * a.data,), "bad_square")  # missing factor 2

    assert dm.finite_diff_check(lambda: bad_square(p).sum(), {"p": p}) > 0.3


def test_fd_check_reports_kink_handling(f64):
    # x sits 5e-5 from the kink: +/-1e-4 straddles it, the reduced step does not
    p = dm.Param(np.array([5e-5, 0.7]))
    report: dict = {}
    err = dm.finite_diff_check(lambda: dm.leaky_relu(p).sum(), {"p": p}, report=report)
    assert err <= 1e-9
    assert report["_kinks"]["p"] == 1
