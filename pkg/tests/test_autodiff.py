"""Gradient and value correctness of the reverse-mode engine."""

import numpy as np
import pytest

from contrastive_rl import autodiff as ad
from contrastive_rl.autodiff import Tape, Tensor, forward_op, no_grad
from contrastive_rl.optim import Adam

from helpers import check_gradients, weighted_sum

RNG = np.random.default_rng(20240811)


def r(*shape):
    return RNG.standard_normal(shape).astype(np.float64)


# ---------------------------------------------------------------------------
# forward values


def test_relu_values():
    out = forward_op("relu", [Tensor(np.array([-1.0, 0.0, 2.0]))])
    assert np.array_equal(out.values, [0.0, 0.0, 2.0])


def test_matmul_identity():
    x = r(3, 5)
    out = forward_op("matmul", [Tensor(np.eye(3)), Tensor(x)])
    assert np.allclose(out.values, x)


def test_conv2d_all_ones():
    # 5x5 ones with a 3x3 ones kernel, stride 1, valid: every output is 9
    x = Tensor(np.ones((1, 1, 5, 5)))
    k = Tensor(np.ones((1, 1, 3, 3)))
    out = forward_op("conv2d", [x, k], stride=1)
    assert out.shape == (1, 1, 3, 3)
    assert np.allclose(out.values, 9.0)


def test_conv2d_matches_direct_summation():
    x = r(2, 3, 7, 6)
    k = r(4, 3, 3, 3)
    for stride in (1, 2):
        out = ad.conv2d(Tensor(x), Tensor(k), stride=stride).values
        OH = (7 - 3) // stride + 1
        OW = (6 - 3) // stride + 1
        ref = np.zeros((2, 4, OH, OW))
        for b in range(2):
            for f in range(4):
                for i in range(OH):
                    for j in range(OW):
                        patch = x[b, :, i * stride:i * stride + 3, j * stride:j * stride + 3]
                        ref[b, f, i, j] = (patch * k[f]).sum()
        assert np.allclose(out, ref, atol=1e-10)


def test_shape_errors_name_op():
    with pytest.raises(ValueError, match="matmul"):
        ad.matmul(Tensor(r(3, 4)), Tensor(r(3, 4)))
    with pytest.raises(ValueError, match="conv2d"):
        ad.conv2d(Tensor(r(1, 2, 5, 5)), Tensor(r(3, 4, 3, 3)))
    with pytest.raises(ValueError, match="min_elementwise"):
        ad.min_elementwise(Tensor(r(2, 2)), Tensor(r(2, 3)))


def test_strict_checks_flag():
    ad.set_strict_checks(True)
    try:
        with pytest.raises(FloatingPointError, match="tanh"):
            ad.tanh(Tensor(np.array([1.0, np.nan])))
    finally:
        ad.set_strict_checks(False)
    ad.tanh(Tensor(np.array([1.0, np.nan])))  # silent when off


# ---------------------------------------------------------------------------
# backward basics


def test_backward_polynomial():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(ad.mul(x, x))
        tape.backward(loss)
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_requires_scalar():
    x = Tensor(r(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)


def test_disconnected_param_gets_no_grad():
    x = Tensor(r(3), requires_grad=True)
    p = Tensor(r(3), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(ad.mul(x, x))
        tape.backward(loss)
    assert p.grad is None


def test_grad_accumulates_across_uses():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(ad.add(x, x))
        tape.backward(loss)
    assert np.allclose(x.grad, [2.0])


def test_no_grad_suppresses_recording():
    x = Tensor(r(3), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad
        assert len(tape.records) == 0


def test_gradient_linearity_of_summed_losses():
    x0 = r(4, 3)

    def single(build):
        x = Tensor(x0.copy(), requires_grad=True)
        with Tape() as tape:
            tape.backward(build(x))
        return x.grad

    ga = single(lambda x: ad.tsum(ad.mul(x, x)))
    gb = single(lambda x: ad.tmean(ad.tanh(x)))
    gsum = single(lambda x: ad.add(ad.tsum(ad.mul(x, x)), ad.tmean(ad.tanh(x))))
    assert np.allclose(gsum, ga + gb, rtol=1e-6)


# ---------------------------------------------------------------------------
# finite-difference checks, one per op kind (the acceptance suite runs the
# full 20-instance sweep; these catch regressions fast)


def _fd_case(build, arrays):
    check_gradients(build, arrays)


def test_fd_matmul():
    _fd_case(lambda ts: weighted_sum(ad.matmul(ts[0], ts[1]), RNG), [r(3, 4), r(4, 2)])


def test_fd_conv2d_both_strides():
    for stride in (1, 2):
        _fd_case(lambda ts, s=stride: weighted_sum(ad.conv2d(ts[0], ts[1], stride=s), RNG),
                 [r(2, 2, 6, 6), r(3, 2, 3, 3)])


def test_fd_add_mul_broadcast():
    _fd_case(lambda ts: weighted_sum(ad.add(ts[0], ts[1]), RNG), [r(3, 4), r(4)])
    _fd_case(lambda ts: weighted_sum(ad.mul(ts[0], ts[1]), RNG), [r(3, 4), r(3, 1)])


def test_fd_unary_ops():
    _fd_case(lambda ts: weighted_sum(ad.relu(ts[0]), RNG),
             [r(3, 4) + np.sign(r(3, 4)) * 0.2])
    _fd_case(lambda ts: weighted_sum(ad.tanh(ts[0]), RNG), [r(3, 4)])
    _fd_case(lambda ts: weighted_sum(ad.exp(ts[0]), RNG), [r(3, 4) * 0.5])
    _fd_case(lambda ts: weighted_sum(ad.log(ts[0]), RNG), [np.abs(r(3, 4)) + 0.5])


def test_fd_reductions():
    _fd_case(lambda ts: ad.tsum(ts[0]), [r(3, 4)])
    _fd_case(lambda ts: ad.tmean(ts[0]), [r(3, 4)])
    _fd_case(lambda ts: weighted_sum(ad.tsum(ts[0], axis=1), RNG), [r(3, 4)])
    _fd_case(lambda ts: weighted_sum(ad.tmean(ts[0], axis=0), RNG), [r(3, 4)])


def test_fd_softmax_cross_entropy():
    labels = np.array([0, 2, 1, 4])
    _fd_case(lambda ts: ad.tmean(ad.softmax_cross_entropy(ts[0], labels)), [r(4, 5)])


def test_fd_layer_norm():
    _fd_case(lambda ts: weighted_sum(ad.layer_norm(ts[0], ts[1], ts[2]), RNG),
             [r(4, 6), np.abs(r(6)) + 0.5, r(6)])


def test_fd_reshape_slice_concat():
    _fd_case(lambda ts: weighted_sum(ad.reshape(ts[0], (2, 6)), RNG), [r(3, 4)])
    key = (slice(1, 3), slice(0, 5, 2))
    _fd_case(lambda ts: weighted_sum(ad.tslice(ts[0], key), RNG), [r(4, 5)])
    _fd_case(lambda ts: weighted_sum(ad.concat([ts[0], ts[1]], axis=1), RNG),
             [r(2, 3), r(2, 4)])


def test_fd_min_elementwise():
    a, b = r(3, 4), r(3, 4)
    b[np.abs(a - b) < 0.05] += 0.2  # keep away from ties
    _fd_case(lambda ts: weighted_sum(ad.min_elementwise(ts[0], ts[1]), RNG), [a, b])


def test_fd_gaussian_log_prob():
    _fd_case(lambda ts: weighted_sum(ad.gaussian_log_prob(ts[0], ts[1], ts[2]), RNG),
             [r(3, 2), r(3, 2), r(3, 2) * 0.3])


def test_fd_two_layer_mlp_composite():
    w1, b1, w2, b2, x = r(4, 8), r(8), r(8, 3), r(3), r(5, 4)

    def build(ts):
        tw1, tb1, tw2, tb2, tx = ts
        h = ad.relu(ad.add(ad.matmul(tx, tw1), tb1))
        return ad.tmean(ad.tanh(ad.add(ad.matmul(h, tw2), tb2)))

    check_gradients(build, [w1, b1, w2, b2, x], h=1e-4)


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_grad_leaves_param():
    p = Tensor(np.array([1.5]), requires_grad=True, name="p")
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(1)
    opt.step()
    assert np.allclose(p.values, [1.5])


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array(0.0), requires_grad=True, name="p")
    opt = Adam([p], lr=1e-3, betas=(0.9, 0.999), eps=1e-8)
    p.grad = np.asarray(1.0)
    opt.step()
    # bias-corrected first step is lr * g / (|g| + eps)
    assert abs(float(p.values) + 1e-3) < 1e-6


def test_adam_optimizes_quadratic():
    p = Tensor(np.array(0.0), requires_grad=True, name="p")
    opt = Adam([p], lr=0.05)
    for _ in range(1000):
        opt.zero_grad()
        with Tape() as tape:
            diff = p - Tensor(np.asarray(3.0))
            tape.backward(ad.mul(diff, diff))
        opt.step()
    assert abs(float(p.values) - 3.0) < 0.05


def test_adam_rejects_nan_grad_under_strict():
    ad.set_strict_checks(True)
    try:
        p = Tensor(np.array([1.0]), requires_grad=True, name="theta")
        opt = Adam([p], lr=0.1)
        p.grad = np.array([np.nan])
        with pytest.raises(FloatingPointError, match="theta"):
            opt.step()
    finally:
        ad.set_strict_checks(False)


def test_adam_rejects_nonpositive_lr():
    with pytest.raises(ValueError):
        Adam([Tensor(np.zeros(1), requires_grad=True)], lr=0.0)


def test_determinism_same_seed_same_params():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.standard_normal(4).astype(np.float32), requires_grad=True)
        opt = Adam([p], lr=0.01)
        for _ in range(50):
            opt.zero_grad()
            with Tape() as tape:
                x = Tensor(rng.standard_normal(4).astype(np.float32))
                tape.backward(ad.tsum(ad.mul(ad.add(p, x), ad.add(p, x))))
            opt.step()
        return p.values.copy()

    assert np.array_equal(run(), run())
