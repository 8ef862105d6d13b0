"""Shared test oracles: central finite differences and synthetic sprites."""

import numpy as np

from contrastive_rl import autodiff as ad
from contrastive_rl.autodiff import Tensor


def finite_diff_grads(loss_fn, arrays, h=1e-5):
    """Central-difference gradients of a scalar-valued loss in float64.

    ``loss_fn(list_of_float64_arrays) -> float`` is evaluated 2 times per
    element; arrays stay untouched.
    """
    grads = []
    for i, arr in enumerate(arrays):
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn(arrays)
            flat[j] = orig - h
            down = loss_fn(arrays)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def analytic_grads(build_loss, arrays):
    """Tape gradients of ``build_loss(tensors) -> scalar Tensor``."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        loss = build_loss(tensors)
        tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.values)
            for t in tensors], float(loss.values)


def max_rel_error(analytic, numeric, floor=1e-3):
    """max |a - n| / max(|a|, |n|, floor) over all elements of all arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(build_loss, arrays, h=1e-5, tol=1e-3):
    """Run both oracles and return the worst relative error."""
    def loss_value(arrs):
        with ad.no_grad():
            return float(build_loss([Tensor(a) for a in arrs]).values)

    an, _ = analytic_grads(build_loss, arrays)
    fd = finite_diff_grads(loss_value, [a.copy() for a in arrays], h=h)
    err = max_rel_error(an, fd)
    assert err < tol, f"gradient mismatch: max rel err {err:.3e} >= {tol}"
    return err


def weighted_sum(out, rng=None):
    """Reduce any op output to a scalar with fixed, varied weights.

    Deterministic so repeated evaluations (finite differences) see the
    same loss function.
    """
    w = Tensor(np.cos(np.arange(out.size, dtype=np.float64) * 0.7 + 0.3).reshape(out.shape))
    return ad.tsum(ad.mul(out, w))


def make_sprites(count=256, size=50, seed=7):
    """Distinct grayscale sprites: a few random bright blobs per canvas."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 99], dtype=np.uint64)))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    sprites = np.zeros((count, size, size), dtype=np.uint8)
    for i in range(count):
        canvas = np.zeros((size, size), dtype=np.float32)
        for _ in range(3):
            cx, cy = rng.uniform(8, size - 8, size=2)
            r = rng.uniform(3, 7)
            amp = rng.uniform(120, 255)
            mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r ** 2
            canvas = np.maximum(canvas, np.where(mask, amp, 0.0))
        sprites[i] = canvas.astype(np.uint8)
    return sprites
