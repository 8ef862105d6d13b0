"""Encoder and MLP contracts."""

import numpy as np
import pytest

from contrastive_rl import autodiff as ad
from contrastive_rl.autodiff import Tape, Tensor
from contrastive_rl.nn import LATENT_DIM, Mlp, PixelEncoder, conv_output_hw

from helpers import check_gradients

RNG = np.random.default_rng(3)


def make_encoder(crop=32, channels=3, seed=0):
    return PixelEncoder(channels, crop, np.random.default_rng(seed))


def test_zero_image_latent_is_finite_and_squashed():
    enc = make_encoder()
    z = enc.encode_values(np.zeros((2, 3, 32, 32), dtype=np.float32))
    assert z.shape == (2, LATENT_DIM)
    assert np.all(np.isfinite(z))
    assert np.all(np.abs(z) < 1.0)


def test_encoder_is_deterministic():
    enc = make_encoder()
    x = RNG.random((4, 3, 32, 32)).astype(np.float32)
    assert np.array_equal(enc.encode_values(x), enc.encode_values(x))


def test_one_pixel_difference_changes_latent():
    enc = make_encoder()
    x = RNG.random((1, 3, 32, 32)).astype(np.float32)
    y = x.copy()
    y[0, 0, 16, 16] += 0.5
    assert not np.allclose(enc.encode_values(x), enc.encode_values(y))


def test_latent_bounded_for_huge_inputs():
    enc = make_encoder()
    z = enc.encode_values(np.full((1, 3, 32, 32), 1e4, dtype=np.float32))
    assert np.all(np.abs(z) < 1.0)


def test_wrong_spatial_size_names_expected_crop():
    enc = make_encoder(crop=32)
    with pytest.raises(ValueError, match="32x32"):
        enc.encode_values(np.zeros((1, 3, 42, 42), dtype=np.float32))
    with pytest.raises(ValueError, match="channels"):
        enc.encode_values(np.zeros((1, 4, 32, 32), dtype=np.float32))


def test_output_dim_independent_of_crop_size():
    for crop in (32, 42, 84):
        enc = make_encoder(crop=crop)
        z = enc.encode_values(np.zeros((1, 3, crop, crop), dtype=np.float32))
        assert z.shape == (1, LATENT_DIM)


def test_param_count_pure_function_of_config():
    a, b = make_encoder(seed=0), make_encoder(seed=99)
    assert a.param_count() == b.param_count()
    flat = 32 * conv_output_hw(32) ** 2
    expected = (32 * 3 * 9 + 32) + 3 * (32 * 32 * 9 + 32) + flat * 50 + 50 + 50 + 50
    assert a.param_count() == expected


def test_encoder_param_gradients_against_finite_differences():
    from helpers import finite_diff_grads, max_rel_error

    enc = PixelEncoder(1, 20, np.random.default_rng(1), dtype=np.float64)
    x = RNG.random((1, 1, 20, 20))
    for pname in ("conv0.w", "conv3.b", "ln.g", "ln.b"):
        param = enc.params[pname]
        for p in enc.parameters():
            p.grad = None
        with Tape() as tape:
            tape.backward(ad.tmean(enc.forward(x)))
        analytic = [param.grad.copy()]

        def loss_value(arrs):
            saved = param.values
            param.values = arrs[0]
            with ad.no_grad():
                v = float(enc.forward(x).values.mean())
            param.values = saved
            return v

        fd = finite_diff_grads(loss_value, [param.values.copy()], h=1e-5)
        err = max_rel_error(analytic, fd)
        assert err < 1e-3, f"{pname}: rel err {err:.2e}"


def test_detach_convs_blocks_conv_gradients():
    enc = make_encoder()
    x = RNG.random((2, 3, 32, 32)).astype(np.float32)
    with Tape() as tape:
        z = enc.forward(x, detach_convs=True)
        tape.backward(ad.tmean(z))
    assert enc.params["conv0.w"].grad is None
    assert enc.params["fc.w"].grad is not None


def test_clone_copies_values_without_grad():
    enc = make_encoder()
    twin = enc.clone()
    for k in enc.params:
        assert np.array_equal(enc.params[k].values, twin.params[k].values)
        assert not twin.params[k].requires_grad
    twin.params["fc.b"].values += 1.0
    assert not np.array_equal(enc.params["fc.b"].values, twin.params["fc.b"].values)


# ---------------------------------------------------------------------------
# MLP


def test_mlp_zero_weights_outputs_bias():
    mlp = Mlp([4, 8, 3], np.random.default_rng(0))
    for k in ("w0", "w1"):
        mlp.params[k].values[:] = 0.0
    mlp.params["b1"].values[:] = [1.0, -2.0, 0.5]
    out = mlp.forward(Tensor(RNG.random((5, 4)).astype(np.float32)))
    assert np.allclose(out.values, [1.0, -2.0, 0.5])


def test_mlp_single_layer_is_affine():
    mlp = Mlp([3, 3], np.random.default_rng(0))
    mlp.params["w0"].values = np.eye(3, dtype=np.float32)
    mlp.params["b0"].values[:] = 0.0
    x = RNG.standard_normal((4, 3)).astype(np.float32)
    out = mlp.forward(Tensor(x))
    assert np.allclose(out.values, x)  # no relu on the output layer


def test_mlp_matches_independent_affine_chain():
    mlp = Mlp([5, 7, 2], np.random.default_rng(2))
    x = RNG.standard_normal((6, 5)).astype(np.float32)
    out = mlp.forward(Tensor(x)).values
    w0, b0 = mlp.params["w0"].values, mlp.params["b0"].values
    w1, b1 = mlp.params["w1"].values, mlp.params["b1"].values
    ref = np.maximum(x @ w0 + b0, 0.0) @ w1 + b1
    assert np.allclose(out, ref, atol=1e-6)


def test_mlp_dimension_mismatch_errors():
    mlp = Mlp([4, 8, 3], np.random.default_rng(0))
    with pytest.raises(ValueError, match="input dim"):
        mlp.forward(Tensor(np.zeros((2, 5), dtype=np.float32)))
