"""Convolutional pixel encoder and dense heads.

The encoder is 4 conv layers of 32 filters (3x3; stride 2 then 1,1,1,
valid padding, ReLU between), a dense projection to a 50-d latent, then
layer norm and tanh.  The squashing pins every latent component inside
(-1, 1) and the dense projection absorbs whatever spatial size the
configured crop produces.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LATENT_DIM = 50
CONV_LAYERS = 4
CONV_FILTERS = 32
_KERNEL = 3
_STRIDES = (2, 1, 1, 1)


def orthogonal_init(rng, rows, cols, dtype):
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q.astype(dtype)


def fan_in_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def conv_output_hw(hw: int) -> int:
    for s in _STRIDES:
        hw = (hw - _KERNEL) // s + 1
    return hw


class PixelEncoder:
    """Maps a (B, C, crop, crop) float image batch in [0, 1] to (B, 50) latents."""

    def __init__(self, in_channels, crop_size, rng=None, name="encoder", dtype=None):
        if conv_output_hw(crop_size) < 1:
            raise ValueError(f"crop size {crop_size} too small for the conv stack")
        dtype = dtype or ad.default_dtype()
        self.in_channels = in_channels
        self.crop_size = crop_size
        self.out_hw = conv_output_hw(crop_size)
        self.flat_dim = CONV_FILTERS * self.out_hw * self.out_hw
        self.name = name
        rng = rng or np.random.default_rng(0)

        self.params = {}
        c_in = in_channels
        for i in range(CONV_LAYERS):
            shape = (CONV_FILTERS, c_in, _KERNEL, _KERNEL)
            fan_in = c_in * _KERNEL * _KERNEL
            self._add(f"conv{i}.w", fan_in_uniform(rng, shape, fan_in, dtype))
            self._add(f"conv{i}.b", np.zeros((CONV_FILTERS,), dtype=dtype))
            c_in = CONV_FILTERS
        self._add("fc.w", orthogonal_init(rng, self.flat_dim, LATENT_DIM, dtype))
        self._add("fc.b", np.zeros((LATENT_DIM,), dtype=dtype))
        self._add("ln.g", np.ones((LATENT_DIM,), dtype=dtype))
        self._add("ln.b", np.zeros((LATENT_DIM,), dtype=dtype))

    def _add(self, key, values):
        self.params[key] = Tensor(values, requires_grad=True, name=f"{self.name}.{key}")

    def parameters(self):
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def conv_features(self, x: np.ndarray) -> Tensor:
        """Flattened conv-stack activations, pre dense head.

        ``x`` is a plain (B, C, crop, crop) float array in [0, 1]; pixels
        never carry gradients, so the stack runs channels-last internally.
        """
        B, C, H, W = x.shape
        if C != self.in_channels:
            raise ValueError(f"encoder expects {self.in_channels} channels, got {C}")
        if H != self.crop_size or W != self.crop_size:
            raise ValueError(
                f"encoder expects {self.crop_size}x{self.crop_size} input, got {H}x{W}")
        h = Tensor(np.ascontiguousarray(np.asarray(x).transpose(0, 2, 3, 1)))
        for i in range(CONV_LAYERS):
            h = ad.conv2d(h, self.params[f"conv{i}.w"], stride=_STRIDES[i],
                          layout="nhwc")
            h = ad.relu(ad.add(h, self.params[f"conv{i}.b"]))
        return ad.reshape(h, (B, self.flat_dim))

    def head(self, h: Tensor, detach_convs: bool = False) -> Tensor:
        """Dense projection, layer norm, tanh squash into (-1, 1)."""
        if detach_convs:
            h = h.detach()
        h = ad.add(ad.matmul(h, self.params["fc.w"]), self.params["fc.b"])
        h = ad.layer_norm(h, self.params["ln.g"], self.params["ln.b"])
        return ad.tanh(h)

    def forward(self, x: np.ndarray, detach_convs: bool = False) -> Tensor:
        """Encode; ``detach_convs`` stops incoming gradients at the conv stack."""
        return self.head(self.conv_features(x), detach_convs=detach_convs)

    def encode_values(self, x_vals: np.ndarray) -> np.ndarray:
        """Plain-numpy forward for action selection and evaluation."""
        with ad.no_grad():
            return self.forward(x_vals).values

    def clone(self, name=None) -> "PixelEncoder":
        """Structural copy with the same parameter values, grads off."""
        twin = PixelEncoder(self.in_channels, self.crop_size,
                            rng=np.random.default_rng(0), name=name or self.name + "_copy")
        for k, p in self.params.items():
            twin.params[k].values = p.values.copy()
            twin.params[k].requires_grad = False
        return twin


class Mlp:
    """ReLU hidden layers, linear output; orthogonal init, zero biases."""

    def __init__(self, dims, rng=None, name="mlp", dtype=None):
        if len(dims) < 2:
            raise ValueError("mlp needs at least input and output dims")
        dtype = dtype or ad.default_dtype()
        self.dims = list(dims)
        self.name = name
        rng = rng or np.random.default_rng(0)
        self.params = {}
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = Tensor(orthogonal_init(rng, d_in, d_out, dtype),
                       requires_grad=True, name=f"{name}.w{i}")
            b = Tensor(np.zeros((d_out,), dtype=dtype), requires_grad=True, name=f"{name}.b{i}")
            self.params[f"w{i}"] = w
            self.params[f"b{i}"] = b

    def parameters(self):
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dims[0]:
            raise ValueError(f"{self.name}: input dim {x.shape[-1]} != {self.dims[0]}")
        n_layers = len(self.dims) - 1
        h = x
        for i in range(n_layers):
            h = ad.add(ad.matmul(h, self.params[f"w{i}"]), self.params[f"b{i}"])
            if i < n_layers - 1:
                h = ad.relu(h)
        return h

    def clone(self, name=None) -> "Mlp":
        twin = Mlp(self.dims, rng=np.random.default_rng(0), name=name or self.name + "_copy")
        for k, p in self.params.items():
            twin.params[k].values = p.values.copy()
            twin.params[k].requires_grad = False
        return twin


def named_parameters(*modules):
    """Flat (name, tensor) list across encoder/MLP modules."""
    out = []
    for m in modules:
        for p in m.parameters():
            out.append((p.name, p))
    return out
