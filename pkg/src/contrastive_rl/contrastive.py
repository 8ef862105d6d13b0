"""Instance-discrimination auxiliary objective with a momentum key encoder.

Queries go through the live encoder, keys through an EMA copy that never
records gradients.  Similarity is the bilinear form q^T W k over the
batch; the loss is softmax cross entropy with the diagonal as positives,
so every other key in the batch acts as a negative (no memory bank).
"""

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import PixelEncoder
from .optim import Adam


class ContrastivePair:
    """Live query encoder, EMA key encoder, bilinear matrix, momentum m."""

    def __init__(self, query_encoder: PixelEncoder, momentum: float, rng=None,
                 key_encoder: PixelEncoder = None):
        if not 0.0 <= momentum <= 1.0:
            raise ValueError(f"momentum must be in [0, 1], got {momentum}")
        rng = rng or np.random.default_rng(0)
        self.query_encoder = query_encoder
        self.key_encoder = key_encoder or query_encoder.clone(name="key_encoder")
        self.momentum = momentum
        dim = query_encoder.params["fc.b"].shape[0]
        self.bilinear_w = Tensor(
            rng.uniform(0.0, 1.0, size=(dim, dim)).astype(ad.default_dtype()),
            requires_grad=True, name="contrastive.w")

    def encode_keys(self, keys01: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.key_encoder.forward(keys01).values


def bilinear_logits(q: Tensor, k, w: Tensor) -> Tensor:
    """logits[i, j] = q_i^T W k_j, rows shifted by their max for stability.

    The key side is treated as a constant: gradients reach only q and W.
    """
    k_vals = k.values if isinstance(k, Tensor) else np.asarray(k)
    if q.shape[1] != w.shape[0] or w.shape[1] != k_vals.shape[1]:
        raise ValueError(
            f"bilinear_logits: shapes q{tuple(q.shape)} W{tuple(w.shape)} k{k_vals.shape} disagree")
    proj = ad.matmul(q, w)
    logits = ad.matmul(proj, Tensor(k_vals.T.copy()))
    row_max = Tensor(logits.values.max(axis=1, keepdims=True))
    return ad.add(logits, ad.mul(row_max, Tensor(np.asarray(-1.0, dtype=row_max.dtype))))


def infonce_loss(logits: Tensor):
    """Mean diagonal-label cross entropy and the batch argmax accuracy."""
    B, K = logits.shape
    if B != K:
        raise ValueError(f"infonce_loss: logits must be square, got {B}x{K}")
    labels = np.arange(B)
    loss = ad.tmean(ad.softmax_cross_entropy(logits, labels))
    accuracy = float(np.mean(np.argmax(logits.values, axis=1) == labels))
    return loss, accuracy


def momentum_update(pair: ContrastivePair, m: float = None):
    """theta_k <- m * theta_k + (1 - m) * theta_q, elementwise; W untouched."""
    m = pair.momentum if m is None else m
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must be in [0, 1], got {m}")
    for key, kp in pair.key_encoder.params.items():
        qp = pair.query_encoder.params[key]
        kp.values = m * kp.values + (1.0 - m) * qp.values


def curl_update(queries01: np.ndarray, keys01: np.ndarray, pair: ContrastivePair,
                optimizer: Adam):
    """One contrastive step: InfoNCE grads into the query encoder and W,
    then the momentum update of the key encoder."""
    if queries01.shape[0] < 2:
        warnings.warn("contrastive batch of size 1 has no negatives; loss is vacuously 0")
    k_vals = pair.encode_keys(keys01)
    optimizer.zero_grad()
    with ad.Tape() as tape:
        q = pair.query_encoder.forward(queries01)
        logits = bilinear_logits(q, k_vals, pair.bilinear_w)
        loss, accuracy = infonce_loss(logits)
        tape.backward(loss)
    optimizer.step()
    momentum_update(pair)
    return float(loss.values), accuracy
