"""Random-crop augmentation, applied consistently across a frame stack.

A stack is (S, H, W) uint8 (or a batch (B, S, H, W)); one crop offset is
drawn per stack and applied to all S frames so the temporal structure
survives.  Evaluation uses the deterministic center crop.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_size(in_hw, out_hw):
    if out_hw[0] > in_hw[0] or out_hw[1] > in_hw[1]:
        raise ValueError(f"crop {out_hw} larger than input {in_hw}")


def random_crop_stack(stack: np.ndarray, out_hw, rng) -> np.ndarray:
    """One uniform offset over the feasible grid, shared by every frame."""
    h, w = out_hw
    H, W = stack.shape[-2:]
    _check_size((H, W), (h, w))
    r = rng.integers(0, H - h + 1)
    c = rng.integers(0, W - w + 1)
    return stack[..., r:r + h, c:c + w].copy()


def center_crop_stack(stack: np.ndarray, out_hw) -> np.ndarray:
    h, w = out_hw
    H, W = stack.shape[-2:]
    _check_size((H, W), (h, w))
    r = (H - h) // 2
    c = (W - w) // 2
    return stack[..., r:r + h, c:c + w].copy()


def random_crop_batch(batch: np.ndarray, out_hw, rng) -> np.ndarray:
    """Independent offsets per stack in a (B, S, H, W) batch, shared within each."""
    B, S, H, W = batch.shape
    h, w = out_hw
    _check_size((H, W), (h, w))
    rs = rng.integers(0, H - h + 1, size=B)
    cs = rng.integers(0, W - w + 1, size=B)
    if H == h and W == w:
        return batch.copy()
    windows = sliding_window_view(batch, (h, w), axis=(2, 3))
    return windows[np.arange(B), :, rs, cs]


def make_query_key(batch: np.ndarray, out_hw, rng):
    """Two independent random crops of each observation: (queries, keys).

    Row i of the keys is the positive for row i of the queries; every
    other key in the batch serves as a negative.
    """
    if batch.shape[0] == 0:
        raise ValueError("make_query_key: empty batch")
    queries = random_crop_batch(batch, out_hw, rng)
    keys = random_crop_batch(batch, out_hw, rng)
    return queries, keys
