"""Pixel-based RL with a jointly trained contrastive auxiliary objective.

Library layout: ``autodiff``/``optim`` (reverse-mode engine and Adam),
``nn`` (pixel encoder, dense heads), ``augment`` (stack-consistent crops),
``contrastive`` (bilinear InfoNCE, momentum key encoder), ``replay``,
``envs`` (toy rendered control tasks with state oracles), ``agents``
(SAC and double DQN), and the experiment harness (``config``, ``train``,
``probe``, ``ablate``, ``plots``, ``cli``).
"""

__version__ = "0.1.0"


def _tune_allocator():
    # keep numpy's large temporaries on the heap instead of fresh mmaps;
    # the training loop reallocates multi-MB im2col buffers every step
    import ctypes
    import sys
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 30)   # M_MMAP_THRESHOLD
    except OSError:
        pass


_tune_allocator()
