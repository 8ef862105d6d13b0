"""Adam with bias correction, operating in place on Tensor parameters."""

import numpy as np

from .autodiff import Tensor, strict_checks


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.t = 0


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.state = AdamState(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        """Apply one bias-corrected Adam update; missing grads count as zero."""
        st = self.state
        st.t += 1
        c1 = 1.0 - self.beta1 ** st.t
        c2 = 1.0 - self.beta2 ** st.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            elif strict_checks() and not np.all(np.isfinite(g)):
                name = p.name or f"param[{i}]"
                raise FloatingPointError(f"adam: non-finite gradient for {name}")
            st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * g
            st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = st.m[i] / c1
            vhat = st.v[i] / c2
            p.values -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)

    def state_arrays(self):
        """Named moment buffers for checkpointing, aligned with param names."""
        out = []
        for i, p in enumerate(self.params):
            name = p.name or f"param{i}"
            out.append((f"{name}.adam_m", self.state.m[i]))
            out.append((f"{name}.adam_v", self.state.v[i]))
        return out

    def load_state_arrays(self, arrays, t):
        lookup = dict(arrays)
        for i, p in enumerate(self.params):
            name = p.name or f"param{i}"
            self.state.m[i] = lookup[f"{name}.adam_m"].reshape(p.shape).astype(p.dtype)
            self.state.v[i] = lookup[f"{name}.adam_v"].reshape(p.shape).astype(p.dtype)
        self.state.t = t
