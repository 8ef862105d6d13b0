"""Double DQN with multi-step returns for the discrete-control path.

The bootstrap action comes from the online network, its value from a
periodic hard snapshot of the network.  In pixel mode the shared conv
encoder also feeds the contrastive loss through an EMA key encoder.
"""

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..contrastive import ContrastivePair, bilinear_logits, infonce_loss, momentum_update
from ..nn import LATENT_DIM, Mlp, PixelEncoder
from ..optim import Adam


class DqnAgent:
    def __init__(self, cfg, n_actions: int, rng, state_dim: int = None):
        a = cfg.agent
        self.cfg = cfg
        self.n_actions = n_actions
        self.pixels = not a.state_features
        self.with_curl = cfg.contrastive.enabled and self.pixels
        self.detach_encoder = cfg.train.detach_encoder
        self.discount = a.discount
        self.n_step = a.n_step
        self.target_update_period = a.target_update_period
        self.eps_start = a.eps_start
        self.eps_final = a.eps_final
        self.eps_decay_steps = a.eps_decay_steps
        self.curl_weight = cfg.contrastive.weight
        self.n_rl_updates = 0
        self.n_curl_updates = 0

        if self.pixels:
            self.encoder = PixelEncoder(cfg.env.frame_stack, cfg.encoder.crop_size,
                                        rng, name="encoder")
            self.target_encoder = self.encoder.clone(name="encoder_target")
            latent = LATENT_DIM
        else:
            self.encoder = None
            self.target_encoder = None
            latent = state_dim

        h = a.hidden_dim
        self.qnet = Mlp([latent, h, h, n_actions], rng, name="qnet")
        self.qnet_target = self.qnet.clone(name="qnet_target")

        self.pair = None
        if self.with_curl:
            self.pair = ContrastivePair(self.encoder, 1.0 - cfg.contrastive.encoder_tau,
                                        rng=rng)
        params = (self.encoder.parameters() if self.pixels else []) + self.qnet.parameters()
        if self.pair is not None:
            params.append(self.pair.bilinear_w)
        self.opt = Adam(params, lr=a.lr, betas=(a.adam_beta1, a.adam_beta2), eps=a.adam_eps)

    # ------------------------------------------------------------------

    def epsilon(self, steps_after_warmup: int) -> float:
        frac = min(max(steps_after_warmup, 0) / max(self.eps_decay_steps, 1), 1.0)
        return self.eps_start + (self.eps_final - self.eps_start) * frac

    def q_values(self, obs, target=False) -> np.ndarray:
        """Action values for a batch; obs is scaled pixels or state vectors."""
        with ad.no_grad():
            if self.pixels:
                enc = self.target_encoder if target else self.encoder
                z = enc.forward(obs).values
            else:
                z = np.asarray(obs, dtype=ad.default_dtype())
            net = self.qnet_target if target else self.qnet
            return net.forward(Tensor(z)).values

    def act(self, obs, steps_after_warmup: int, rng, greedy=False) -> int:
        if not greedy and rng.random() < self.epsilon(steps_after_warmup):
            return int(rng.integers(0, self.n_actions))
        q = self.q_values(np.asarray(obs)[None])
        return int(np.argmax(q[0]))

    # ------------------------------------------------------------------

    def compute_targets(self, rewards, horizons, done_h, boot_obs) -> np.ndarray:
        """n-step double-Q target, truncated at episode ends.

        y = sum_j gamma^j r_j + gamma^h (1 - d_h) Q_tgt(o_h, argmax_a Q_online(o_h, a))
        """
        B, n = rewards.shape
        mask = np.arange(n)[None, :] < horizons[:, None]
        disc = self.discount ** np.arange(n)
        y = (rewards * mask * disc[None, :]).sum(axis=1)
        q_online = self.q_values(boot_obs)
        best = np.argmax(q_online, axis=1)
        q_tgt = self.q_values(boot_obs, target=True)[np.arange(B), best]
        y = y + (self.discount ** horizons) * (1.0 - done_h) * q_tgt
        return y.astype(ad.default_dtype())

    def td_loss_tensor(self, obs, actions, y):
        if self.pixels:
            z = self.encoder.forward(obs, detach_convs=self.detach_encoder)
        else:
            z = Tensor(np.asarray(obs, dtype=ad.default_dtype()))
        qs = self.qnet.forward(z)
        onehot = np.zeros((len(actions), self.n_actions), dtype=ad.default_dtype())
        onehot[np.arange(len(actions)), actions] = 1.0
        q_sel = ad.tsum(ad.mul(qs, Tensor(onehot)), axis=1)
        diff = q_sel - Tensor(y)
        return ad.tmean(ad.mul(diff, diff))

    def joint_update(self, obs, actions, rewards, horizons, done_h, boot_obs,
                     queries=None, keys=None) -> dict:
        y = self.compute_targets(rewards, horizons, done_h, boot_obs)
        curl_keys = self.pair.encode_keys(keys) if (self.with_curl and keys is not None) else None

        self.opt.zero_grad()
        metrics = {}
        with ad.Tape() as tape:
            loss = self.td_loss_tensor(obs, actions, y)
            metrics["critic_loss"] = float(loss.values)
            if curl_keys is not None:
                z_q = self.encoder.forward(queries)
                logits = bilinear_logits(z_q, curl_keys, self.pair.bilinear_w)
                curl_loss, curl_acc = infonce_loss(logits)
                loss = ad.add(loss, ad.mul(curl_loss, Tensor(
                    np.asarray(self.curl_weight, dtype=curl_loss.dtype))))
                metrics["curl_loss"] = float(curl_loss.values)
                metrics["curl_acc"] = curl_acc
            tape.backward(loss)
        self.opt.step()
        self.n_rl_updates += 1
        if curl_keys is not None:
            momentum_update(self.pair)
            self.n_curl_updates += 1
        if self.n_rl_updates % self.target_update_period == 0:
            self.target_update()
        return metrics

    def target_update(self):
        """Hard snapshot of the online network (and encoder in pixel mode)."""
        for key, tp in self.qnet_target.params.items():
            tp.values = self.qnet.params[key].values.copy()
        if self.pixels:
            for key, tp in self.target_encoder.params.items():
                tp.values = self.encoder.params[key].values.copy()

    # ------------------------------------------------------------------

    def named_arrays(self):
        mods = [self.qnet, self.qnet_target]
        if self.pixels:
            mods = [self.encoder, self.target_encoder] + mods
        out = []
        for m in mods:
            for p in m.parameters():
                out.append((p.name, p.values))
        if self.pair is not None:
            out.append((self.pair.bilinear_w.name, self.pair.bilinear_w.values))
            for key, p in self.pair.key_encoder.params.items():
                out.append((f"key_encoder.{key}", p.values))
        for name, arr in self.opt.state_arrays():
            out.append((name, arr))
        return out

    def optimizer_steps(self):
        return {"joint": self.opt.state.t}

    def load_arrays(self, arrays: dict, opt_steps: dict = None):
        mods = [self.qnet, self.qnet_target]
        if self.pixels:
            mods = [self.encoder, self.target_encoder] + mods
        for m in mods:
            for p in m.parameters():
                p.values = arrays[p.name].reshape(p.shape).astype(p.dtype)
        if self.pair is not None:
            w = self.pair.bilinear_w
            w.values = arrays[w.name].reshape(w.shape).astype(w.dtype)
            for key, p in self.pair.key_encoder.params.items():
                p.values = arrays[f"key_encoder.{key}"].reshape(p.shape).astype(p.dtype)
        if opt_steps:
            self.opt.load_state_arrays(arrays.items(), opt_steps["joint"])
