"""Soft actor-critic over the shared pixel encoder, jointly trained with
the contrastive objective.

Gradient routing follows the shared-encoder design: the convolutional
stack is trained by the critic Bellman error plus the contrastive loss
(summed, equal weight by default), the actor sees a detached latent, and
the critic targets are evaluated through an EMA copy of the encoder that
doubles as the contrastive key encoder.
"""

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..contrastive import ContrastivePair, bilinear_logits, infonce_loss, momentum_update
from ..nn import LATENT_DIM, Mlp, PixelEncoder
from ..optim import Adam

_TANH_EPS = 1e-6          # change-of-variables stabilizer
_ACTION_CLIP = 1.0 - 1e-6  # keep emitted actions strictly inside (-1, 1)


def _squash_log_std(raw: Tensor, lo: float, hi: float) -> Tensor:
    """Differentiable clamp of the log-std head into [lo, hi]."""
    t = ad.tanh(raw)
    return ad.add(ad.mul(t, Tensor(np.asarray(0.5 * (hi - lo), dtype=t.dtype))),
                  Tensor(np.asarray(lo + 0.5 * (hi - lo), dtype=t.dtype)))


def _policy_heads(policy: Mlp, z: Tensor, action_dim: int, bounds):
    out = policy.forward(z)
    mu = ad.tslice(out, (slice(None), slice(0, action_dim)))
    log_std = _squash_log_std(
        ad.tslice(out, (slice(None), slice(action_dim, 2 * action_dim))), *bounds)
    return mu, log_std


def sample_action(z: Tensor, policy: Mlp, rng=None, deterministic=False,
                  bounds=(-10.0, 2.0), noise=None):
    """Squashed-Gaussian sample a = tanh(mu + sigma * xi), plus its log prob.

    The log prob carries the tanh change-of-variables correction
    sum(log(1 - tanh(u)^2 + eps)).  Works on the active tape, so calling
    it inside a recording context makes it reparameterized.
    """
    B = z.shape[0]
    action_dim = policy.dims[-1] // 2
    mu, log_std = _policy_heads(policy, z, action_dim, bounds)
    if deterministic:
        a = ad.tanh(mu)
        logp = None
    else:
        if noise is None:
            noise = rng.standard_normal((B, action_dim))
        xi = Tensor(np.asarray(noise, dtype=mu.dtype))
        u = ad.add(mu, ad.mul(ad.exp(log_std), xi))
        a = ad.tanh(u)
        base = ad.gaussian_log_prob(u, mu, log_std)
        corr = ad.tsum(ad.log((1.0 + _TANH_EPS) - ad.mul(a, a)), axis=1)
        logp = ad.add(base, ad.mul(corr, Tensor(np.asarray(-1.0, dtype=base.dtype))))
    return a, logp


def action_log_prob(z: Tensor, policy: Mlp, actions: np.ndarray,
                    bounds=(-10.0, 2.0)) -> Tensor:
    """Log density of given squashed actions under the current policy."""
    action_dim = policy.dims[-1] // 2
    mu, log_std = _policy_heads(policy, z, action_dim, bounds)
    a = np.clip(np.asarray(actions, dtype=np.float64), -_ACTION_CLIP, _ACTION_CLIP)
    u = Tensor(np.arctanh(a).astype(str(mu.dtype)))
    base = ad.gaussian_log_prob(u, mu, log_std)
    corr = np.log(1.0 + _TANH_EPS - a * a).sum(axis=1).astype(str(mu.dtype))
    return ad.add(base, Tensor(-corr))


def actor_and_alpha_update(z_values: np.ndarray, policy: Mlp, log_alpha: Tensor,
                           actor_opt: Adam, alpha_opt: Adam, min_q_fn,
                           target_entropy: float, noise: np.ndarray,
                           bounds=(-10.0, 2.0)):
    """One actor step (alpha * logp - minQ) and one temperature step.

    ``min_q_fn(z, a)`` evaluates the twin-critic minimum on the active
    tape; the encoder latent arrives as values only, so no gradient
    reaches the encoder from here.
    """
    z = Tensor(z_values)
    alpha = float(np.exp(log_alpha.values))

    actor_opt.zero_grad()
    with ad.Tape() as tape:
        a, logp = sample_action(z, policy, noise=noise, bounds=bounds)
        qmin = min_q_fn(z, a)
        if qmin.values.ndim == 2:
            qmin = ad.reshape(qmin, (qmin.shape[0],))
        actor_loss = ad.tmean(ad.add(ad.mul(logp, Tensor(np.asarray(alpha, dtype=logp.dtype))),
                                     ad.mul(qmin, Tensor(np.asarray(-1.0, dtype=qmin.dtype)))))
        tape.backward(actor_loss)
    actor_opt.step()

    logp_vals = logp.values.copy()
    alpha_opt.zero_grad()
    with ad.Tape() as tape:
        drive = Tensor((logp_vals + target_entropy).astype(log_alpha.dtype))
        alpha_loss = ad.tmean(ad.mul(ad.mul(log_alpha, Tensor(np.asarray(-1.0, dtype=log_alpha.dtype))),
                                     drive))
        tape.backward(alpha_loss)
    alpha_opt.step()

    return float(actor_loss.values), float(alpha_loss.values), float(np.exp(log_alpha.values)), \
        float(-logp_vals.mean())


def soft_update(online: dict, target: dict, tau: float):
    """target <- (1 - tau) * target + tau * online, elementwise."""
    for key, tp in target.items():
        tp.values = (1.0 - tau) * tp.values + tau * online[key].values


class SacAgent:
    """Twin-critic SAC; pixel mode carries the shared encoder and the
    contrastive pair, state mode consumes the oracle state directly."""

    def __init__(self, cfg, action_dim: int, rng, state_dim: int = None):
        a = cfg.agent
        self.cfg = cfg
        self.action_dim = action_dim
        self.pixels = a.kind != "state_sac_oracle"
        self.first_frame = cfg.contrastive.first_frame and self.pixels
        self.with_curl = cfg.contrastive.enabled and self.pixels
        self.detach_encoder = cfg.train.detach_encoder
        self.discount = a.discount
        self.critic_tau = a.critic_tau
        self.target_update_freq = a.critic_target_update_freq
        self.bounds = (a.log_std_min, a.log_std_max)
        self.target_entropy = a.target_entropy if a.target_entropy != 0.0 else -float(action_dim)
        self.curl_weight = cfg.contrastive.weight
        self.n_rl_updates = 0
        self.n_curl_updates = 0

        if self.pixels:
            in_ch = 1 if self.first_frame else cfg.env.frame_stack
            self.encoder = PixelEncoder(in_ch, cfg.encoder.crop_size, rng, name="encoder")
            self.rl_latent_dim = LATENT_DIM * (cfg.env.frame_stack if self.first_frame else 1)
        else:
            self.encoder = None
            self.rl_latent_dim = state_dim

        h = a.hidden_dim
        self.actor = Mlp([self.rl_latent_dim, h, h, 2 * action_dim], rng, name="actor")
        self.critic1 = Mlp([self.rl_latent_dim + action_dim, h, h, 1], rng, name="critic1")
        self.critic2 = Mlp([self.rl_latent_dim + action_dim, h, h, 1], rng, name="critic2")
        self.critic1_target = self.critic1.clone(name="critic1_target")
        self.critic2_target = self.critic2.clone(name="critic2_target")
        self.log_alpha = Tensor(np.asarray(np.log(a.init_temperature), dtype=ad.default_dtype()),
                                requires_grad=True, name="log_alpha")

        self.pair = None
        if self.pixels:
            self.target_encoder = self.encoder.clone(name="encoder_target")
            if self.with_curl:
                self.pair = ContrastivePair(self.encoder, 1.0 - cfg.contrastive.encoder_tau,
                                            rng=rng, key_encoder=self.target_encoder)
        joint_params = []
        if self.pixels:
            joint_params += self.encoder.parameters()
        joint_params += self.critic1.parameters() + self.critic2.parameters()
        if self.pair is not None:
            joint_params.append(self.pair.bilinear_w)
        self.joint_opt = Adam(joint_params, lr=a.lr, betas=(a.adam_beta1, a.adam_beta2),
                              eps=a.adam_eps)
        self.actor_opt = Adam(self.actor.parameters(), lr=a.lr,
                              betas=(a.adam_beta1, a.adam_beta2), eps=a.adam_eps)
        self.alpha_opt = Adam([self.log_alpha], lr=a.alpha_lr,
                              betas=(a.alpha_beta1, a.adam_beta2), eps=a.adam_eps)

    # ------------------------------------------------------------------
    # encoding helpers

    def _encode_rl(self, obs: np.ndarray, share_convs=None):
        """RL-branch latent; per-frame encoding in first-frame mode."""
        if self.first_frame:
            B, S, hh, ww = obs.shape
            frames = obs.reshape(B * S, 1, hh, ww)
            lat = self.encoder.forward(frames, detach_convs=self.detach_encoder)
            return ad.reshape(lat, (B, S * LATENT_DIM))
        h = share_convs if share_convs is not None else self.encoder.conv_features(obs)
        return self.encoder.head(h, detach_convs=self.detach_encoder)

    def encode_eval(self, obs01: np.ndarray) -> np.ndarray:
        """Latent for action selection: (S, h, w) float in [0, 1] -> (1, L)."""
        with ad.no_grad():
            return self._encode_rl(obs01[None]).values

    # ------------------------------------------------------------------
    # acting

    def act(self, obs, deterministic: bool, rng=None) -> np.ndarray:
        """obs is a scaled pixel stack in pixel mode, a state vector otherwise."""
        if self.pixels:
            z = self.encode_eval(obs)
        else:
            z = np.asarray(obs, dtype=ad.default_dtype())[None]
        with ad.no_grad():
            a, _ = sample_action(Tensor(z), self.actor, rng=rng,
                                 deterministic=deterministic, bounds=self.bounds)
        return np.clip(a.values[0], -_ACTION_CLIP, _ACTION_CLIP)

    # ------------------------------------------------------------------
    # losses

    def _min_q_current(self, z: Tensor, a: Tensor) -> Tensor:
        q_in = ad.concat([z, a], axis=1)
        return ad.min_elementwise(self.critic1.forward(q_in), self.critic2.forward(q_in))

    def compute_targets(self, batch, rng) -> np.ndarray:
        """y = r + gamma * (1 - d) * (min_i Q*_i(o', a') - alpha log pi(a'|o')).

        Evaluated without gradient.  Both the freshly sampled a' and the
        target critics consume the EMA encoder's latent of o', saving an
        encoder pass per update.
        """
        B = batch.reward.shape[0]
        noise = rng.standard_normal((B, self.action_dim))
        with ad.no_grad():
            if self.pixels:
                if self.first_frame:
                    S = batch.next_obs.shape[1]
                    frames = batch.next_obs.reshape(B * S, 1, *batch.next_obs.shape[2:])
                    z_tgt = self.target_encoder.forward(frames).values.reshape(B, -1)
                else:
                    z_tgt = self.target_encoder.forward(batch.next_obs).values
            else:
                z_tgt = np.asarray(batch.next_obs, dtype=ad.default_dtype())
            a2, logp2 = sample_action(Tensor(z_tgt), self.actor, noise=noise, bounds=self.bounds)
            q_in = ad.concat([Tensor(z_tgt), a2], axis=1)
            q1t = self.critic1_target.forward(q_in).values[:, 0]
            q2t = self.critic2_target.forward(q_in).values[:, 0]
        alpha = float(np.exp(self.log_alpha.values))
        target_v = np.minimum(q1t, q2t) - alpha * logp2.values
        y = batch.reward + self.discount * (1.0 - batch.done) * target_v
        return y.astype(ad.default_dtype())

    def critic_loss_tensor(self, batch, y: np.ndarray, share_convs=None, z_rl=None):
        """Sum of the two critics' mean squared Bellman errors, on the tape."""
        if z_rl is None:
            if self.pixels:
                z_rl = self._encode_rl(batch.obs, share_convs)
            else:
                z_rl = Tensor(np.asarray(batch.obs, dtype=ad.default_dtype()))
        q_in = ad.concat([z_rl, Tensor(batch.action)], axis=1)
        y_t = Tensor(y[:, None])
        d1 = self.critic1.forward(q_in) - y_t
        d2 = self.critic2.forward(q_in) - y_t
        return ad.add(ad.tmean(ad.mul(d1, d1)), ad.tmean(ad.mul(d2, d2))), z_rl

    def curl_loss_tensor(self, queries01, key_latents, share_z=None):
        """InfoNCE over bilinear logits; anchor via the live encoder."""
        if share_z is not None:
            z_q = share_z
        else:
            q_in = queries01[:, :1] if self.first_frame else queries01
            z_q = self.encoder.forward(q_in)
        logits = bilinear_logits(z_q, key_latents, self.pair.bilinear_w)
        return infonce_loss(logits)

    def encode_keys(self, keys01: np.ndarray) -> np.ndarray:
        k_in = keys01[:, :1] if self.first_frame else keys01
        return self.pair.encode_keys(k_in)

    # ------------------------------------------------------------------
    # the joint update

    def joint_update(self, batch, rng) -> dict:
        """One fused RL + contrastive gradient step, then the actor,
        temperature, and scheduled EMA updates."""
        y = self.compute_targets(batch, rng)
        curl_keys = None
        if self.with_curl and batch.keys is not None:
            curl_keys = self.encode_keys(batch.keys)

        self.joint_opt.zero_grad()
        metrics = {}
        with ad.Tape() as tape:
            share_convs = None
            z_rl = None
            if self.pixels and not self.first_frame:
                share_convs = self.encoder.conv_features(batch.obs)
                z_rl = self.encoder.head(share_convs, detach_convs=self.detach_encoder)
            critic_loss, z_rl = self.critic_loss_tensor(batch, y, share_convs, z_rl)
            loss = critic_loss
            if curl_keys is not None:
                share_z = None
                if (not self.cfg.train.no_aug_rl and not self.first_frame):
                    # RL branch already consumed the query crop; reuse it
                    share_z = self.encoder.head(share_convs) if self.detach_encoder else z_rl
                curl_loss, curl_acc = self.curl_loss_tensor(batch.queries, curl_keys, share_z)
                loss = ad.add(loss, ad.mul(curl_loss, Tensor(
                    np.asarray(self.curl_weight, dtype=curl_loss.dtype))))
                metrics["curl_loss"] = float(curl_loss.values)
                metrics["curl_acc"] = curl_acc
            tape.backward(loss)
        self.joint_opt.step()
        metrics["critic_loss"] = float(critic_loss.values)
        self.n_rl_updates += 1
        if curl_keys is not None:
            self.n_curl_updates += 1

        B = batch.reward.shape[0]
        z_actor = z_rl.values if self.pixels else np.asarray(batch.obs, dtype=ad.default_dtype())
        noise = rng.standard_normal((B, self.action_dim))
        actor_loss, alpha_loss, alpha, entropy = actor_and_alpha_update(
            z_actor, self.actor, self.log_alpha, self.actor_opt, self.alpha_opt,
            self._min_q_current, self.target_entropy, noise, self.bounds)
        metrics.update(actor_loss=actor_loss, alpha_loss=alpha_loss, alpha=alpha,
                       entropy=entropy)

        if self.n_rl_updates % self.target_update_freq == 0:
            self.target_update()
        return metrics

    def target_update(self):
        """Critic MLP targets at tau_Q; the conv encoder's EMA copy at the
        (shared, contrastive) encoder rate."""
        soft_update(self.critic1.params, self.critic1_target.params, self.critic_tau)
        soft_update(self.critic2.params, self.critic2_target.params, self.critic_tau)
        if self.pixels:
            if self.pair is not None:
                momentum_update(self.pair)
            else:
                soft_update(self.encoder.params, self.target_encoder.params,
                            self.cfg.contrastive.encoder_tau)

    # ------------------------------------------------------------------
    # checkpoint support

    def named_arrays(self):
        mods = [self.actor, self.critic1, self.critic2,
                self.critic1_target, self.critic2_target]
        if self.pixels:
            mods = [self.encoder, self.target_encoder] + mods
        out = []
        for m in mods:
            for p in m.parameters():
                out.append((p.name, p.values))
        out.append((self.log_alpha.name, self.log_alpha.values))
        if self.pair is not None:
            out.append((self.pair.bilinear_w.name, self.pair.bilinear_w.values))
        for opt in (self.joint_opt, self.actor_opt, self.alpha_opt):
            for name, arr in opt.state_arrays():
                out.append((name, arr))
        return out

    def optimizer_steps(self):
        return {"joint": self.joint_opt.state.t, "actor": self.actor_opt.state.t,
                "alpha": self.alpha_opt.state.t}

    def load_arrays(self, arrays: dict, opt_steps: dict = None):
        mods = [self.actor, self.critic1, self.critic2,
                self.critic1_target, self.critic2_target]
        if self.pixels:
            mods = [self.encoder, self.target_encoder] + mods
        for m in mods:
            for p in m.parameters():
                p.values = arrays[p.name].reshape(p.shape).astype(p.dtype)
        self.log_alpha.values = arrays[self.log_alpha.name].reshape(()).astype(self.log_alpha.dtype)
        if self.pair is not None:
            w = self.pair.bilinear_w
            w.values = arrays[w.name].reshape(w.shape).astype(w.dtype)
        if opt_steps:
            self.joint_opt.load_state_arrays(arrays.items(), opt_steps["joint"])
            self.actor_opt.load_state_arrays(arrays.items(), opt_steps["actor"])
            self.alpha_opt.load_state_arrays(arrays.items(), opt_steps["alpha"])
