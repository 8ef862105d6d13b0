"""Experiment loop: warmup, act/store/update, periodic evaluation, checkpoint.

Step accounting: one interaction step is one policy decision; environment
steps advance by the action repeat, so env_step = interaction_step *
action_repeat on every metrics row.  Metrics rows are appended once per
evaluation (at step 0, on the evaluation cadence, and at the end of the
budget).  Runs are bit-reproducible for a fixed seed; the wall-clock
column comes from an injectable clock so tests can pin it too.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .agents import DqnAgent, SacAgent
from .augment import center_crop_stack, random_crop_stack
from .config import ExperimentConfig, from_text, to_text
from .envs import make_env, write_pgm
from .replay import ReplayBuffer, Transition
from .rng import get_state, make_streams, set_state

CSV_HEADER = ("env_step,interaction_step,train_return,eval_mean,eval_std,"
              "curl_loss,curl_acc,critic_loss,actor_loss,alpha,wall_s")


@dataclass
class MetricsRow:
    env_step: int
    interaction_step: int
    train_return: float
    eval_mean: float
    eval_std: float
    curl_loss: float
    curl_acc: float
    critic_loss: float
    actor_loss: float
    alpha: float
    wall_s: float

    def to_csv(self) -> str:
        vals = [str(self.env_step), str(self.interaction_step)]
        for v in (self.train_return, self.eval_mean, self.eval_std, self.curl_loss,
                  self.curl_acc, self.critic_loss, self.actor_loss, self.alpha,
                  self.wall_s):
            vals.append(f"{v:.6f}")
        return ",".join(vals)


def build_env(cfg: ExperimentConfig):
    return make_env(cfg.env.id, cfg.env.render_size, cfg.env.frame_stack,
                    cfg.env.action_repeat, cfg.env.episode_len, cfg.env.grid_size)


def make_agent(cfg: ExperimentConfig, rng, env):
    kind = cfg.agent.kind
    if kind == "sac":
        return SacAgent(cfg, env.action_dim, rng)
    if kind == "state_sac_oracle":
        return SacAgent(cfg, env.action_dim, rng, state_dim=env.state_dim)
    if kind == "dqn":
        state_dim = env.state_dim if cfg.agent.state_features else None
        return DqnAgent(cfg, env.n_actions, rng, state_dim=state_dim)
    raise ValueError(f"unknown agent kind {kind!r}")


def _uses_pixels(cfg: ExperimentConfig) -> bool:
    if cfg.agent.kind == "state_sac_oracle":
        return False
    if cfg.agent.kind == "dqn" and cfg.agent.state_features:
        return False
    return True


def _act_obs(cfg, env, stack_u8, aug_rng, training: bool):
    """Observation handed to the policy: cropped pixels or the oracle state."""
    if not _uses_pixels(cfg):
        return env.true_state()
    hw = (cfg.encoder.crop_size, cfg.encoder.crop_size)
    if training and not cfg.train.no_aug_rl:
        crop = random_crop_stack(stack_u8, hw, aug_rng)
    else:
        crop = center_crop_stack(stack_u8, hw)
    return crop.astype(np.float32) / 255.0


def evaluate_agent(cfg, agent, eval_rng, episodes: int):
    """Deterministic policy, center-cropped observations, fresh episodes."""
    env = build_env(cfg)
    returns = []
    for _ in range(episodes):
        stack, _ = env.reset(eval_rng)
        done = False
        total = 0.0
        while not done:
            obs = _act_obs(cfg, env, stack, None, training=False)
            if cfg.agent.kind == "dqn":
                action = agent.act(obs, 0, eval_rng, greedy=True)
            else:
                action = agent.act(obs, deterministic=True)
            stack, reward, done, _ = env.step(action)
            total += reward
        returns.append(total)
    returns = np.asarray(returns, dtype=np.float64)
    return float(returns.mean()), float(returns.std()), returns


def _update_once(cfg, agent, buffer, aug_rng, act_rng):
    hw = (cfg.encoder.crop_size, cfg.encoder.crop_size)
    aug = not cfg.train.no_aug_rl
    if cfg.agent.kind == "dqn":
        parts = buffer.sample_dqn_and_curl(
            cfg.replay.batch_size, cfg.agent.n_step, aug_rng, crop_hw=hw,
            aug_rl=aug, with_curl=agent.with_curl, min_fill=cfg.replay.min_fill)
        return agent.joint_update(parts["obs"], parts["actions"], parts["rewards"],
                                  parts["horizons"], parts["done_h"], parts["boot_obs"],
                                  queries=parts["queries"], keys=parts["keys"])
    batch = buffer.sample_rl_and_curl(
        cfg.replay.batch_size, aug_rng, hw, aug_rl=aug,
        with_curl=agent.with_curl, min_fill=cfg.replay.min_fill)
    return agent.joint_update(batch, act_rng)


def train(cfg: ExperimentConfig, out_dir, clock=None, resume_from=None):
    """Run the configured budget; returns (final MetricsRow, checkpoint path)."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    clock = clock or time.monotonic
    ad.set_strict_checks(cfg.train.strict_checks)

    streams = make_streams(cfg.train.seed)
    env = build_env(cfg)
    agent = make_agent(cfg, streams["init"], env)
    pixel_obs = _uses_pixels(cfg)
    if pixel_obs:
        obs_shape = (cfg.env.frame_stack, cfg.env.render_size, cfg.env.render_size)
    else:
        obs_shape = (env.state_dim,)
    discrete = cfg.agent.kind == "dqn"
    buffer = ReplayBuffer(cfg.replay.capacity, obs_shape,
                          action_dim=None if discrete else env.action_dim,
                          discrete=discrete, pixel_obs=pixel_obs)

    action_repeat = cfg.env.action_repeat
    total_isteps = cfg.train.total_env_steps // action_repeat
    eval_every = cfg.eval.every_isteps
    last = {"curl_loss": 0.0, "curl_acc": 0.0, "critic_loss": 0.0,
            "actor_loss": 0.0, "alpha": 0.0, "train_return": 0.0}
    wall_base = 0.0
    start_istep = 0

    csv_path = os.path.join(out_dir, "metrics.csv")
    rows = []

    if resume_from is not None:
        arrays, config_text, state = ckpt.load(resume_from)
        agent.load_arrays(arrays, state["optimizer_steps"])
        for name, gen in streams.items():
            set_state(gen, state["rng"][name])
        resume = ckpt.load_resume_arrays(resume_from)
        if resume is None:
            raise ValueError(f"checkpoint {resume_from} has no resume state "
                             f"(train with train.save_replay=true)")
        buffer.load_state_arrays(resume)
        env.restore({k[4:]: resume[k] for k in resume if k.startswith("env_")})
        start_istep = int(resume["istep"])
        wall_base = float(resume["wall_s"])
        for key in last:
            last[key] = float(resume[f"last_{key}"])
        agent.n_rl_updates = int(resume["n_rl_updates"])
        agent.n_curl_updates = int(resume["n_curl_updates"])
        episode_return = float(resume["episode_return"])
        stack = env.observation()
        csv_file = open(csv_path, "w")
        csv_file.write(CSV_HEADER + "\n")
    else:
        csv_file = open(csv_path, "w")
        csv_file.write(CSV_HEADER + "\n")
        stack, _ = env.reset(streams["env"])
        episode_return = 0.0

    with open(os.path.join(out_dir, "config.cfg"), "w") as f:
        f.write(to_text(cfg))

    if cfg.train.dump_frames > 0:
        frames_dir = os.path.join(out_dir, "frames")
        os.makedirs(frames_dir, exist_ok=True)

    t_start = clock()

    def emit_row(istep):
        mean, std, _ = evaluate_agent(cfg, agent, streams["eval"], cfg.eval.episodes)
        row = MetricsRow(
            env_step=istep * action_repeat, interaction_step=istep,
            train_return=last["train_return"], eval_mean=mean, eval_std=std,
            curl_loss=last["curl_loss"], curl_acc=last["curl_acc"],
            critic_loss=last["critic_loss"], actor_loss=last["actor_loss"],
            alpha=last["alpha"], wall_s=wall_base + (clock() - t_start))
        rows.append(row)
        csv_file.write(row.to_csv() + "\n")
        csv_file.flush()
        return row

    if start_istep == 0:
        emit_row(0)

    for istep in range(start_istep + 1, total_isteps + 1):
        in_warmup = istep <= cfg.train.initial_steps
        if in_warmup:
            if discrete:
                action = int(streams["action"].integers(0, env.n_actions))
            else:
                action = streams["action"].uniform(-1.0, 1.0, size=env.action_dim)
        else:
            obs = _act_obs(cfg, env, stack, streams["augment"], training=True)
            if discrete:
                action = agent.act(obs, istep - cfg.train.initial_steps,
                                   streams["action"])
            else:
                action = agent.act(obs, deterministic=False, rng=streams["action"])

        prev_store = stack if pixel_obs else env.true_state()
        stack, reward, done, _ = env.step(action)
        episode_return += reward
        # time-limit ends keep bootstrapping; only true terminals cut it
        push_done = bool(done and not env.truncated)
        next_store = stack if pixel_obs else env.true_state()
        buffer.push(Transition(prev_store, action, reward, next_store, push_done))
        if cfg.train.dump_frames > 0 and istep <= cfg.train.dump_frames:
            write_pgm(os.path.join(frames_dir, f"step{istep:05d}.pgm"), stack[-1])
        if done:
            last["train_return"] = episode_return
            episode_return = 0.0
            stack, _ = env.reset(streams["env"])

        if not in_warmup:
            for _ in range(cfg.train.updates_per_step):
                metrics = _update_once(cfg, agent, buffer, streams["augment"],
                                       streams["action"])
                for key in ("curl_loss", "curl_acc", "critic_loss", "actor_loss",
                            "alpha"):
                    if key in metrics:
                        last[key] = metrics[key]

        if istep % eval_every == 0 or istep == total_isteps:
            final_row = emit_row(istep)

    if total_isteps == start_istep:
        final_row = rows[-1] if rows else emit_row(start_istep)
    csv_file.close()

    ckpt_path = os.path.join(out_dir, "checkpoint")
    _save_checkpoint(cfg, agent, streams, ckpt_path, buffer, env,
                     istep=total_isteps, wall_s=wall_base + (clock() - t_start),
                     last=last, episode_return=episode_return)
    return final_row, ckpt_path


def _save_checkpoint(cfg, agent, streams, path, buffer, env, istep, wall_s,
                     last, episode_return):
    state = {
        "rng": {name: get_state(gen) for name, gen in streams.items()},
        "optimizer_steps": agent.optimizer_steps(),
        "counters": {"n_rl_updates": agent.n_rl_updates,
                     "n_curl_updates": agent.n_curl_updates,
                     "interaction_step": istep},
    }
    resume = None
    if cfg.train.save_replay:
        resume = dict(buffer.state_arrays())
        for k, v in env.snapshot().items():
            resume[f"env_{k}"] = v
        resume["istep"] = np.asarray(istep)
        resume["wall_s"] = np.asarray(wall_s)
        resume["episode_return"] = np.asarray(episode_return)
        resume["n_rl_updates"] = np.asarray(agent.n_rl_updates)
        resume["n_curl_updates"] = np.asarray(agent.n_curl_updates)
        for key, val in last.items():
            resume[f"last_{key}"] = np.asarray(val)
    ckpt.save(path, agent.named_arrays(), to_text(cfg), state, resume_arrays=resume)
    return path


def load_agent(checkpoint_path):
    """Rebuild (cfg, agent) from a checkpoint directory."""
    arrays, config_text, state = ckpt.load(checkpoint_path)
    cfg = from_text(config_text)
    env = build_env(cfg)
    streams = make_streams(cfg.train.seed)
    agent = make_agent(cfg, streams["init"], env)
    agent.load_arrays(arrays, state["optimizer_steps"])
    return cfg, agent


def evaluate(checkpoint_path, episodes=None, seed=None):
    """Evaluate a checkpoint: deterministic policy, center crops, fresh seeds."""
    cfg, agent = load_agent(checkpoint_path)
    episodes = episodes or cfg.eval.episodes
    eval_seed = cfg.train.seed if seed is None else seed
    eval_rng = make_streams(eval_seed)["eval"]
    mean, std, returns = evaluate_agent(cfg, agent, eval_rng, episodes)
    return mean, std
