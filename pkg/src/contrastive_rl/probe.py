"""Linear state-regression probe: how much oracle state the latents carry.

Frame-stack / state pairs are collected from random-action rollouts, the
stacks are center-cropped and encoded, and a ridge regression maps the
50-d latents to the state vector.  Targets are standardized on the train
split so the reported test MSE reads like one-minus-R^2: a constant
feature map (or infinite ridge) scores 1.0, the target variance.
"""

import numpy as np

from .augment import center_crop_stack
from .config import ExperimentConfig
from .envs import make_env
from .nn import PixelEncoder
from .rng import make_streams
from .train import build_env, load_agent


def collect_pairs(cfg: ExperimentConfig, n_samples: int, rng):
    """Random-policy rollouts yielding (center-cropped stacks, states)."""
    env = build_env(cfg)
    hw = (cfg.encoder.crop_size, cfg.encoder.crop_size)
    stacks = np.zeros((n_samples, cfg.env.frame_stack, *hw), dtype=np.float32)
    states = np.zeros((n_samples, env.state_dim), dtype=np.float64)
    i = 0
    while i < n_samples:
        stack, _ = env.reset(rng)
        done = False
        while not done and i < n_samples:
            stacks[i] = center_crop_stack(stack, hw).astype(np.float32) / 255.0
            states[i] = env.true_state()
            i += 1
            if env.discrete:
                action = int(rng.integers(0, env.n_actions))
            else:
                action = rng.uniform(-1.0, 1.0, size=env.action_dim)
            stack, _, done, _ = env.step(action)
    return stacks, states


def ridge_fit_mse(latents, targets, train_frac=0.8, ridge_lambda=1e-2):
    """Held-out MSE of a ridge regression, targets standardized on train."""
    n = latents.shape[0]
    n_train = int(n * train_frac)
    Xtr, Xte = latents[:n_train], latents[n_train:]
    Ytr, Yte = targets[:n_train], targets[n_train:]
    mu, sd = Ytr.mean(axis=0), Ytr.std(axis=0)
    sd = np.where(sd < 1e-8, 1.0, sd)
    Ytr = (Ytr - mu) / sd
    Yte = (Yte - mu) / sd
    Xtr = np.column_stack([Xtr, np.ones(len(Xtr))])
    Xte = np.column_stack([Xte, np.ones(len(Xte))])
    d = Xtr.shape[1]
    reg = ridge_lambda * np.eye(d)
    reg[-1, -1] = 0.0   # no penalty on the intercept
    w = np.linalg.solve(Xtr.T @ Xtr + reg, Xtr.T @ Ytr)
    pred = Xte @ w
    return float(np.mean((pred - Yte) ** 2))


def encode_stacks(encoder: PixelEncoder, stacks: np.ndarray, first_frame=False,
                  batch=256) -> np.ndarray:
    ins = stacks[:, :1] if first_frame else stacks
    outs = []
    for i in range(0, len(ins), batch):
        outs.append(encoder.encode_values(ins[i:i + batch]))
    return np.concatenate(outs, axis=0).astype(np.float64)


def probe_state_regression(checkpoint_path, n_samples=2000, seed=0,
                           ridge_lambda=1e-2):
    """Held-out state-regression MSE for the trained encoder and for a
    freshly initialized one; returns (trained_mse, random_mse)."""
    if n_samples < 10:
        raise ValueError(f"need at least 10 samples, got {n_samples}")
    cfg, agent = load_agent(checkpoint_path)
    if agent.encoder is None:
        raise ValueError("checkpointed agent has no pixel encoder to probe")
    rng = make_streams(seed)["eval"]
    stacks, states = collect_pairs(cfg, n_samples, rng)

    first_frame = cfg.contrastive.first_frame
    z_trained = encode_stacks(agent.encoder, stacks, first_frame)
    fresh = PixelEncoder(agent.encoder.in_channels, cfg.encoder.crop_size,
                         make_streams(seed + 1)["init"], name="probe_random")
    z_random = encode_stacks(fresh, stacks, first_frame)

    trained_mse = ridge_fit_mse(z_trained, states, ridge_lambda=ridge_lambda)
    random_mse = ridge_fit_mse(z_random, states, ridge_lambda=ridge_lambda)
    return trained_mse, random_mse
