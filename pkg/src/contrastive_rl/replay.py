"""Fixed-capacity FIFO transition store with uniform sampling.

Frames are kept once per transition at render resolution as uint8; crops
are materialized at sample time, so one stored observation can serve any
number of query/key pairs.
"""

from dataclasses import dataclass

import numpy as np

from .augment import center_crop_stack, random_crop_batch


@dataclass
class Transition:
    obs: np.ndarray          # (S, H, W) uint8
    action: np.ndarray       # float vector, or scalar int for discrete
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class SampledBatch:
    """One replay draw serving both the RL and the contrastive update."""
    obs: np.ndarray          # (B, S, h, w) float32 in [0, 1]
    action: np.ndarray
    reward: np.ndarray       # (B,) float32
    next_obs: np.ndarray
    done: np.ndarray         # (B,) float32
    queries: np.ndarray = None   # random crops of the same stored obs
    keys: np.ndarray = None
    indices: np.ndarray = None


def _scale(frames_u8: np.ndarray) -> np.ndarray:
    return frames_u8.astype(np.float32) / 255.0


class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape, action_dim: int = None,
                 discrete: bool = False, pixel_obs: bool = True):
        self.capacity = capacity
        self.pixel_obs = pixel_obs
        obs_dtype = np.uint8 if pixel_obs else np.float32
        self.obs = np.zeros((capacity,) + tuple(obs_shape), dtype=obs_dtype)
        self.next_obs = np.zeros_like(self.obs)
        if discrete:
            self.actions = np.zeros((capacity,), dtype=np.int64)
        else:
            self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros((capacity,), dtype=np.float32)
        self.dones = np.zeros((capacity,), dtype=np.float32)
        self.discrete = discrete
        self.cursor = 0
        self.fill = 0

    def __len__(self):
        return self.fill

    def push(self, t: Transition):
        if not np.isfinite(t.reward):
            raise ValueError(f"non-finite reward {t.reward!r}")
        i = self.cursor
        self.obs[i] = t.obs
        self.next_obs[i] = t.next_obs
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = float(t.done)
        self.cursor = (self.cursor + 1) % self.capacity
        self.fill = min(self.fill + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng) -> np.ndarray:
        """Uniform with replacement over the filled slots."""
        return rng.integers(0, self.fill, size=batch_size)

    def sample_rl_and_curl(self, batch_size: int, rng, crop_hw, aug_rl: bool = True,
                           with_curl: bool = True, min_fill: int = 1) -> SampledBatch:
        """One index draw feeding both updates.

        With augmentation on, the RL observation IS the contrastive query
        crop; the key is an independent second crop of the same frames.
        With augmentation off the RL branch gets center crops while the
        contrastive branch still gets two random crops.
        """
        if self.fill < max(min_fill, batch_size, 1):
            raise ValueError(
                f"replay has {self.fill} transitions; need at least "
                f"{max(min_fill, batch_size)} before sampling")
        idx = self.sample_indices(batch_size, rng)
        raw_obs = self.obs[idx]
        raw_next = self.next_obs[idx]

        if not self.pixel_obs:
            return SampledBatch(
                obs=raw_obs.copy(), action=self.actions[idx].copy(),
                reward=self.rewards[idx].copy(), next_obs=raw_next.copy(),
                done=self.dones[idx].copy(), indices=idx)

        queries = keys = None
        if aug_rl:
            rl_obs = random_crop_batch(raw_obs, crop_hw, rng)
            rl_next = random_crop_batch(raw_next, crop_hw, rng)
            if with_curl:
                queries = rl_obs
                keys = random_crop_batch(raw_obs, crop_hw, rng)
        else:
            rl_obs = center_crop_stack(raw_obs, crop_hw)
            rl_next = center_crop_stack(raw_next, crop_hw)
            if with_curl:
                queries = random_crop_batch(raw_obs, crop_hw, rng)
                keys = random_crop_batch(raw_obs, crop_hw, rng)

        return SampledBatch(
            obs=_scale(rl_obs),
            action=self.actions[idx].copy(),
            reward=self.rewards[idx].copy(),
            next_obs=_scale(rl_next),
            done=self.dones[idx].copy(),
            queries=_scale(queries) if queries is not None else None,
            keys=_scale(keys) if keys is not None else None,
            indices=idx,
        )

    def sample_nstep_windows(self, batch_size: int, n: int, rng):
        """Windows of up to n consecutive transitions for multi-step targets.

        Start slots are drawn so a full window never spans the write
        cursor; windows still truncate early at episode ends (done).
        Returns (start_idx, rewards (B, n), dones (B, n), horizons (B,),
        bootstrap_next_idx (B,)).
        """
        if self.fill < n:
            raise ValueError(f"replay has {self.fill} transitions; need at least {n}")
        max_start = self.fill - n
        order = rng.integers(0, max_start + 1, size=batch_size)
        if self.fill == self.capacity:
            start = (self.cursor + order) % self.capacity
        else:
            start = order
        steps = (start[:, None] + np.arange(n)) % self.capacity
        rew = self.rewards[steps]
        don = self.dones[steps]
        # horizon = index of first done + 1, or n when the window is clean
        any_done = don.cumsum(axis=1) > 0
        horizons = np.where(any_done.any(axis=1), any_done.argmax(axis=1) + 1, n)
        last = steps[np.arange(batch_size), horizons - 1]
        return start, rew, don, horizons, last

    def sample_dqn_and_curl(self, batch_size: int, n: int, rng, crop_hw=None,
                            aug_rl: bool = True, with_curl: bool = True,
                            min_fill: int = 1) -> dict:
        """n-step windows plus query/key crops of the window-start frames."""
        if self.fill < max(min_fill, n, 1):
            raise ValueError(
                f"replay has {self.fill} transitions; need at least {max(min_fill, n)}")
        start, rew, don, horizons, last = self.sample_nstep_windows(batch_size, n, rng)
        raw_obs = self.obs[start]
        raw_boot = self.next_obs[last]
        done_h = self.dones[last].copy()
        out = {
            "actions": self.actions[start].copy(),
            "rewards": rew.astype(np.float32),
            "horizons": horizons.astype(np.int64),
            "done_h": done_h,
            "queries": None,
            "keys": None,
        }
        if not self.pixel_obs:
            out["obs"] = raw_obs.copy()
            out["boot_obs"] = raw_boot.copy()
            return out
        if aug_rl:
            out["obs"] = _scale(random_crop_batch(raw_obs, crop_hw, rng))
            out["boot_obs"] = _scale(random_crop_batch(raw_boot, crop_hw, rng))
        else:
            out["obs"] = _scale(center_crop_stack(raw_obs, crop_hw))
            out["boot_obs"] = _scale(center_crop_stack(raw_boot, crop_hw))
        if with_curl:
            if aug_rl:
                out["queries"] = out["obs"]
            else:
                out["queries"] = _scale(random_crop_batch(raw_obs, crop_hw, rng))
            out["keys"] = _scale(random_crop_batch(raw_obs, crop_hw, rng))
        return out

    def state_arrays(self) -> dict:
        return {
            "obs": self.obs[:self.fill],
            "next_obs": self.next_obs[:self.fill],
            "actions": self.actions[:self.fill],
            "rewards": self.rewards[:self.fill],
            "dones": self.dones[:self.fill],
            "cursor": np.asarray(self.cursor),
            "fill": np.asarray(self.fill),
        }

    def load_state_arrays(self, arrays: dict):
        fill = int(arrays["fill"])
        self.obs[:fill] = arrays["obs"]
        self.next_obs[:fill] = arrays["next_obs"]
        self.actions[:fill] = arrays["actions"]
        self.rewards[:fill] = arrays["rewards"]
        self.dones[:fill] = arrays["dones"]
        self.cursor = int(arrays["cursor"])
        self.fill = fill
