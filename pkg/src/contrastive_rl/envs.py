"""Procedurally rendered pixel-control environments with state oracles.

Three regimes: pointmass (dense-reward continuous, goal randomized per
episode so the policy must read pixels), pendulum (swing-up; angular
velocity only inferable from the frame stack), and gridchase (discrete).
Rendering is a pure function of the environment state; observations are
stacks of the last S grayscale frames, one frame per interaction step.

Episode-end bookkeeping: ``step`` reports done at terminal states and at
the interaction-step limit; ``truncated`` distinguishes the time limit so
the training loop can keep bootstrapping through it.
"""

import math
from dataclasses import dataclass

import numpy as np

ENV_IDS = ("pointmass", "pendulum", "gridchase")


def write_pgm(path, frame: np.ndarray):
    """Binary PGM dump of one grayscale frame, for visual debugging."""
    H, W = frame.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{W} {H}\n255\n".encode())
        f.write(frame.astype(np.uint8).tobytes())


def _circle(canvas, coords, cx, cy, radius, intensity):
    ys, xs = coords
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    np.maximum(canvas, np.where(mask, np.uint8(intensity), np.uint8(0)), out=canvas)


class _FrameStackMixin:
    """Shared stack/step accounting for all envs."""

    def _init_stack(self, first_frame):
        self.stack = np.repeat(first_frame[None], self.frame_stack, axis=0)

    def _push_frame(self, frame):
        self.stack = np.concatenate([self.stack[1:], frame[None]], axis=0)

    def observation(self) -> np.ndarray:
        return self.stack.copy()

    def snapshot(self) -> dict:
        """Full-precision copy of the mutable episode state, for resume."""
        return {
            "state": self._state_f64(),
            "steps": np.asarray(self.steps),
            "env_steps": np.asarray(self.env_steps),
            "truncated": np.asarray(int(self.truncated)),
            "stack": self.stack.copy(),
        }

    def restore(self, snap: dict):
        self.state = self._state_from_f64(np.asarray(snap["state"]))
        self.steps = int(snap["steps"])
        self.env_steps = int(snap["env_steps"])
        self.truncated = bool(int(snap["truncated"]))
        self.stack = np.asarray(snap["stack"]).copy()


@dataclass
class PointMassState:
    pos: np.ndarray
    vel: np.ndarray
    goal: np.ndarray


class PointMassEnv(_FrameStackMixin):
    """Accelerate a dot to a randomized goal in a [-1, 1]^2 arena."""

    action_dim = 2
    state_dim = 6
    discrete = False

    ACCEL = 0.02
    DRAG = 0.10
    VMAX = 0.08
    AGENT_RADIUS = 0.16
    GOAL_RADIUS = 0.30
    REWARD_DIST_SCALE = 1.0

    def __init__(self, render_size=38, frame_stack=3, action_repeat=4,
                 episode_len=125):
        self.render_size = render_size
        self.frame_stack = frame_stack
        self.action_repeat = action_repeat
        self.episode_len = episode_len
        self._coords = np.mgrid[0:render_size, 0:render_size].astype(np.float32)
        self.state = None
        self.steps = 0
        self.env_steps = 0
        self.truncated = False

    def reset(self, rng):
        pos = rng.uniform(-0.8, 0.8, size=2)
        goal = rng.uniform(-0.8, 0.8, size=2)
        while np.linalg.norm(goal - pos) < 0.7:
            goal = rng.uniform(-0.8, 0.8, size=2)
        self.state = PointMassState(pos=pos.astype(np.float64),
                                    vel=np.zeros(2), goal=goal.astype(np.float64))
        self.steps = 0
        self.truncated = False
        self._init_stack(self.render(self.state))
        return self.observation(), self.state

    def _reward(self, state) -> float:
        dist = float(np.linalg.norm(state.pos - state.goal))
        return 1.0 - min(dist / self.REWARD_DIST_SCALE, 1.0)

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        reward = 0.0
        for _ in range(self.action_repeat):
            vel = (self.state.vel + a * self.ACCEL) * (1.0 - self.DRAG)
            vel = np.clip(vel, -self.VMAX, self.VMAX)
            pos = np.clip(self.state.pos + vel, -1.0, 1.0)
            self.state = PointMassState(pos=pos, vel=vel, goal=self.state.goal)
            reward += self._reward(self.state)
        self.steps += 1
        self.env_steps += self.action_repeat
        done = self.steps >= self.episode_len
        self.truncated = done
        self._push_frame(self.render(self.state))
        return self.observation(), reward, done, self.state

    def render(self, state) -> np.ndarray:
        n = self.render_size
        canvas = np.zeros((n, n), dtype=np.uint8)
        half = (n - 1) / 2.0
        scale = half / 1.0
        gx, gy = state.goal[0] * scale + half, state.goal[1] * scale + half
        px, py = state.pos[0] * scale + half, state.pos[1] * scale + half
        _circle(canvas, self._coords, gx, gy, self.GOAL_RADIUS * scale, 110)
        _circle(canvas, self._coords, px, py, self.AGENT_RADIUS * scale, 255)
        return canvas

    def true_state(self, state=None) -> np.ndarray:
        s = state or self.state
        return np.concatenate([s.pos, s.vel, s.goal]).astype(np.float32)

    @staticmethod
    def state_from_vector(vec) -> PointMassState:
        v = np.asarray(vec, dtype=np.float64)
        return PointMassState(pos=v[0:2].copy(), vel=v[2:4].copy(), goal=v[4:6].copy())

    def _state_f64(self):
        return np.concatenate([self.state.pos, self.state.vel, self.state.goal])

    def _state_from_f64(self, v):
        return self.state_from_vector(v)


@dataclass
class PendulumState:
    angle: float        # 0 = upright, pi = hanging down
    ang_vel: float


def _wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi] so hanging straight down reads exactly pi."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


class PendulumEnv(_FrameStackMixin):
    """Torque-limited swing-up; reward (1 + cos angle) / 2."""

    action_dim = 1
    state_dim = 2
    discrete = False

    DT = 0.05
    GRAVITY = 6.0
    TORQUE = 2.8
    FRICTION = 0.12
    OMEGA_MAX = 8.0
    ROD_LEN = 0.75      # fraction of half-canvas

    def __init__(self, render_size=38, frame_stack=3, action_repeat=4,
                 episode_len=125):
        self.render_size = render_size
        self.frame_stack = frame_stack
        self.action_repeat = action_repeat
        self.episode_len = episode_len
        self._coords = np.mgrid[0:render_size, 0:render_size].astype(np.float32)
        self.state = None
        self.steps = 0
        self.env_steps = 0
        self.truncated = False

    def reset(self, rng):
        angle = _wrap_angle(math.pi + rng.uniform(-0.4, 0.4))
        ang_vel = rng.uniform(-0.5, 0.5)
        self.state = PendulumState(angle=angle, ang_vel=ang_vel)
        self.steps = 0
        self.truncated = False
        self._init_stack(self.render(self.state))
        return self.observation(), self.state

    def step(self, action):
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        reward = 0.0
        for _ in range(self.action_repeat):
            th, om = self.state.angle, self.state.ang_vel
            om = om + self.DT * (self.GRAVITY * math.sin(th) + self.TORQUE * a
                                 - self.FRICTION * om)
            om = float(np.clip(om, -self.OMEGA_MAX, self.OMEGA_MAX))
            th = _wrap_angle(th + self.DT * om)
            self.state = PendulumState(angle=th, ang_vel=om)
            reward += 0.5 * (1.0 + math.cos(th))
        self.steps += 1
        self.env_steps += self.action_repeat
        done = self.steps >= self.episode_len
        self.truncated = done
        self._push_frame(self.render(self.state))
        return self.observation(), reward, done, self.state

    def render(self, state) -> np.ndarray:
        n = self.render_size
        canvas = np.zeros((n, n), dtype=np.uint8)
        half = (n - 1) / 2.0
        length = self.ROD_LEN * half
        # angle measured from upright, screen y grows downward
        tip_x = half + length * math.sin(state.angle)
        tip_y = half - length * math.cos(state.angle)
        ys, xs = self._coords
        # distance from each pixel to the pivot-tip segment
        dx, dy = tip_x - half, tip_y - half
        t = ((xs - half) * dx + (ys - half) * dy) / (dx * dx + dy * dy)
        t = np.clip(t, 0.0, 1.0)
        dist2 = (xs - (half + t * dx)) ** 2 + (ys - (half + t * dy)) ** 2
        np.maximum(canvas, np.where(dist2 <= 1.2 ** 2, np.uint8(120), np.uint8(0)),
                   out=canvas)
        _circle(canvas, self._coords, tip_x, tip_y, 0.14 * half, 255)
        return canvas

    def true_state(self, state=None) -> np.ndarray:
        s = state or self.state
        return np.array([s.angle, s.ang_vel], dtype=np.float32)

    @staticmethod
    def state_from_vector(vec) -> PendulumState:
        v = np.asarray(vec, dtype=np.float64)
        return PendulumState(angle=float(v[0]), ang_vel=float(v[1]))

    def _state_f64(self):
        return np.array([self.state.angle, self.state.ang_vel], dtype=np.float64)

    def _state_from_f64(self, v):
        return self.state_from_vector(v)


@dataclass
class GridChaseState:
    agent: tuple
    target: tuple
    captured: bool = False


class GridChaseEnv(_FrameStackMixin):
    """Reach a static target cell on an N x N grid; reward 1 on capture."""

    state_dim = 4
    discrete = True
    n_actions = 4
    _MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))   # up, down, left, right

    def __init__(self, render_size=38, frame_stack=4, action_repeat=1,
                 episode_len=30, grid_size=5):
        self.render_size = render_size
        self.frame_stack = frame_stack
        self.action_repeat = action_repeat
        self.episode_len = episode_len
        self.grid_size = grid_size
        self.state = None
        self.steps = 0
        self.env_steps = 0
        self.truncated = False

    def reset(self, rng):
        n = self.grid_size
        agent = (int(rng.integers(0, n)), int(rng.integers(0, n)))
        target = (int(rng.integers(0, n)), int(rng.integers(0, n)))
        while target == agent:
            target = (int(rng.integers(0, n)), int(rng.integers(0, n)))
        self.state = GridChaseState(agent=agent, target=target)
        self.steps = 0
        self.truncated = False
        self._init_stack(self.render(self.state))
        return self.observation(), self.state

    def step(self, action):
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ValueError(f"gridchase action must be in [0, {self.n_actions}), got {action}")
        reward = 0.0
        # captured state is absorbing so env-step accounting stays exact
        for _ in range(self.action_repeat):
            if not self.state.captured:
                dr, dc = self._MOVES[action]
                r = min(max(self.state.agent[0] + dr, 0), self.grid_size - 1)
                c = min(max(self.state.agent[1] + dc, 0), self.grid_size - 1)
                captured = (r, c) == self.state.target
                self.state = GridChaseState(agent=(r, c), target=self.state.target,
                                            captured=captured)
                if captured:
                    reward += 1.0
        self.steps += 1
        self.env_steps += self.action_repeat
        timeout = self.steps >= self.episode_len
        done = self.state.captured or timeout
        self.truncated = timeout and not self.state.captured
        self._push_frame(self.render(self.state))
        return self.observation(), reward, done, self.state

    def render(self, state) -> np.ndarray:
        n = self.render_size
        canvas = np.zeros((n, n), dtype=np.uint8)
        cell = n / self.grid_size

        def paint(rc, intensity):
            r0 = int(round(rc[0] * cell)) + 1
            c0 = int(round(rc[1] * cell)) + 1
            r1 = int(round((rc[0] + 1) * cell)) - 1
            c1 = int(round((rc[1] + 1) * cell)) - 1
            canvas[r0:r1, c0:c1] = np.maximum(canvas[r0:r1, c0:c1], intensity)

        paint(state.target, 110)
        paint(state.agent, 255)
        return canvas

    def true_state(self, state=None) -> np.ndarray:
        s = state or self.state
        return np.array([s.agent[0], s.agent[1], s.target[0], s.target[1]],
                        dtype=np.float32)

    @staticmethod
    def state_from_vector(vec) -> GridChaseState:
        v = [int(x) for x in np.asarray(vec).reshape(-1)]
        return GridChaseState(agent=(v[0], v[1]), target=(v[2], v[3]))

    def _state_f64(self):
        s = self.state
        return np.array([s.agent[0], s.agent[1], s.target[0], s.target[1],
                         float(s.captured)], dtype=np.float64)

    def _state_from_f64(self, v):
        st = self.state_from_vector(v[:4])
        st.captured = bool(v[4])
        return st

    def shortest_path_steps(self, agent, target) -> int:
        """Moves needed under the clipped-move dynamics (Manhattan distance)."""
        return abs(agent[0] - target[0]) + abs(agent[1] - target[1])


def make_env(env_id: str, render_size, frame_stack, action_repeat, episode_len,
             grid_size=5):
    if env_id == "pointmass":
        return PointMassEnv(render_size, frame_stack, action_repeat, episode_len)
    if env_id == "pendulum":
        return PendulumEnv(render_size, frame_stack, action_repeat, episode_len)
    if env_id == "gridchase":
        return GridChaseEnv(render_size, frame_stack, action_repeat, episode_len,
                            grid_size)
    raise ValueError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")
