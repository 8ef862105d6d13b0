"""Environment contracts: determinism, bounds, rendering purity, oracles."""

import math

import numpy as np
import pytest

from contrastive_rl.envs import (GridChaseEnv, PendulumEnv, PointMassEnv,
                                 make_env, write_pgm)
from contrastive_rl.rng import stream


def test_make_env_rejects_unknown_id():
    with pytest.raises(ValueError, match="unknown env"):
        make_env("cartpole", 38, 3, 4, 100)


def test_reset_determinism_and_stack_init():
    for seed in (1, 2):
        e1, e2 = PointMassEnv(), PointMassEnv()
        s1, st1 = e1.reset(stream(seed, "env"))
        s2, st2 = e2.reset(stream(seed, "env"))
        assert np.array_equal(s1, s2)
        assert np.array_equal(e1.true_state(), e2.true_state())
        # stack holds S identical copies of the first frame
        assert all(np.array_equal(s1[0], s1[f]) for f in range(s1.shape[0]))


def test_pointmass_initial_positions_within_arena():
    env = PointMassEnv()
    rng = stream(3, "env")
    for _ in range(10000):
        env.reset(rng)
        assert np.all(np.abs(env.state.pos) <= 1.0)
        assert np.all(np.abs(env.state.goal) <= 1.0)


def test_pointmass_zero_action_fixed_point():
    env = PointMassEnv()
    env.reset(stream(5, "env"))
    pos = env.state.pos.copy()
    env.state.vel[:] = 0.0
    _, reward, _, state = env.step(np.zeros(2))
    assert np.allclose(state.pos, pos)
    dist = np.linalg.norm(state.pos - state.goal)
    expected = env.action_repeat * (1.0 - min(dist / env.REWARD_DIST_SCALE, 1.0))
    assert reward == pytest.approx(expected)


def test_pointmass_stays_in_arena_and_reward_range():
    env = PointMassEnv()
    rng = stream(7, "env")
    act = stream(7, "action")
    env.reset(rng)
    for i in range(500):
        _, reward, done, state = env.step(act.uniform(-1, 1, 2))
        assert np.all(np.abs(state.pos) <= 1.0)
        assert 0.0 <= reward <= env.action_repeat
        if done:
            env.reset(rng)


def test_action_repeat_accounting():
    env = PointMassEnv(action_repeat=4)
    env.reset(stream(9, "env"))
    before = env.env_steps
    env.step(np.zeros(2))
    assert env.env_steps - before == 4


def test_out_of_range_continuous_clipped():
    env = PointMassEnv()
    env.reset(stream(11, "env"))
    env.state.vel[:] = 0.0
    _, _, _, s_big = env.step(np.array([100.0, 0.0]))
    env2 = PointMassEnv()
    env2.reset(stream(11, "env"))
    env2.state.vel[:] = 0.0
    _, _, _, s_one = env2.step(np.array([1.0, 0.0]))
    assert np.allclose(s_big.pos, s_one.pos)


def test_render_is_pure_function_of_state():
    env = PointMassEnv()
    env.reset(stream(13, "env"))
    st = env.state
    assert np.array_equal(env.render(st), env.render(st))


def test_different_states_render_differently():
    env = PointMassEnv()
    rng = stream(15, "env")
    for _ in range(20):
        env.reset(rng)
        a = env.render(env.state)
        env.reset(rng)
        b = env.render(env.state)
        if not np.array_equal(env.true_state(), env.true_state()):
            pass
        assert (a != b).sum() >= 1


def test_background_pixels_are_zero():
    env = PointMassEnv()
    env.reset(stream(17, "env"))
    frame = env.render(env.state)
    # corners are far from both sprites for a 0.8-bounded init
    assert frame[0, 0] == 0 and frame[-1, -1] == 0
    assert set(np.unique(frame)) <= {0, 110, 255}


def test_true_state_roundtrip_pointmass():
    env = PointMassEnv()
    env.reset(stream(19, "env"))
    vec = env.true_state()
    assert vec.shape == (6,)
    st = PointMassEnv.state_from_vector(vec)
    assert np.allclose(st.pos, env.state.pos, atol=1e-6)
    assert np.allclose(st.goal, env.state.goal, atol=1e-6)


# ---------------------------------------------------------------------------
# pendulum


def test_pendulum_at_rest_points_down():
    env = PendulumEnv()
    env.reset(stream(21, "env"))
    env.state.angle = math.pi
    env.state.ang_vel = 0.0
    vec = env.true_state()
    assert vec[0] == pytest.approx(math.pi)
    assert vec[1] == 0.0
    # down is a fixed point under zero torque
    _, reward, _, state = env.step(np.zeros(1))
    assert abs(state.angle) == pytest.approx(math.pi)
    assert reward == pytest.approx(0.0, abs=1e-9)


def test_pendulum_velocity_capped():
    env = PendulumEnv()
    env.reset(stream(23, "env"))
    act = stream(23, "action")
    for _ in range(300):
        _, _, done, state = env.step(act.uniform(-1, 1, 1))
        assert abs(state.ang_vel) <= env.OMEGA_MAX
        if done:
            env.reset(stream(24, "env"))


def test_pendulum_reward_range_and_upright_max():
    env = PendulumEnv()
    env.reset(stream(25, "env"))
    env.state.angle = 0.0
    env.state.ang_vel = 0.0
    _, reward, _, _ = env.step(np.zeros(1))
    assert reward <= env.action_repeat
    assert reward > 0.95 * env.action_repeat   # stays near upright briefly


def test_pendulum_true_state_roundtrip():
    env = PendulumEnv()
    env.reset(stream(27, "env"))
    st = PendulumEnv.state_from_vector(env.true_state())
    assert st.angle == pytest.approx(env.state.angle, abs=1e-6)
    assert st.ang_vel == pytest.approx(env.state.ang_vel, abs=1e-6)


# ---------------------------------------------------------------------------
# gridchase


def test_gridchase_greedy_reaches_target_within_bound():
    env = GridChaseEnv(grid_size=5, episode_len=30)
    rng = stream(29, "env")
    for _ in range(200):
        env.reset(rng)
        bound = env.shortest_path_steps(env.state.agent, env.state.target)
        assert bound <= 8
        steps = 0
        done = False
        while not done:
            ar, ac = env.state.agent
            tr, tc = env.state.target
            if ar != tr:
                action = 0 if tr < ar else 1
            else:
                action = 2 if tc < ac else 3
            _, reward, done, _ = env.step(action)
            steps += 1
        assert steps == bound
        assert env.state.captured and reward == 1.0


def test_gridchase_rejects_bad_action():
    env = GridChaseEnv()
    env.reset(stream(31, "env"))
    with pytest.raises(ValueError, match="action"):
        env.step(4)


def test_gridchase_timeout_vs_capture_flags():
    env = GridChaseEnv(grid_size=5, episode_len=2)
    env.reset(stream(33, "env"))
    env.state = env.state_from_vector([0, 0, 4, 4])
    env.step(1)
    _, _, done, _ = env.step(1)
    assert done and env.truncated
    env.reset(stream(34, "env"))
    env.state = env.state_from_vector([0, 0, 1, 0])
    _, reward, done, _ = env.step(1)
    assert done and not env.truncated and reward == 1.0


def test_gridchase_render_shows_two_cells():
    env = GridChaseEnv()
    env.reset(stream(35, "env"))
    frame = env.render(env.state)
    assert (frame == 255).sum() > 0 and (frame == 110).sum() > 0


def test_env_snapshot_restore_resumes_exactly():
    for env_cls in (PointMassEnv, PendulumEnv, GridChaseEnv):
        env = env_cls()
        env.reset(stream(37, "env"))
        act = stream(37, "action")
        for _ in range(5):
            a = 0 if env.discrete else act.uniform(-1, 1, env.action_dim)
            env.step(a)
        snap = env.snapshot()
        a = 1 if env.discrete else act.uniform(-1, 1, env.action_dim)
        s1, r1, d1, _ = env.step(a)
        twin = env_cls()
        twin.reset(stream(99, "env"))
        twin.restore(snap)
        s2, r2, d2, _ = twin.step(a)
        assert np.array_equal(s1, s2) and r1 == r2 and d1 == d2


def test_write_pgm(tmp_path):
    frame = np.arange(64, dtype=np.uint8).reshape(8, 8)
    p = tmp_path / "f.pgm"
    write_pgm(p, frame)
    data = p.read_bytes()
    assert data.startswith(b"P5\n8 8\n255\n")
    assert data[-64:] == frame.tobytes()
