import numpy as np
import pytest

from red.errors import DatasetNotFound, InvalidAction, InvalidCount
from red.envs import (
    ExpertDataset,
    GridWorld,
    SimpleDomain,
    encode_all_actions,
    encode_pair,
    generate_expert_dataset,
    grid_expert,
    grid_step,
    simple_expert,
    simple_step,
    simple_step_reward,
)


class TestSimpleDomain:
    def test_reward_formula(self):
        assert simple_step_reward(0.5, -1) == -0.5
        assert simple_step_reward(0.7, 1) == 0.7
        assert simple_step_reward(0.0, 1) == 0.0
        assert simple_step_reward(0.0, -1) == 0.0

    def test_invalid_action(self):
        with pytest.raises(InvalidAction):
            simple_step_reward(0.5, 0)

    def test_simple_step(self):
        s2, r = simple_step(0.4, -1, np.random.default_rng(0))
        assert r == -0.4 and -1 <= s2 <= 1

    def test_expert(self):
        assert simple_expert(0.7) == 1
        assert simple_expert(-0.3) == -1
        assert simple_expert(0.0) == 1

    def test_truncated_at_episode_len(self):
        env = SimpleDomain(seed=0)
        env.reset()
        flags = [env.step(1)[2:] for _ in range(100)]
        assert all(not done for done, _ in flags)
        assert [t for _, t in flags].index(True) == 99

    def test_expert_value_monte_carlo(self):
        env = SimpleDomain(seed=123)
        s = env.reset()
        total = 0.0
        for _ in range(100_000):
            s, r, _, truncated = env.step(env.expert(s))
            total += r
            if truncated:
                s = env.reset()
        assert 0.49 <= total / 100_000 <= 0.51

    def test_deterministic(self):
        a, b = SimpleDomain(5), SimpleDomain(5)
        assert a.reset()[0] == b.reset()[0]
        assert a.step(1)[0][0] == b.step(1)[0][0]


class TestGrid:
    def test_moves(self):
        assert grid_step((0, 0), "right") == ((1, 0), False)
        assert grid_step((7, 0), "right") == ((7, 0), False)
        assert grid_step((0, 0), "down") == ((0, 0), False)
        assert grid_step((7, 6), "up") == ((7, 7), True)

    def test_invalid_action(self):
        with pytest.raises(InvalidAction):
            grid_step((0, 0), "jump")

    def test_expert(self):
        assert grid_expert((3, 0)) == "right"
        assert grid_expert((7, 4)) == "up"

    def test_expert_reaches_goal_in_14(self):
        env = GridWorld()
        s, steps, done = env.reset(), 0, False
        while not done:
            s, r, done, _ = env.step(env.expert(s))
            steps += 1
        assert steps == 14 and r == 1.0

    def test_step_cap(self):
        env = GridWorld()
        env.reset()
        for i in range(64):
            _, _, done, truncated = env.step("left")
        assert not done and truncated

    def test_state_index(self):
        assert GridWorld.state_index([0, 0]) == 0
        assert GridWorld.state_index([7, 7]) == 63


class TestEncoding:
    def test_encode_pair(self):
        assert encode_pair([0.3], 1, 2).tolist() == [0.3, 0.0, 1.0]

    def test_encode_all(self):
        assert encode_all_actions([0.3], 2).tolist() == [[0.3, 1.0, 0.0], [0.3, 0.0, 1.0]]


class TestDatasets:
    def test_simple_five(self):
        data = generate_expert_dataset("simple", 5, seed=3)
        assert data.n == 5
        values = np.array(data.action_values)[data.actions]
        assert np.all(values == np.where(data.states[:, 0] >= 0, 1, -1))

    def test_grid_fourteen(self):
        data = generate_expert_dataset("grid", 1)
        assert data.n == 14
        names = [data.action_values[i] for i in data.actions]
        assert names == ["right"] * 7 + ["up"] * 7

    def test_zero_count(self):
        with pytest.raises(InvalidCount):
            generate_expert_dataset("simple", 0)

    def test_deterministic(self):
        a = generate_expert_dataset("simple", 20, seed=9)
        b = generate_expert_dataset("simple", 20, seed=9)
        np.testing.assert_array_equal(a.joint(), b.joint())

    def test_flipped(self):
        data = generate_expert_dataset("simple", 10, seed=1)
        assert np.all(data.flipped().actions == 1 - data.actions)

    def test_save_load(self, tmp_path):
        data = generate_expert_dataset("simple", 7, seed=2)
        path = str(tmp_path / "d.csv")
        data.save(path)
        assert open(path).readline().strip() == "s_0,a_enc_0,a_enc_1"
        back = ExpertDataset.load(path)
        np.testing.assert_array_equal(back.joint(), data.joint())
        assert back.action_values == (-1, 1)
        assert back.seed == 2

    def test_missing(self, tmp_path):
        with pytest.raises(DatasetNotFound):
            ExpertDataset.load(str(tmp_path / "nope.csv"))
