"""Tests for the gridworld environments and dataset files."""

import json

import numpy as np
import pytest

from reward_lens.errors import FormatError, ShapeError, UsageError
from reward_lens.gridworld import (
    ACTIONS,
    AGENT,
    DESTROYER,
    GOAL,
    STRIP_ROW,
    EnvSpec,
    EnvState,
    as_grid,
    encode_transition,
    expert_action,
    generate_dataset,
    goal_distances,
    initial_states,
    load_dataset,
    move,
    render,
    reset,
    rollout,
    sample_transition,
    save_dataset,
    step,
    transition_from_record,
    transition_to_record,
)
from tests.conftest import make_grid


def at(spec: EnvSpec, agent, goals, **kwargs) -> EnvState:
    return EnvState(spec=spec, agent=agent, goals=frozenset(goals), **kwargs)


class TestEnvSpec:
    def test_unknown_name(self):
        with pytest.raises(UsageError):
            EnvSpec("maze")  # type: ignore[arg-type]

    def test_cap_must_be_positive(self):
        with pytest.raises(UsageError):
            EnvSpec("coinflip", episode_cap=0)

    def test_strip_flags(self):
        assert EnvSpec("scoregoal").strip_visible
        assert EnvSpec("scoregoal_nostrip").has_strip
        assert not EnvSpec("scoregoal_nostrip").strip_visible
        assert EnvSpec("coinflip").playfield_rows == 11
        assert EnvSpec("scoregoal").playfield_rows == 10


class TestReset:
    def test_coinflip_uses_both_corners(self, coinflip):
        layouts = {reset(coinflip, seed).goals for seed in range(40)}
        assert layouts == {frozenset([(0, 0)]), frozenset([(10, 10)])}

    def test_twogoals_has_both_corners(self, twogoals):
        for seed in range(10):
            assert reset(twogoals, seed).goals == frozenset([(0, 0), (10, 10)])

    def test_goaldestroyer_layout(self, goaldestroyer):
        state = reset(goaldestroyer, 3)
        assert state.goals == frozenset([(0, 0)])
        assert state.destroyer == (10, 10)
        assert state.agent not in {(0, 0), (10, 10)}

    def test_deterministic(self, coinflip):
        assert reset(coinflip, 11) == reset(coinflip, 11)

    def test_negative_seeds(self, coinflip):
        states = [reset(coinflip, seed) for seed in range(-40, 0)]
        assert states == [reset(coinflip, seed) for seed in range(-40, 0)]
        assert {s.goals for s in states} == {frozenset([(0, 0)]), frozenset([(10, 10)])}
        assert all(s.agent not in s.goals for s in states)

    def test_scoregoal_agent_stays_above_strip(self):
        spec = EnvSpec("scoregoal")
        for seed in range(30):
            state = reset(spec, seed)
            assert state.agent[0] < STRIP_ROW
            assert all(row < STRIP_ROW for row, _ in state.goals)

    def test_initial_states_cover_reset(self, coinflip):
        states = initial_states(coinflip)
        assert len(states) == 2 * 120
        assert reset(coinflip, 5) in states


class TestStep:
    def test_reaching_goal(self, coinflip):
        t, nxt = step(at(coinflip, (0, 1), [(0, 0)]), "left")
        assert t.reward == 1.0
        assert t.done and nxt.done
        assert t.s_prime[0, 0] == AGENT
        assert not np.any(t.s_prime == GOAL)
        assert t.s[0, 0] == GOAL

    def test_plain_move(self, coinflip):
        t, nxt = step(at(coinflip, (5, 5), [(0, 0)]), "up")
        assert t.reward == 0.0
        assert not t.done
        assert nxt.agent == (4, 5)
        assert t.s_prime[4, 5] == AGENT

    def test_wall_leaves_agent_in_place(self, coinflip):
        assert move(coinflip, (0, 5), "up") == (0, 5)
        assert move(coinflip, (10, 10), "right") == (10, 10)

    def test_destroyer_removes_goals(self, goaldestroyer):
        state = at(goaldestroyer, (10, 9), [(0, 0)], destroyer=(10, 10))
        t, nxt = step(state, "right")
        assert t.reward == 0.0
        assert not t.done
        assert nxt.goals == frozenset()
        assert nxt.destroyed
        assert not np.any(t.s_prime == GOAL)

        t2, after = step(nxt, "left")
        assert t2.s_prime[10, 10] == DESTROYER
        assert after.goals == frozenset()

    def test_destroyed_goal_cell_pays_nothing(self, goaldestroyer):
        state = at(goaldestroyer, (0, 1), [], destroyer=(10, 10), destroyed=True)
        t, _ = step(state, "left")
        assert t.reward == 0.0
        assert not t.done

    def test_adjacent_without_entering(self, coinflip):
        t, _ = step(at(coinflip, (0, 1), [(0, 0)]), "down")
        assert t.reward == 0.0

    def test_done_state_rejected(self, coinflip):
        _, nxt = step(at(coinflip, (0, 1), [(0, 0)]), "left")
        with pytest.raises(UsageError):
            step(nxt, "up")

    def test_cap_ends_episode(self):
        spec = EnvSpec("coinflip", episode_cap=3)
        episode = rollout(at(spec, (5, 5), [(10, 10)]), lambda _: "up")
        assert len(episode) == 3
        assert episode[-1].done
        assert all(t.reward == 0.0 for t in episode)

    def test_scoregoal_lights_strip(self):
        spec = EnvSpec("scoregoal")
        t, _ = step(at(spec, (9, 9), [(9, 10)], lit=2), "right")
        assert t.reward == 1.0
        np.testing.assert_array_equal(t.s[STRIP_ROW, :3], [1.0, 1.0, 0.0])
        np.testing.assert_array_equal(t.s_prime[STRIP_ROW, :3], [1.0, 1.0, 1.0])

    def test_nostrip_keeps_row_dark(self):
        spec = EnvSpec("scoregoal_nostrip")
        t, nxt = step(at(spec, (9, 9), [(9, 10)], lit=2), "right")
        assert t.reward == 1.0
        assert nxt.lit == 3
        assert not t.s_prime[STRIP_ROW].any()

    def test_agent_cannot_enter_strip(self):
        spec = EnvSpec("scoregoal")
        assert move(spec, (9, 4), "down") == (9, 4)

    @pytest.mark.parametrize("name", ["coinflip", "twogoals", "goaldestroyer", "scoregoal"])
    def test_frames_differ_in_few_cells(self, name):
        spec = EnvSpec(name)
        rng = np.random.default_rng(0)
        for seed in range(20):
            state = reset(spec, seed)
            while not state.done:
                t, state = step(state, ACTIONS[int(rng.integers(4))])
                assert np.count_nonzero(t.s != t.s_prime) <= 3


class TestExpert:
    def test_heads_up_first(self, coinflip):
        assert expert_action(at(coinflip, (5, 5), [(0, 0)])) == "up"

    def test_adjacent_goal(self, coinflip):
        assert expert_action(at(coinflip, (0, 1), [(0, 0)])) == "left"

    def test_twogoals_nearer_corner(self, twogoals):
        episode = rollout(at(twogoals, (1, 1), [(0, 0), (10, 10)]), expert_action)
        assert len(episode) == 2
        assert episode[-1].s_prime[0, 0] == AGENT

    def test_no_goals(self, goaldestroyer):
        with pytest.raises(UsageError):
            expert_action(at(goaldestroyer, (3, 3), []))

    def test_episode_length_is_bfs_distance(self, coinflip):
        for start in initial_states(coinflip):
            dist = goal_distances(coinflip.playfield_rows, start.goals)[start.agent]
            episode = rollout(start, expert_action)
            assert len(episode) == dist
            assert episode[-1].reward == 1.0


class TestDataset:
    def test_single_episode_ends_on_reward(self, coinflip):
        data = generate_dataset(coinflip, episodes=1, seed=4)
        assert [t.reward for t in data].count(1.0) == 1
        assert data[-1].reward == 1.0
        assert data[-1].done

    def test_one_reward_per_episode(self, coinflip):
        data = generate_dataset(coinflip, episodes=50, seed=0)
        assert sum(t.reward for t in data) == 50
        assert {t.meta["episode"] for t in data if t.meta} == set(range(50))

    def test_same_arguments_same_file(self, tmp_path, coinflip):
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(first, generate_dataset(coinflip, episodes=5, seed=9))
        save_dataset(second, generate_dataset(coinflip, episodes=5, seed=9))
        assert first.read_bytes() == second.read_bytes()

    def test_seed_range_crosses_zero(self, coinflip):
        data = generate_dataset(coinflip, episodes=5, seed=-3)
        assert sum(t.reward for t in data) == 5
        again = generate_dataset(coinflip, episodes=5, seed=-3)
        assert [transition_to_record(t) for t in data] == [transition_to_record(t) for t in again]
        np.testing.assert_array_equal(data[0].s, render(reset(coinflip, -3)))

    def test_needs_an_episode(self, coinflip):
        with pytest.raises(UsageError):
            generate_dataset(coinflip, episodes=0, seed=0)

    def test_file_round_trip(self, tmp_path, twogoals):
        data = generate_dataset(twogoals, episodes=3, seed=1)
        path = tmp_path / "data.jsonl"
        save_dataset(path, data)
        loaded = load_dataset(path)
        assert len(loaded) == len(data)
        for a, b in zip(data, loaded):
            np.testing.assert_array_equal(a.s, b.s)
            np.testing.assert_array_equal(a.s_prime, b.s_prime)
            assert (a.action, a.reward, a.done, a.meta) == (b.action, b.reward, b.done, b.meta)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError) as exc_info:
            load_dataset(tmp_path / "absent.jsonl")
        assert "absent.jsonl" in exc_info.value.message

    def test_bad_line_is_located(self, tmp_path, coinflip):
        path = tmp_path / "data.jsonl"
        record = transition_to_record(sample_transition(coinflip, 0, 0))
        path.write_text(json.dumps(record) + "\n{not json\n")
        with pytest.raises(FormatError) as exc_info:
            load_dataset(path)
        assert ":2:" in exc_info.value.message

    def test_record_field_errors(self, coinflip):
        record = dict(transition_to_record(sample_transition(coinflip, 0, 0)))
        del record["a"]
        with pytest.raises(FormatError) as exc_info:
            transition_from_record(record)
        assert exc_info.value.field == "a"

        record["a"] = "up"
        record["sp"] = [0.0] * 120
        with pytest.raises(FormatError) as exc_info:
            transition_from_record(record)
        assert exc_info.value.field == "sp"

    def test_sample_out_of_range(self, coinflip):
        with pytest.raises(UsageError):
            sample_transition(coinflip, 0, 100)


class TestGrids:
    def test_flat_and_nested_agree(self):
        grid = make_grid((3, 4), [(0, 0)])
        np.testing.assert_array_equal(as_grid(grid.reshape(-1)), as_grid(grid.tolist()))

    def test_wrong_shape(self):
        with pytest.raises(ShapeError):
            as_grid(np.zeros((10, 11)))

    def test_out_of_range(self):
        with pytest.raises(UsageError):
            as_grid(np.full((11, 11), 1.5))

    def test_encoding_order(self):
        s, sp = make_grid((0, 0)), make_grid((0, 1))
        x = encode_transition(s, sp)
        assert x.shape == (242,)
        assert x[0] == AGENT
        assert x[121 + 1] == AGENT

    def test_agent_drawn_over_goal(self, coinflip):
        grid = render(at(coinflip, (0, 0), [(0, 0)]))
        assert grid[0, 0] == AGENT
