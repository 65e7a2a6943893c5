import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pser.cliffwalk import (CliffwalkSpec, episodes, exhaustive_prefill,
                            ground_truth, step)


class TestSpec:
    def test_gamma_defaults_to_one_minus_inverse_n(self):
        assert CliffwalkSpec(n=16).gamma == 1 - 1 / 16
        assert CliffwalkSpec(n=2).gamma == 0.5

    def test_n_one_gamma_default(self):
        # 1 - 1/1 = 0 is not a valid discount; n=1 never bootstraps anyway
        assert CliffwalkSpec(n=1).gamma == 1.0

    def test_correct_actions_drawn_from_seed(self):
        a = CliffwalkSpec(n=10, seed=3)
        b = CliffwalkSpec(n=10, seed=3)
        c = CliffwalkSpec(n=10, seed=4)
        assert a.correct_actions == b.correct_actions
        assert len(a.correct_actions) == 10
        assert any(x != y for x, y in zip(a.correct_actions, c.correct_actions))

    def test_validation(self):
        with pytest.raises(ValueError):
            CliffwalkSpec(n=0)
        with pytest.raises(ValueError):
            CliffwalkSpec(n=3, gamma=0.0)
        with pytest.raises(ValueError):
            CliffwalkSpec(n=3, gamma=1.5)
        with pytest.raises(ValueError):
            CliffwalkSpec(n=3, correct_actions=(0, 1))

    def test_json_round_trip(self):
        spec = CliffwalkSpec(n=5, gamma=0.9, seed=7)
        again = CliffwalkSpec.from_json_dict(spec.to_json_dict())
        assert again == spec


class TestStep:
    def test_correct_action_at_last_state_pays_and_terminates(self):
        spec = CliffwalkSpec(n=3, seed=0)
        ns, r, term = step(spec, 2, spec.correct_actions[2])
        assert (ns, r, term) == (0, 1.0, True)

    def test_wrong_action_resets_without_reward(self):
        spec = CliffwalkSpec(n=3, seed=0)
        for s in range(3):
            ns, r, term = step(spec, s, 1 - spec.correct_actions[s])
            assert (ns, r, term) == (0, 0.0, True)

    def test_correct_action_advances_chain(self):
        spec = CliffwalkSpec(n=3, seed=0)
        ns, r, term = step(spec, 0, spec.correct_actions[0])
        assert (ns, r, term) == (1, 0.0, False)

    def test_invalid_arguments(self):
        spec = CliffwalkSpec(n=3)
        with pytest.raises(ValueError):
            step(spec, 3, 0)
        with pytest.raises(ValueError):
            step(spec, -1, 0)
        with pytest.raises(ValueError):
            step(spec, 0, 2)


class TestGroundTruth:
    def test_n2_gamma_half(self):
        spec = CliffwalkSpec(n=2, gamma=0.5, seed=0)
        gt = ground_truth(spec)
        correct = [gt.q_star[s, spec.correct_actions[s]] for s in range(2)]
        assert correct == [0.5, 1.0]

    def test_wrong_column_all_zero(self):
        spec = CliffwalkSpec(n=9, seed=5)
        gt = ground_truth(spec)
        for s in range(9):
            assert gt.q_star[s, 1 - spec.correct_actions[s]] == 0.0

    def test_matches_value_iteration_fixed_point(self):
        spec = CliffwalkSpec(n=16)
        gt = ground_truth(spec)
        q = np.array(gt.q_star)
        # one Bellman-optimality sweep using the environment dynamics
        swept = np.zeros_like(q)
        for s in range(16):
            for a in range(2):
                ns, r, term = step(spec, s, a)
                swept[s, a] = r + (0.0 if term else spec.gamma * q[ns].max())
        assert np.max(np.abs(swept - q)) <= 1e-12

    def test_value_iteration_from_scratch(self):
        spec = CliffwalkSpec(n=8)
        q = np.zeros((8, 2))
        for _ in range(200):
            nxt = np.zeros_like(q)
            for s in range(8):
                for a in range(2):
                    ns, r, term = step(spec, s, a)
                    nxt[s, a] = r + (0.0 if term else spec.gamma * q[ns].max())
            q = nxt
        assert np.max(np.abs(q - ground_truth(spec).q_star)) <= 1e-12


class TestExhaustivePrefill:
    def test_n3_has_14_transitions(self):
        assert len(exhaustive_prefill(CliffwalkSpec(n=3))) == 14

    def test_n1_base_case(self):
        ts = exhaustive_prefill(CliffwalkSpec(n=1))
        assert len(ts) == 2
        assert sorted(t.reward for t in ts) == [0.0, 1.0]

    def test_n10_counts_and_unique_reward(self):
        ts = exhaustive_prefill(CliffwalkSpec(n=10))
        assert len(ts) == 2046
        assert sum(1 for t in ts if t.reward != 0.0) == 1

    @pytest.mark.parametrize("n", range(1, 13))
    def test_transition_count_formula(self, n):
        ts = exhaustive_prefill(CliffwalkSpec(n=n))
        assert len(ts) == 2 ** (n + 1) - 2

    @pytest.mark.parametrize("n", range(13, 21))
    def test_transition_count_formula_large(self, n):
        # count via episode lengths; building Transition objects for
        # n = 20 (2M records) is unnecessary for the count invariant
        eps = episodes(CliffwalkSpec(n=n))
        assert sum(len(e) for e in eps) == 2 ** (n + 1) - 2
        assert len(eps) == 2**n

    def test_every_episode_is_a_valid_trajectory(self):
        spec = CliffwalkSpec(n=6, seed=2)
        ts = exhaustive_prefill(spec)
        by_episode = {}
        for t in ts:
            by_episode.setdefault(t.episode_id, []).append(t)
        assert len(by_episode) == 2**6
        for ep in by_episode.values():
            state = 0
            for t in ep:
                assert t.state == state
                ns, r, term = step(spec, t.state, t.action)
                assert (ns, r, term) == (t.next_state, t.reward, t.terminal)
                state = ns
            assert ep[-1].terminal  # every episode runs to termination
            for t in ep[:-1]:
                assert not t.terminal

    def test_episode_ids_non_decreasing(self):
        ts = exhaustive_prefill(CliffwalkSpec(n=5))
        ids = [t.episode_id for t in ts]
        assert ids == sorted(ids)
        assert set(ids) == set(range(2**5))

    def test_shuffle_is_seeded(self):
        spec = CliffwalkSpec(n=5)
        a = exhaustive_prefill(spec, random.Random(1))
        b = exhaustive_prefill(spec, random.Random(1))
        c = exhaustive_prefill(spec, random.Random(2))
        assert a == b
        assert a != c

    def test_resource_guard(self):
        with pytest.raises(ValueError):
            episodes(CliffwalkSpec(n=25))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=10), st.integers(0, 100))
    def test_prefill_invariants_property(self, n, seed):
        spec = CliffwalkSpec(n=n, seed=seed)
        ts = exhaustive_prefill(spec, random.Random(seed))
        assert len(ts) == 2 ** (n + 1) - 2
        rewarded = [t for t in ts if t.reward != 0.0]
        assert len(rewarded) == 1
        assert rewarded[0].state == n - 1
        assert rewarded[0].terminal
