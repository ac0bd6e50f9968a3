"""Graph preprocessing: qualitative analysis, components, collapsing."""

import pytest
from gmpy2 import mpq

from conftest import prep, random_reach_corpus
from mdpmc.gen import gen_hard_mn, gen_random_mdp
from mdpmc.graph import (
    RewardInMec,
    collapse_mecs,
    contracting_check,
    mec_decomposition,
    prob0,
    prob1,
    reward_finiteness_check,
    scc_topological,
)
from mdpmc.model import INF, Objective, build_mdp
from oracle import oracle_value_sets, oracle_values


def two_route():
    """0 can go to goal(1) or to sink(2); 3 is unreachable from 0."""
    return build_mdp(
        [
            [[(1, 1)], [(2, 1)]],
            [[(1, 1)]],
            [[(2, 1)]],
            [[(1, "1/2"), (2, "1/2")]],
        ],
        labels={"goal": [1]},
    )


class TestQualitative:
    def test_prob0_directions_differ(self):
        m = two_route()
        assert prob0(m, {1}, "max") == {2}
        # minimizing player can avoid the target from 0 via the sink action
        assert prob0(m, {1}, "min") == {0, 2}

    def test_prob1_directions_differ(self):
        m = two_route()
        assert 0 in prob1(m, {1}, "max")
        assert 0 not in prob1(m, {1}, "min")
        assert 1 in prob1(m, {1}, "min")

    def test_target_states_always_value_one(self):
        for seed, m in random_reach_corpus(30):
            target = set(m.labels["goal"])
            for opt in ("min", "max"):
                assert target <= prob1(m, target, opt), (seed, opt)
                assert not (target & prob0(m, target, opt)), (seed, opt)

    def test_escape_through_target_does_not_rescue(self):
        # 0's only route to safety passes through the target itself, so
        # hitting the target is certain on the first visit semantics
        m = build_mdp(
            [
                [[(1, 1)]],
                [[(2, 1)], [(0, 1)]],
                [[(2, 1)]],
            ],
            labels={"goal": [1]},
        )
        assert prob1(m, {1}, "min") == {0, 1}

    def test_matches_oracle_sets_on_random_models(self):
        for seed, m in random_reach_corpus(40, max_states=9):
            target = set(m.labels["goal"])
            for opt in ("min", "max"):
                vals = oracle_values(m, "reach", opt, targets=target)
                zeros, ones = oracle_value_sets(vals)
                assert prob0(m, target, opt) == zeros, (seed, opt)
                assert prob1(m, target, opt) == ones, (seed, opt)


class TestComponents:
    def test_topological_emission_order(self):
        m = two_route()
        comps = scc_topological(m)
        seen = {}
        for k, comp in enumerate(comps):
            for s in comp:
                seen[s] = k
        # every edge goes from a later-emitted component to an earlier one
        for s in range(m.num_states):
            for action in m.actions[s]:
                for succ, _ in action:
                    if seen[succ] != seen[s]:
                        assert seen[succ] < seen[s]

    def test_mecs_of_hard_chain_are_the_absorbing_ends(self):
        m = gen_hard_mn(4)
        mecs = mec_decomposition(m)
        members = sorted(sorted(group) for group, _ in mecs)
        goal = next(iter(m.labels["goal"]))
        assert len(mecs) == 2
        assert all(len(g) == 1 for g, _ in mecs)
        assert {goal} in [set(g) for g, _ in mecs]

    def test_controlled_loop_forms_a_mec(self):
        m = build_mdp(
            [
                [[(1, 1)], [(2, 1)]],
                [[(0, 1)]],
                [[(2, 1)]],
            ],
        )
        mecs = mec_decomposition(m)
        assert sorted(sorted(g) for g, _ in mecs) == [[0, 1], [2]]

    def test_mec_actions_stay_inside(self):
        for seed, m in random_reach_corpus(25):
            for members, actions in mec_decomposition(m):
                inside = set(members)
                for s in members:
                    kept = actions[s]
                    assert kept, (seed, s)
                    for a in kept:
                        assert {succ for succ, _ in m.actions[s][a]} <= inside


class TestCollapse:
    def test_quotient_is_contracting(self):
        for seed, m in random_reach_corpus(25):
            q = prep(m, Objective.reach("max", label="goal"))
            assert contracting_check(q), seed
            q = prep(m, Objective.reach("min", label="goal"))
            assert contracting_check(q), seed

    def test_state_map_is_total_and_consistent(self):
        m = gen_hard_mn(3)
        q = prep(m, Objective.reach("max", label="goal"))
        assert len(q.state_map) == m.num_states
        for s in range(m.num_states):
            assert 0 <= q.state_map[s] < q.mdp.num_states
        assert q.initial_quotient_state == q.state_map[m.initial_state]

    def test_zero_and_one_states_fixed(self):
        m = two_route()
        obj = Objective.reach("min", label="goal")
        q = prep(m, obj)
        assert 0 in q.zero_states
        vals = [mpq(0)] * q.mdp.num_states
        if q.target is not None:
            vals[q.target] = mpq(1)
        lifted = q.lift_values(vals)
        assert lifted[0] == 0 and lifted[1] == 1 and lifted[2] == 0

    def test_lift_reports_infinite_states(self):
        m = build_mdp(
            [
                [[(1, "1/2"), (2, "1/2")]],
                [[(1, 1)]],
                [[(2, 1)]],
            ],
            rewards={0: 1, 1: 2},
        )
        obj = Objective.total_reward("max")
        q = prep(m, obj)
        assert 0 in q.infinite_states and 1 in q.infinite_states
        lifted = q.lift_values([mpq(0)] * q.mdp.num_states)
        assert lifted[0] is INF and lifted[1] is INF and lifted[2] == 0

    def test_reward_finiteness_direction_dependent(self):
        # minimizer can choose to leave the rewarded loop, maximizer stays
        m = build_mdp(
            [
                [[(0, 1)], [(1, 1)]],
                [[(1, 1)]],
            ],
            rewards={0: 1},
        )
        assert reward_finiteness_check(m, Objective.total_reward("max")) == {0}
        assert reward_finiteness_check(m, Objective.total_reward("min")) == frozenset()

    def test_unavoidable_rewarded_loop_is_infinite_for_min(self):
        m = build_mdp([[[(0, 1)]]], rewards={0: 1})
        q = collapse_mecs(m, Objective.total_reward("min"))
        assert q.infinite_states == {0}
        assert q.lift_values([mpq(0)] * q.mdp.num_states)[0] is INF

    def test_optional_rewarded_loop_rejected_for_min(self):
        # staying is optional, so the minimum is finite, but the rewarded
        # end component cannot be collapsed soundly; the engine refuses
        m = build_mdp(
            [
                [[(0, 1)], [(1, 1)]],
                [[(1, 1)]],
            ],
            rewards={0: 1},
        )
        with pytest.raises(RewardInMec):
            collapse_mecs(m, Objective.total_reward("min"))

    def test_collapse_preserves_reachability_values(self):
        for seed, m in random_reach_corpus(20, max_states=8):
            target = set(m.labels["goal"])
            for opt in ("min", "max"):
                obj = Objective.reach(opt, label="goal")
                q = prep(m, obj)
                want = oracle_values(m, "reach", opt, targets=target)
                got = oracle_values(
                    q.mdp, "reach", opt,
                    targets={q.target} if q.target is not None else set(),
                )
                lifted = q.lift_values(got)
                assert lifted == want, (seed, opt)

    def test_action_origin_translates_back(self):
        m = two_route()
        q = prep(m, Objective.reach("max", label="goal"))
        for qs in range(q.num_core):
            origins = q.action_origin[qs]
            assert len(origins) == q.mdp.num_actions(qs)
            for src_state, src_action in origins:
                assert q.state_map[src_state] == qs
                assert 0 <= src_action < m.num_actions(src_state)
