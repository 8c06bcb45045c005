import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capbandit.batch import (
    COST_SCALE,
    FlowNetwork,
    apportion_counts,
    assign_batch,
    largest_remainder,
    mcmf_solve,
    write_batch_plans,
)
from capbandit.capacity import QueueBank
from capbandit.domain import two_agent_profile, validate_capacity_profile
from capbandit.errors import CountMismatch, NetworkMalformed, ScoreOverflow


def brute_force(scores, counts):
    """Best total over every assignment with exactly ``counts`` per agent."""
    n, A = scores.shape
    labels = [a for a in range(A) for _ in range(counts[a])]
    best = -np.inf
    for perm in set(itertools.permutations(labels)):
        best = max(best, sum(scores[i, a] for i, a in enumerate(perm)))
    return best


def brute_force_int(scores, counts):
    cost = -np.rint(scores * COST_SCALE).astype(np.int64)
    n, A = scores.shape
    labels = [a for a in range(A) for _ in range(counts[a])]
    return min(sum(int(cost[i, a]) for i, a in enumerate(p)) for p in set(itertools.permutations(labels)))


class TestLargestRemainder:
    def test_exact(self):
        assert largest_remainder([5.0, 5.0], 10).tolist() == [5, 5]

    def test_tie_to_lowest(self):
        assert largest_remainder([5.5, 5.5], 11).tolist() == [6, 5]

    def test_largest_fraction_wins(self):
        assert largest_remainder([3.75, 6.25], 10).tolist() == [4, 6]

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.integers(1, 500))
    def test_sums_and_bounds(self, raw, total):
        raw = np.asarray(raw) + 1e-3
        quotas = raw / raw.sum() * total
        counts = largest_remainder(quotas, total)
        assert counts.sum() == total
        assert np.all(counts >= np.floor(quotas) - 1e-9)
        assert np.all(counts <= np.floor(quotas) + 1)


class TestApportion:
    def test_even(self):
        qb = QueueBank(two_agent_profile(0.5))
        assert apportion_counts(qb.profile, qb, 10).tolist() == [5, 5]

    def test_odd(self):
        qb = QueueBank(two_agent_profile(0.5))
        assert apportion_counts(qb.profile, qb, 11).tolist() == [6, 5]

    def test_backlog(self):
        # d = (5 - 2, 5) = (3, 5), rescaled to (3.75, 6.25)
        qb = QueueBank(two_agent_profile(0.5), q=[2.0, 0.0])
        assert apportion_counts(qb.profile, qb, 10).tolist() == [4, 6]

    def test_free_agent_gets_nothing(self):
        p = validate_capacity_profile([0.5, 0.5, 0.0], [False, False, True])
        qb = QueueBank(p)
        assert apportion_counts(p, qb, 10).tolist() == [5, 5, 0]

    def test_all_backlogged_falls_back(self):
        qb = QueueBank(two_agent_profile(0.5), q=[9.0, 9.0])
        assert apportion_counts(qb.profile, qb, 4).tolist() == [2, 2]

    @settings(max_examples=60)
    @given(st.floats(0.0, 1.0), st.floats(0, 20), st.floats(0, 20), st.integers(1, 200))
    def test_sums_to_batch(self, a1, q1, q2, B):
        qb = QueueBank(two_agent_profile(a1), q=[q1, q2])
        c = apportion_counts(qb.profile, qb, B)
        assert c.sum() == B and np.all(c >= 0)


class TestMcmf:
    def test_single_arc(self):
        net = FlowNetwork(2, 0, 1)
        net.add_arc(0, 1, 3, 2)
        assert mcmf_solve(net) == (3, 6)

    def test_zero_capacity(self):
        net = FlowNetwork(2, 0, 1)
        net.add_arc(0, 1, 0, 5)
        assert mcmf_solve(net) == (0, 0)

    def test_bipartite_two_by_two(self):
        net = FlowNetwork(6, 0, 1)
        scores = [[0.9, 0.1], [0.8, 0.7]]
        for i in range(2):
            net.add_arc(0, 2 + i, 1, 0)
            for a in range(2):
                net.add_arc(2 + i, 4 + a, 1, -round(scores[i][a] * COST_SCALE))
        for a in range(2):
            net.add_arc(4 + a, 1, 1, 0)
        assert mcmf_solve(net) == (2, -1_600_000)

    def test_prefers_cheaper_path(self):
        net = FlowNetwork(4, 0, 3)
        net.add_arc(0, 1, 2, 1)
        net.add_arc(0, 2, 2, 5)
        net.add_arc(1, 3, 1, 1)
        net.add_arc(2, 3, 2, 1)
        net.add_arc(1, 2, 1, 1)
        # units: 0-1-3 (2), 0-1-2-3 (3), 0-2-3 (6)
        assert mcmf_solve(net) == (3, 11)

    def test_malformed(self):
        net = FlowNetwork(2, 0, 1)
        with pytest.raises(NetworkMalformed):
            net.add_arc(0, 5, 1, 0)
        with pytest.raises(NetworkMalformed):
            net.add_arc(0, 1, -1, 0)
        with pytest.raises(NetworkMalformed):
            net.add_arc(0, 1, 1, 0.5)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_conservation_and_reduced_costs(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 8))
        net = FlowNetwork(n, 0, n - 1)
        arcs = []
        for _ in range(int(rng.integers(n, 3 * n))):
            u, v = rng.choice(n, 2, replace=False)
            # forward-only arcs keep the graph acyclic, so no negative cycles
            u, v = min(u, v), max(u, v)
            arcs.append(net.add_arc(int(u), int(v), int(rng.integers(0, 4)), int(rng.integers(-5, 10))))
        flow, cost = mcmf_solve(net)
        balance = np.zeros(n, dtype=int)
        total = 0
        for arc in arcs:
            f = net.flow_on(arc)
            assert 0 <= f <= net.capacity[arc]
            balance[net.tail(arc)] -= f
            balance[net.head[arc]] += f
            total += f * net.cost[arc]
        assert balance[0] == -flow and balance[n - 1] == flow
        assert np.all(balance[1:-1] == 0)
        assert total == cost
        pi = net.potentials
        for arc in range(len(net.head)):
            if net.residual[arc] > 0 and pi[net.tail(arc)] < float("inf") and pi[net.head[arc]] < float("inf"):
                assert net.cost[arc] + pi[net.tail(arc)] - pi[net.head[arc]] >= 0


class TestAssignBatch:
    def test_two_by_two(self):
        plan = assign_batch([[0.9, 0.1], [0.8, 0.7]], [1, 1])
        assert plan.assignment.tolist() == [0, 1]
        assert plan.total_score == pytest.approx(1.6, abs=1e-12)

    def test_forced(self):
        S = np.random.default_rng(0).random((5, 3))
        plan = assign_batch(S, [5, 0, 0])
        assert plan.assignment.tolist() == [0] * 5
        assert plan.total_score == pytest.approx(S[:, 0].sum())

    @pytest.mark.parametrize("solver", ["network", "exchange"])
    def test_random_six_by_three(self, solver):
        rng = np.random.default_rng(1)
        for _ in range(20):
            S = rng.random((6, 3))
            plan = assign_batch(S, [2, 2, 2], solver=solver)
            assert plan.counts.tolist() == [2, 2, 2]
            assert plan.total_score == pytest.approx(brute_force(S, [2, 2, 2]), abs=1e-9)

    def test_score_overflow(self):
        with pytest.raises(ScoreOverflow):
            assign_batch([[1e4, 0.0]], [1, 0])

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            assign_batch([[0.1, 0.2], [0.3, 0.4]], [1, 0])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            assign_batch([[np.nan, 0.2]], [1, 0])

    def test_free_agent_absorbs(self):
        S = np.array([[0.9, 0.1, 0.5], [0.2, 0.3, 0.6], [0.95, 0.1, 0.4]])
        plan = assign_batch(S, [1, 1, 0], free=[False, False, True])
        # agent 1 may take only one task, the free agent takes the rest profitably
        assert plan.assignment.tolist() == [2, 2, 0]
        assert plan.total_score == pytest.approx(0.5 + 0.6 + 0.95)

    def test_short_counts_without_free_agent(self):
        with pytest.raises(CountMismatch):
            assign_batch(np.zeros((3, 2)), [1, 1])

    def test_free_agent_covers_shortfall(self):
        plan = assign_batch(np.zeros((3, 3)), [0, 0, 0], free=[False, False, True])
        assert plan.assignment.tolist() == [2, 2, 2]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(2, 3), st.integers(0, 2**32 - 1))
    def test_matches_enumeration(self, B, A, seed):
        rng = np.random.default_rng(seed)
        S = rng.random((B, A)) * rng.choice([1.0, -2.0, 10.0])
        counts = rng.multinomial(B, np.full(A, 1 / A))
        for solver in ("network", "exchange"):
            plan = assign_batch(S, counts, solver=solver)
            assert plan.counts.tolist() == counts.tolist()
            got = -int(np.rint(S[np.arange(B), plan.assignment] * COST_SCALE).sum())
            assert got == brute_force_int(S, counts)
            assert plan.total_score == pytest.approx(S[np.arange(B), plan.assignment].sum())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
    def test_scaling_keeps_optimum(self, seed, c):
        rng = np.random.default_rng(seed)
        S = np.round(rng.random((7, 3)), 2)
        counts = [3, 2, 2]
        base = assign_batch(S, counts)
        scaled = assign_batch(S * c, counts)
        # the scaled plan stays optimal for the unscaled scores up to the grid
        assert S[np.arange(7), scaled.assignment].sum() >= base.total_score - 7 / COST_SCALE / c

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_solvers_agree_with_free_agent(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        S = rng.random((n, 3))
        counts = rng.multinomial(n, [0.4, 0.6, 0.0])
        free = [False, False, True]
        a = assign_batch(S, counts, free, solver="network")
        b = assign_batch(S, counts, free, solver="exchange")
        assert a.total_score == pytest.approx(b.total_score, abs=1e-9)
        assert np.all(b.counts[:2] <= counts[:2])

    def test_shadow_prices_support_assignment(self):
        rng = np.random.default_rng(3)
        S = rng.random((40, 3))
        for solver in ("network", "exchange"):
            plan = assign_batch(S, [10, 20, 10], solver=solver)
            adj = S - plan.shadow_prices
            chosen = adj[np.arange(40), plan.assignment]
            assert np.all(chosen >= adj.max(axis=1) - 2e-6)
            assert plan.shadow_prices.min() == 0.0


def test_plan_csv():
    plans = [assign_batch([[0.9, 0.1], [0.8, 0.7]], [1, 1]), assign_batch([[0.25, 0.5]], [0, 1])]
    buf = io.BytesIO()
    write_batch_plans(plans, buf)
    assert buf.getvalue() == (
        b"batch_index,task_index,agent,score\n0,0,1,0.9\n0,1,2,0.7\n1,2,2,0.5\n"
    )
