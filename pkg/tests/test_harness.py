import io

import numpy as np
import pytest

from capbandit.domain import TaskLog, permute_log, spread_profile, two_agent_profile, validate_capacity_profile
from capbandit.errors import CheckpointError, InvalidSpec, ParseError, ValidationError
from capbandit.harness import (
    ExperimentConfig,
    OnlineSimulation,
    SweepTable,
    compute_regret,
    linear_slope,
    load_checkpoint,
    run_batch_sweep,
    run_batched,
    run_cell,
    run_offline_benchmark,
    run_online,
    run_sweep,
    save_checkpoint,
    synth_generate,
)
from capbandit.harness.synth import AgentSpec, SynthSpec, checkerboard, complementary, dominant, free_agent
from capbandit.harness.sweep import write_batch_sweep
from capbandit.policy import oracle_constrained_general, oracle_unconstrained


@pytest.fixture(scope="module")
def comp_log():
    return synth_generate(complementary(5000), 0)


def forced_accuracy_log(n=100, hits=91):
    rewards = np.zeros((n, 2), dtype=np.int8)
    rewards[:hits, 0] = 1
    rewards[::2, 1] = 1
    return TaskLog(np.linspace(0, 1, n)[:, None], rewards)


class TestSynth:
    def test_complementary_column_means(self, comp_log):
        assert np.all(np.abs(comp_log.rewards.mean(axis=0) - 0.5) < 0.02)
        mu = comp_log.mu
        x = comp_log.contexts[:, 0]
        assert np.all((mu[:, 0] - mu[:, 1])[x > 0] > 0)
        assert np.all((mu[:, 0] - mu[:, 1])[x < 0] < 0)

    def test_dominant_oracle_value(self):
        log = synth_generate(dominant(), 3)
        assert oracle_constrained_general(log.mu, two_agent_profile(0.5)).value == pytest.approx(0.75)

    def test_deterministic(self):
        a, b = synth_generate(checkerboard(500), 4), synth_generate(checkerboard(500), 4)
        assert a.contexts.tobytes() == b.contexts.tobytes()
        assert a.rewards.tobytes() == b.rewards.tobytes()

    def test_gaussian_law(self):
        spec = SynthSpec(2, 4000, (AgentSpec("constant", p=0.2), AgentSpec("constant", p=0.8)),
                         law="gaussian", low=1.0, high=2.0)
        X = synth_generate(spec, 0).contexts
        assert abs(X.mean() - 1.0) < 0.1 and abs(X.std() - 2.0) < 0.1

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            synth_generate(SynthSpec(1, 10, (AgentSpec("constant"),)), 0)
        with pytest.raises(InvalidSpec):
            synth_generate(SynthSpec(2, 10, (AgentSpec("logistic", (1.0,)), AgentSpec("constant"))), 0)
        with pytest.raises(InvalidSpec):
            synth_generate(SynthSpec(1, 10, (AgentSpec("wavy"), AgentSpec("constant"))), 0)


class TestOnline:
    def test_forced_random_error(self):
        res = run_online(forced_accuracy_log(), "random", two_agent_profile(1.0), 0)
        assert res.error_rate == pytest.approx(0.09, abs=1e-15)
        assert res.fractions.tolist() == [1.0, 0.0]

    @pytest.mark.parametrize("kind", ["logistic_greedy", "learned_noncontextual", "oracle_unconstrained"])
    def test_fraction_drift(self, kind):
        log = synth_generate(complementary(10_000), 1)
        res = run_online(log, kind, two_agent_profile(0.3), 1)
        assert np.all(np.abs(res.fractions - [0.3, 0.7]) <= 0.01)

    def test_tree_greedy_beats_random(self, comp_log):
        p = two_agent_profile(0.5)
        tree = np.mean([run_online(permute_log(comp_log, k), "tree_greedy", p, k).error_rate for k in range(50)])
        rand = 1.0 - float(p.as_array() @ comp_log.mu.mean(axis=0))
        assert tree <= rand - 0.03

    def test_update_counter(self, comp_log):
        for kind in ("logistic_ts", "tree_ts", "learned_noncontextual", "random"):
            res = run_online(comp_log, kind, two_agent_profile(0.5), 2)
            assert res.n_updates == comp_log.n_records

    def test_only_chosen_reward_revealed(self, comp_log):
        sim = OnlineSimulation(comp_log, "logistic_greedy", two_agent_profile(0.5), 0).run(300)
        tr = sim.trace()
        assert np.array_equal(tr.rewards, comp_log.rewards[np.arange(300), tr.agents])

    def test_zero_share_agent_never_chosen(self, comp_log):
        res = run_online(comp_log, "logistic_greedy", two_agent_profile(0.0), 0)
        assert res.fractions.tolist() == [0.0, 1.0]

    def test_result_invariants(self, comp_log):
        res = run_online(comp_log, "tree_ts", two_agent_profile(0.4), 5)
        assert 0.0 <= res.error_rate <= 1.0
        assert res.fractions.sum() == pytest.approx(1.0)
        assert np.all(res.final_queues >= 0)

    def test_profile_mismatch(self, comp_log):
        with pytest.raises(InvalidSpec):
            run_online(comp_log, "random", validate_capacity_profile([0.2, 0.3, 0.5]), 0)

    def test_constrained_oracle_needs_means(self):
        with pytest.raises(InvalidSpec):
            run_online(forced_accuracy_log(), "oracle_constrained", two_agent_profile(0.5), 0)

    def test_trace_csv(self):
        log = forced_accuracy_log(3, 2)
        res = run_online(log, "learned_noncontextual", two_agent_profile(0.5), 0, keep_trace=True)
        buf = io.BytesIO()
        res.trace.write_csv(buf)
        lines = buf.getvalue().decode().splitlines()
        assert lines[0] == "t,agent,reward,score_1,score_2,q_1,q_2"
        assert lines[1] == "1,1,1,0.5,0.5,0.0,0.0"
        assert len(lines) == 4


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["logistic_ts", "tree_greedy", "learned_noncontextual", "random"])
    def test_resume_matches_straight_run(self, kind, comp_log, tmp_path):
        log = permute_log(comp_log, 3)
        p = two_agent_profile(0.4)
        straight = run_online(log, kind, p, 3, keep_trace=True)
        sim = OnlineSimulation(log, kind, p, 3).run(1234)
        path = tmp_path / "ck.json"
        save_checkpoint(sim, path)
        resumed = load_checkpoint(path, log).run().result(keep_trace=True)
        assert resumed.error_rate == straight.error_rate
        assert np.array_equal(resumed.trace.agents, straight.trace.agents)
        assert np.array_equal(resumed.final_queues, straight.final_queues)

    def test_wrong_log(self, comp_log, tmp_path):
        sim = OnlineSimulation(comp_log, "random", two_agent_profile(0.5), 0).run(10)
        path = tmp_path / "ck.json"
        save_checkpoint(sim, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, permute_log(comp_log, 1))

    def test_bad_version(self, comp_log):
        state = OnlineSimulation(comp_log, "random", two_agent_profile(0.5), 0).state_dict()
        state["version"] = 99
        with pytest.raises(CheckpointError):
            OnlineSimulation.from_state(comp_log, state)


class TestBatched:
    @pytest.mark.parametrize("kind", ["logistic_greedy", "tree_greedy", "learned_noncontextual"])
    def test_unit_batch_equals_online(self, kind, comp_log):
        p = two_agent_profile(0.4)
        a = run_online(comp_log, kind, p, 7, keep_trace=True)
        b = run_batched(comp_log, kind, p, 7, 1, keep_trace=True)
        assert abs(a.error_rate - b.error_rate) < 1e-12
        assert np.array_equal(a.trace.agents, b.trace.agents)

    def test_single_batch(self):
        log = synth_generate(complementary(300), 2)
        res, plans = run_batched(log, "logistic_greedy", two_agent_profile(0.3), 0, 300, keep_plans=True)
        assert len(plans) == 1
        assert res.batch_counts[0].tolist() == res.apportioned_counts[0].tolist() == [90, 210]

    @pytest.mark.parametrize("B", [10, 100])
    def test_counts_and_drift(self, B):
        log = synth_generate(complementary(10_000), 5)
        res = run_batched(log, "logistic_ts", two_agent_profile(0.3), 0, B)
        for got, want in zip(res.batch_counts, res.apportioned_counts):
            assert got.sum() == B
            assert got.tolist() == want.tolist()
        assert np.all(np.abs(res.fractions - [0.3, 0.7]) <= B / 10_000 + 0.01)

    def test_free_agent_batches(self):
        log = synth_generate(free_agent(600), 0)
        p = spread_profile(0.5, 2, free_agent=True)
        res = run_batched(log, "logistic_greedy", p, 0, 50)
        assert res.final_queues[2] == 0.0
        for got, want in zip(res.batch_counts, res.apportioned_counts):
            assert got.sum() == 50
            assert np.all(got[:2] <= want[:2])

    def test_bad_size(self, comp_log):
        with pytest.raises(InvalidSpec):
            run_batched(comp_log, "random", two_agent_profile(0.5), 0, 0)


class TestOffline:
    def test_always_correct_agent(self):
        rewards = np.column_stack([np.ones(200, dtype=np.int8), np.zeros(200, dtype=np.int8)])
        log = TaskLog(np.random.default_rng(0).normal(size=(200, 2)), rewards)
        res = run_offline_benchmark(log, "logistic")
        assert res.error_rate == 0.0
        assert res.fractions.tolist() == [1.0, 0.0]

    def test_tree_on_checkerboard(self):
        log = synth_generate(checkerboard(5000), 0)
        res = run_offline_benchmark(log, "tree")
        oracle_assign, _ = oracle_unconstrained(log.mu)
        oracle_error = 1.0 - log.rewards[np.arange(log.n_records), oracle_assign].mean()
        assert abs(res.error_rate - oracle_error) <= 0.05

    def test_unknown_family(self, comp_log):
        with pytest.raises(InvalidSpec):
            run_offline_benchmark(comp_log, "forest")


class TestRegret:
    def test_oracle_plays_itself(self, comp_log):
        res = run_online(comp_log, "oracle_unconstrained", two_agent_profile(0.3), 0)
        assert res.regret == 0.0

    def test_random_slope_positive(self, comp_log):
        res = run_online(comp_log, "random", two_agent_profile(0.5), 0, keep_trace=True)
        rep = compute_regret(res.trace.agents, res.trace.queues, comp_log.mu, 0.5)
        assert linear_slope(rep.modified) > 0

    def test_hand_example(self):
        mu = np.array([[0.9, 0.2], [0.3, 0.6]])
        queues = np.array([[0.0, 0.0], [0.5, 0.0]])
        rep = compute_regret([1, 0], queues, mu, 1.0, oracle_value=0.75)
        # round 1: 0.9 - 0.2; round 2: adjusted (-0.2, 0.6) so 0.6 + 0.2
        assert rep.modified == pytest.approx([0.7, 1.5])
        assert rep.reward_shortfall == pytest.approx([0.55, 1.0])
        assert rep.half_increments() == pytest.approx((0.7, 0.8))

    def test_slope(self):
        assert linear_slope(3.0 * np.arange(10) + 1) == pytest.approx(3.0)


class TestSweep:
    def test_endpoints_exact(self, comp_log):
        cfg = ExperimentConfig(policies=("random",), alphas=(0.0, 1.0), runs=5, offline=())
        table = run_sweep(comp_log, cfg)
        col = comp_log.rewards.mean(axis=0)
        assert table.get("random", "0/1").mean_error == 1.0 - col[1]
        assert table.get("random", "1/0").mean_error == 1.0 - col[0]
        assert table.get("random", "1/0").std_error == 0.0

    def test_row_statistics(self, comp_log):
        cfg = ExperimentConfig(policies=("logistic_greedy",), alphas=(0.5,), runs=4, offline=())
        row = run_sweep(comp_log, cfg).rows[0]
        runs = run_cell(comp_log, "logistic_greedy", two_agent_profile(0.5), cfg)
        errs = np.array([r.error_rate for r in runs])
        assert row.n_runs == 4
        assert row.mean_error == pytest.approx(errs.mean())
        assert row.std_error == pytest.approx(errs.std(ddof=1))
        assert row.fractions.sum() == pytest.approx(1.0)

    def test_reproducible_bytes(self):
        spec = complementary(400)
        cfg = ExperimentConfig(policies=("logistic_ts", "random"), alphas=(0.2, 0.5), runs=3, seed=11)
        a = run_sweep(spec, cfg).to_bytes()
        assert a == run_sweep(spec, cfg).to_bytes()
        assert a == run_sweep(spec, cfg, jobs=2).to_bytes()

    def test_csv_round_trip(self):
        cfg = ExperimentConfig(policies=("random",), alphas=(0.2, 0.8), runs=2)
        table = run_sweep(complementary(200), cfg)
        back = SweepTable.from_csv(table.to_bytes())
        assert back.to_bytes() == table.to_bytes()
        assert back.rows[-1].policy == "offline_tree"
        assert back.rows[0].alpha1 == 0.2

    def test_bad_table(self):
        with pytest.raises(ParseError):
            SweepTable.from_csv(b"a,b\n")
        with pytest.raises(ParseError):
            SweepTable.from_csv(b"policy,alpha_profile,mean_error,std_error,frac_agent_1\nx,y,z,1,1\n")

    def test_validation(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(runs=0).validate()
        with pytest.raises(ValidationError):
            ExperimentConfig(eta=-0.1).validate()
        with pytest.raises(ValidationError):
            ExperimentConfig(policies=("ucb",)).validate()

    def test_explicit_profiles(self):
        cfg = ExperimentConfig(profiles=((0.3, 0.7, 0.0),), free_agent=True)
        (p,) = cfg.grid(3)
        assert p.unconstrained == (False, False, True)

    def test_batch_sweep(self):
        cfg = ExperimentConfig(policies=("logistic_greedy",), runs=2)
        rows = run_batch_sweep(complementary(200), cfg, two_agent_profile(0.5), [1, 50, 0])
        assert [r.batch_size for r in rows] == [1, 50, 200]
        buf = io.BytesIO()
        write_batch_sweep(rows, buf)
        assert buf.getvalue().startswith(b"policy,batch_size,mean_error,std_error,frac_agent_1,frac_agent_2\n")
