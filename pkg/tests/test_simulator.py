import json

import numpy as np
import pytest

from duelbench.model import ScoreVector, copeland_scores, generate_random_instance, validate_preference_matrix
from duelbench.policies import DuelPolicy, make_policy
from duelbench.simulator import (
    Environment,
    ExperimentConfig,
    PolicySpec,
    RegretLedger,
    RunResult,
    copeland_regret,
    derive_seed,
    log_checkpoints,
    make_instances,
    mean_pair_regret,
    read_results_csv,
    run_experiment,
    run_single,
    summarize,
    write_instances,
    write_results_csv,
    write_summary_json,
)


class WinnerOracle(DuelPolicy):
    """Always duels the true winner against itself."""

    name = "oracle"

    def __init__(self, k, winner):
        super().__init__(k)
        self.winner = winner

    def _propose(self, n):
        return self.winner, self.winner

    def _observe(self, i, j, w):
        pass

    def recommend(self):
        return self.winner


SCORES = ScoreVector([1.0, 0.5, 0.0], "copeland")


class TestDuel:
    def test_certain_win(self):
        env = Environment(validate_preference_matrix([[0.5, 1.0], [0.0, 0.5]]), 0)
        assert all(env.duel(0, 1) == 1 for _ in range(1000))

    def test_self_duel_fair(self):
        env = Environment(generate_random_instance(3, 0), 1)
        n = 100_000
        mean = np.mean([env.duel(1, 1) for _ in range(n)])
        assert abs(mean - 0.5) < 3 * np.sqrt(0.25 / n)

    def test_empirical_rate(self):
        pm = generate_random_instance(4, 2)
        env = Environment(pm, 3)
        n = 100_000
        p = pm.p[0, 2]
        mean = np.mean([env.duel(0, 2) for _ in range(n)])
        assert abs(mean - p) < 3 * np.sqrt(p * (1 - p) / n)

    def test_invalid_arms(self):
        env = Environment(generate_random_instance(3, 0), 1)
        with pytest.raises(ValueError):
            env.duel(2, 1)
        with pytest.raises(ValueError):
            env.duel(0, 3)

    def test_requires_unique_winner(self):
        cyc = validate_preference_matrix([[0.5, 0.8, 0.3], [0.2, 0.5, 0.7], [0.7, 0.3, 0.5]])
        with pytest.raises(ValueError):
            Environment(cyc, 0)


class TestRegret:
    def test_zero_at_winner(self):
        assert copeland_regret(SCORES, 0, 0, 0) == 0.0

    def test_examples(self):
        assert copeland_regret(SCORES, 0, 1, 2) == 0.75
        assert copeland_regret(SCORES, 0, 0, 1) == 0.25

    @pytest.mark.parametrize("seed", range(5))
    def test_zero_iff_winner_pair(self, seed):
        pm = generate_random_instance(6, seed)
        z = copeland_scores(pm)
        w = int(np.argmax(z.values))
        for i in range(6):
            for j in range(i, 6):
                r = copeland_regret(z, w, i, j)
                assert r >= 0
                assert (r == 0) == (i == j == w)

    def test_mean_pair_regret_by_enumeration(self):
        pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
        expected = sum((2 - SCORES[i] - SCORES[j]) / 2 for i, j in pairs) / 6
        assert mean_pair_regret(SCORES, 0) == pytest.approx(expected, abs=1e-15)

    def test_ledger(self):
        ledger = RegretLedger(keep_trace=True)
        for r in [0.5, 0.0, 0.25]:
            ledger.record(r)
        assert ledger.total == 0.75
        assert ledger.cumulative == [0.5, 0.5, 0.75]


class TestRunSingle:
    def test_oracle_zero(self):
        pm = generate_random_instance(5, 1)
        env = Environment(pm, 0)
        res = run_single(env, WinnerOracle(5, env.winner), 5000)
        assert np.all(res.cum_regret == 0)
        assert res.recommended == res.winner

    def test_random_policy_linear(self):
        pm = generate_random_instance(5, 6)
        env = Environment(pm, 0)
        expected = 100_000 * mean_pair_regret(env.true_scores, env.winner)
        res = run_single(env, make_policy("random", 5, seed=1), 100_000)
        assert res.final_regret == pytest.approx(expected, rel=0.05)

    def test_deterministic(self):
        pm = generate_random_instance(5, 1)
        a = run_single(Environment(pm, 3), make_policy("dts", 5, seed=4), 4000)
        b = run_single(Environment(pm, 3), make_policy("dts", 5, seed=4), 4000)
        assert a == b

    def test_checkpoints_monotone(self):
        pm = generate_random_instance(4, 1)
        res = run_single(Environment(pm, 3), make_policy("sup-klucb", 4, seed=4), 20_000)
        assert np.all(np.diff(res.rounds) > 0)
        assert np.all(np.diff(res.cum_regret) >= 0)
        assert res.rounds[-1] == 20_000

    def test_horizon_too_small(self):
        pm = generate_random_instance(5, 1)
        with pytest.raises(ValueError, match="initialisation"):
            run_single(Environment(pm, 0), make_policy("sup-klucb", 5, seed=0), 10)

    def test_bad_checkpoints(self):
        pm = generate_random_instance(3, 1)
        with pytest.raises(ValueError):
            run_single(Environment(pm, 0), make_policy("random", 3, seed=0), 100, [5, 5, 100])


def test_log_checkpoints():
    r = log_checkpoints(100_000)
    assert r[0] == 1 and r[-1] == 100_000
    assert len(r) <= 200 and np.all(np.diff(r) > 0)
    np.testing.assert_array_equal(log_checkpoints(5, 200), [1, 2, 3, 4, 5])


def test_derive_seed_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(1, 0)
    assert 0 <= derive_seed(2**63, 5) < 2**64


def small_config(**kw):
    base = dict(arms=4, horizon=2000, games=2, iterations=2,
                policies=[PolicySpec("sup-klucb"), PolicySpec("dts")], seed=17, checkpoints=30)
    base.update(kw)
    return ExperimentConfig(**base)


class TestExperiment:
    def test_run_count_and_order(self):
        res = run_experiment(small_config(), serial=True)
        assert len(res.runs) == 8
        keys = [(r.game, r.iteration, r.policy) for r in res.runs]
        assert keys == sorted(keys, key=lambda k: (k[0], k[1], ["sup-klucb", "dts"].index(k[2])))

    def test_single_run_aggregate(self):
        cfg = small_config(games=1, iterations=1, policies=[PolicySpec("rucb")])
        res = run_experiment(cfg, serial=True)
        s = res.summary()["rucb"]
        np.testing.assert_array_equal(s["mean"], res.runs[0].cum_regret)
        np.testing.assert_array_equal(s["p25"], s["p75"])

    def test_constant_runs_aggregate(self):
        pm = generate_random_instance(4, 0)
        runs = []
        for g in range(3):
            env = Environment(pm, g)
            r = run_single(env, WinnerOracle(4, env.winner), 500, game=g)
            runs.append(r)
        s = summarize(runs)["oracle"]
        assert s["mean"] == [0.0] * len(s["rounds"])
        assert s["p25"] == s["p75"] == s["mean"]
        assert s["final_winner_accuracy"] == 1.0

    def test_parallel_matches_serial(self, tmp_path):
        cfg = small_config()
        serial = run_experiment(cfg, serial=True)
        parallel = run_experiment(cfg, workers=2)
        write_results_csv(serial.runs, tmp_path / "a.csv")
        write_results_csv(parallel.runs, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert serial.summary() == parallel.summary()

    def test_instances_seeded_by_game(self):
        a = make_instances(small_config(games=3))
        b = make_instances(small_config(games=5))
        assert a == b[:3]

    def test_validation(self):
        with pytest.raises(ValueError):
            small_config(horizon=5).validate()
        with pytest.raises(ValueError, match="singular"):
            small_config(arms=2).validate()
        with pytest.raises(ValueError):
            small_config(iterations=0).validate()
        with pytest.raises(ValueError, match="duplicate"):
            small_config(policies=[PolicySpec("dts"), PolicySpec("dts")]).validate()

    def test_standard_error_shrinks(self):
        # replicate the aggregation many times with n and 2n iterations on one instance
        pm = generate_random_instance(4, 21)
        cfg_n = ExperimentConfig(arms=4, horizon=400, games=1, iterations=10,
                                 policies=[PolicySpec("random")], checkpoints=1)
        means = {10: [], 20: []}
        for rep in range(300):
            for n in (10, 20):
                cfg_n.iterations = n
                cfg_n.seed = rep
                res = run_experiment(cfg_n, serial=True, instances=[pm])
                means[n].append(res.summary()["random"]["mean"][-1])
        ratio = np.std(means[10]) / np.std(means[20])
        assert 1.2 < ratio < 1.65


class TestOutputs:
    def test_results_csv(self, tmp_path):
        res = run_experiment(small_config(), serial=True)
        path = tmp_path / "results.csv"
        write_results_csv(res.runs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "policy,game,iteration,round,cum_regret"
        rows = read_results_csv(path)
        assert len(rows) == sum(len(r.rounds) for r in res.runs)
        first = res.runs[0]
        got = [row["cum_regret"] for row in rows[: len(first.rounds)]]
        np.testing.assert_allclose(got, first.cum_regret, rtol=1e-9)

    def test_ten_significant_digits(self, tmp_path):
        run = RunResult("x", 0, 0, np.array([1, 2]), np.array([1 / 3, 12345.678901234]), 0, 0)
        write_results_csv([run], tmp_path / "r.csv")
        body = (tmp_path / "r.csv").read_text().splitlines()[1:]
        assert body == ["x,0,0,1,0.3333333333", "x,0,0,2,12345.6789"]

    def test_summary_json(self, tmp_path):
        res = run_experiment(small_config(), serial=True)
        write_summary_json(res.summary(), tmp_path / "s.json")
        data = json.loads((tmp_path / "s.json").read_text())
        assert set(data) == {"sup-klucb", "dts"}
        for stats in data.values():
            assert set(stats) == {"rounds", "mean", "p25", "p75", "final_winner_accuracy"}
            assert len(stats["rounds"]) == len(stats["mean"])

    def test_instance_dump(self, tmp_path):
        res = run_experiment(small_config(), serial=True)
        paths = write_instances(res.instances, tmp_path / "inst")
        assert [p.name for p in paths] == ["game_0000.csv", "game_0001.csv"]
