import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duelbench.model import (
    GenerationBudgetExhausted,
    InvalidPreferenceMatrix,
    NormalizationSpec,
    ScoreVector,
    borda_scores,
    copeland_scores,
    generate_random_instance,
    load_matrix_csv,
    normalize_scores,
    save_matrix_csv,
    unique_winner,
    validate_preference_matrix,
)


def matrix_from_upper(k, upper):
    p = np.full((k, k), 0.5)
    iu = np.triu_indices(k, 1)
    p[iu] = upper
    p[iu[1], iu[0]] = 1 - np.asarray(upper)
    return p


class TestValidate:
    def test_single_arm_rejected(self):
        with pytest.raises(InvalidPreferenceMatrix, match="at least 2"):
            validate_preference_matrix([[0.5]])

    def test_two_arm_valid(self):
        pm = validate_preference_matrix([[0.5, 0.7], [0.3, 0.5]])
        assert pm.k == 2
        assert pm.p[0, 1] == 0.7

    def test_skew_violation(self):
        with pytest.raises(InvalidPreferenceMatrix, match="expected 1"):
            validate_preference_matrix([[0.5, 0.7], [0.4, 0.5]])

    @pytest.mark.parametrize(
        "raw",
        [
            [[0.5, 0.7, 0.1], [0.3, 0.5, 0.2]],
            [[0.5, 1.2], [-0.2, 0.5]],
            [[0.6, 0.7], [0.3, 0.4]],
            [[0.5, float("nan")], [0.5, 0.5]],
        ],
    )
    def test_bad_inputs(self, raw):
        with pytest.raises(InvalidPreferenceMatrix):
            validate_preference_matrix(raw)

    def test_symmetrized_exactly(self):
        raw = np.array([[0.5, 0.7], [0.3 + 1e-13, 0.5]])
        pm = validate_preference_matrix(raw)
        assert pm.p[0, 1] + pm.p[1, 0] == 1.0
        assert pm.p[1, 0] == 1.0 - 0.7

    def test_read_only(self):
        pm = validate_preference_matrix([[0.5, 0.7], [0.3, 0.5]])
        with pytest.raises(ValueError):
            pm.p[0, 1] = 0.9


class TestCopeland:
    def test_total_order(self):
        # arm 0 beats 1 and 2, arm 1 beats 2
        pm = validate_preference_matrix(matrix_from_upper(3, [0.8, 0.9, 0.6]))
        np.testing.assert_array_equal(copeland_scores(pm).values, [1.0, 0.5, 0.0])

    def test_cycle(self):
        # 0 beats 1, 1 beats 2, 2 beats 0
        pm = validate_preference_matrix(matrix_from_upper(3, [0.8, 0.3, 0.7]))
        np.testing.assert_array_equal(copeland_scores(pm).values, [0.5, 0.5, 0.5])
        assert unique_winner(copeland_scores(pm)) is None

    @pytest.mark.parametrize("k", [2, 3, 7])
    def test_all_half(self, k):
        pm = validate_preference_matrix(np.full((k, k), 0.5))
        np.testing.assert_array_equal(copeland_scores(pm).values, np.zeros(k))

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_condorcet_iff_max_one(self, k):
        # brute force over every sign pattern of the upper triangle
        m = k * (k - 1) // 2
        for signs in itertools.product([0.2, 0.8], repeat=m):
            p = matrix_from_upper(k, signs)
            beats_all = [all(p[i, j] > 0.5 for j in range(k) if j != i) for i in range(k)]
            scores = copeland_scores(validate_preference_matrix(p)).values
            assert (scores.max() == 1.0) == any(beats_all)

    @given(st.integers(3, 7), st.integers(0, 2**32 - 1), st.randoms())
    @settings(max_examples=40, deadline=None)
    def test_relabel_invariance(self, k, seed, rnd):
        pm = generate_random_instance(k, seed)
        perm = list(range(k))
        rnd.shuffle(perm)
        permuted = pm.permuted(perm)
        np.testing.assert_array_equal(copeland_scores(permuted).values,
                                      copeland_scores(pm).values[perm])

    def test_scores_are_multiples(self):
        pm = generate_random_instance(6, 11)
        v = copeland_scores(pm).values * 5
        np.testing.assert_array_equal(v, np.round(v))


class TestBorda:
    def test_two_arms(self):
        pm = validate_preference_matrix([[0.5, 0.7], [0.3, 0.5]])
        np.testing.assert_allclose(borda_scores(pm).values, [0.6, 0.4], rtol=0, atol=1e-15)

    def test_all_half(self):
        pm = validate_preference_matrix(np.full((4, 4), 0.5))
        np.testing.assert_array_equal(borda_scores(pm).values, np.full(4, 0.5))

    def test_includes_self_term(self):
        pm = validate_preference_matrix(matrix_from_upper(3, [1.0, 1.0, 0.5]))
        assert borda_scores(pm).values[0] == pytest.approx(2.5 / 3, abs=1e-15)


class TestNormalize:
    def test_maximize(self):
        v = normalize_scores(NormalizationSpec([0, 5, 10], 0, 10, "maximize")).values
        np.testing.assert_array_equal(v, [0.0, 0.5, 1.0])

    def test_minimize(self):
        v = normalize_scores(NormalizationSpec([0, 5, 10], 0, 10, "minimize")).values
        np.testing.assert_array_equal(v, [1.0, 0.5, 0.0])

    def test_constant(self):
        v = normalize_scores(NormalizationSpec([3, 3, 3], 0, 10)).values
        np.testing.assert_allclose(v, [0.3, 0.3, 0.3], atol=1e-15)

    def test_bad_range(self):
        with pytest.raises(ValueError, match="alpha < beta"):
            NormalizationSpec([1.0], 2.0, 2.0)

    @given(
        st.lists(st.integers(-1000, 1000), min_size=2, max_size=12, unique=True),
        st.sampled_from(["maximize", "minimize"]),
    )
    def test_winner_preserved(self, h, direction):
        lo, hi = min(h) - 1.0, max(h) + 1.0
        v = normalize_scores(NormalizationSpec(h, lo, hi, direction)).values
        target = np.argmax(h) if direction == "maximize" else np.argmin(h)
        assert np.argmax(v) == target


class TestUniqueWinner:
    def test_strict(self):
        assert unique_winner(ScoreVector([1.0, 0.5, 0.0], "copeland")) == 0

    def test_full_tie(self):
        assert unique_winner(ScoreVector([0.5, 0.5, 0.5], "copeland")) is None

    def test_two_way_tie(self):
        assert unique_winner([0.9, 0.9, 0.1]) is None


class TestGenerate:
    @pytest.mark.parametrize("seed", range(10))
    def test_unique_winner(self, seed):
        pm = generate_random_instance(3, seed)
        assert unique_winner(copeland_scores(pm)) is not None
        off = pm.p[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off - 0.5) >= 1e-9)

    def test_deterministic(self):
        assert generate_random_instance(8, 1234) == generate_random_instance(8, 1234)
        assert generate_random_instance(8, 1234) != generate_random_instance(8, 1235)

    def test_exact_skew_symmetry(self):
        pm = generate_random_instance(9, 3, min_gap=0.1)
        assert np.all(pm.p + pm.p.T == 1.0)
        assert np.all(np.diag(pm.p) == 0.5)

    def test_min_gap_respected(self):
        pm = generate_random_instance(5, 7, min_gap=0.25)
        s = np.sort(copeland_scores(pm).values)
        assert s[-1] - s[-2] >= 0.25

    def test_infeasible_gap(self):
        # independent measurement: fraction of raw uniform draws with top-two gap >= 0.9
        rng = np.random.default_rng(0)
        accepted = 0
        for _ in range(10_000):
            p = matrix_from_upper(5, rng.random(10))
            s = np.sort((p > 0.5).sum(axis=1) / 4)
            accepted += s[-1] - s[-2] >= 0.9
        assert accepted == 0
        with pytest.raises(GenerationBudgetExhausted):
            generate_random_instance(5, 0, min_gap=0.9, max_attempts=200)

    def test_small_k_rejected(self):
        with pytest.raises(ValueError):
            generate_random_instance(2, 0)


def test_csv_round_trip(tmp_path):
    pm = generate_random_instance(6, 99)
    path = tmp_path / "m.csv"
    save_matrix_csv(pm, path)
    assert load_matrix_csv(path) == pm
    assert len(path.read_text().splitlines()) == 6


def test_csv_loader_validates(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.5,0.7\n0.4,0.5\n")
    with pytest.raises(InvalidPreferenceMatrix):
        load_matrix_csv(path)
