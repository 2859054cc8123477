import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from durian.difficulty import (
    perceptual_difficulty,
    quantile,
    regroup_perceptual,
    regroup_reasoning,
    sample_confidence,
    sequence_logprob,
    write_scores_csv,
)
from durian.errors import DegenerateResponseError, EmptyInputError, InvalidInputError
from durian.linalg import centered_second_moment, eigvals_symmetric, spectral_entropy
from durian.records import ResponseRecord
from durian.sim.env import matrix_from_spectrum

from oracles import entropy_of, naive_quantile


def rec(logprobs):
    return ResponseRecord(tokens=list(range(len(logprobs))), logprobs=logprobs)


class TestPerceptualDifficulty:
    def test_orthogonal_equal_norm_rows_is_flat(self):
        # centered rows of a simplex in 4-D: rank 3 with equal eigenvalues
        F = np.eye(4)
        assert perceptual_difficulty(F) == pytest.approx(math.log(3), abs=1e-12)

    def test_constant_matrix(self):
        assert perceptual_difficulty(np.full((6, 3), 2.0)) == 0.0

    def test_prescribed_spectrum(self):
        lam = np.array([4.0, 2.0, 1.0, 1.0])
        expected = entropy_of(lam)
        assert expected == pytest.approx(1.2130, abs=1e-4)
        F = matrix_from_spectrum(lam, 10, 6, np.random.default_rng(0))
        assert perceptual_difficulty(F) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("shape", [(5, 12), (12, 5), (7, 7)])
    def test_both_second_moment_forms_agree(self, shape):
        F = np.random.default_rng(2).standard_normal(shape)
        via_patch = spectral_entropy(eigvals_symmetric(centered_second_moment(F, "patch")))
        via_feature = spectral_entropy(eigvals_symmetric(centered_second_moment(F, "feature")))
        assert perceptual_difficulty(F) == pytest.approx(via_patch, abs=1e-10)
        assert via_patch == pytest.approx(via_feature, abs=1e-10)


class TestConfidence:
    def test_deterministic_tokens(self):
        assert sequence_logprob(rec([0.0, 0.0, 0.0])) == 0.0

    def test_normalized_vs_raw(self):
        r = rec([-0.5] * 4)
        assert sequence_logprob(r) == -0.5
        assert sequence_logprob(r, normalize=False) == -2.0

    def test_three_tokens(self):
        assert sequence_logprob(rec([-0.1, -0.3, -0.2])) == pytest.approx(-0.2, abs=1e-15)

    def test_empty_response(self):
        with pytest.raises(DegenerateResponseError):
            sequence_logprob(rec([]))

    def test_sample_confidence_mean(self):
        assert sample_confidence([rec([-0.2]), rec([-0.4])]) == pytest.approx(-0.3, abs=1e-15)
        assert sample_confidence([rec([0.0, 0.0])] * 8) == 0.0

    def test_empty_group(self):
        with pytest.raises(EmptyInputError):
            sample_confidence([])

    def test_matches_recomputation(self):
        rng = np.random.default_rng(4)
        raw = [np.log(rng.uniform(0.05, 1.0, size=rng.integers(1, 12))) for _ in range(8)]
        expected = sum(sum(x) / len(x) for x in raw) / 8
        assert sample_confidence([rec(x) for x in raw]) == pytest.approx(expected, abs=1e-12)
        expected_raw = sum(sum(x) for x in raw) / 8
        assert sample_confidence([rec(x) for x in raw], normalize=False) == pytest.approx(expected_raw, abs=1e-12)


class TestQuantile:
    def test_interpolated(self):
        assert quantile(range(1, 9), 0.25) == 2.75

    def test_extremes(self):
        v = [3.0, -1.0, 7.5, 2.0]
        assert quantile(v, 0.0) == -1.0
        assert quantile(v, 1.0) == 7.5

    def test_ties(self):
        for level in (0.0, 0.3, 1.0):
            assert quantile([5, 5, 5], level) == 5

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            quantile([], 0.5)
        with pytest.raises(InvalidInputError):
            quantile([1.0], 1.5)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0.0, 1.0))
    def test_against_sort_oracle(self, values, level):
        assert quantile(values, level) == pytest.approx(naive_quantile(values, level), rel=1e-12, abs=1e-9)


class TestRegroupPerceptual:
    def test_one_to_eight(self):
        g = regroup_perceptual([1, 2, 3, 4, 5, 6, 7, 8])
        assert g.thresholds == (2.75, 6.25)
        assert g.labels.tolist() == [0, 0, 1, 1, 1, 1, 2, 2]
        assert not g.degenerate

    def test_all_equal(self):
        g = regroup_perceptual([0.7] * 6)
        assert g.labels.tolist() == [1] * 6
        assert g.degenerate

    def test_boundary_ties_follow_le_ge(self):
        g = regroup_perceptual([1, 1, 1, 1, 2, 3, 3, 3])
        # tau_.25 = 1, tau_.75 = 3: ties go to the outer groups
        assert g.labels.tolist() == [0, 0, 0, 0, 1, 2, 2, 2]

    def test_batch_512_sizes(self):
        scores = np.random.default_rng(0).standard_normal(512)
        assert regroup_perceptual(scores).sizes().tolist() == [128, 256, 128]

    def test_global_thresholds(self):
        g = regroup_perceptual([0.1, 0.5, 0.9, 1.5], thresholds=(0.2, 1.0))
        assert g.labels.tolist() == [0, 1, 1, 2]

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            regroup_perceptual([1.0, 2.0, 3.0])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=4, max_size=60), st.randoms(use_true_random=False))
    def test_monotone_and_permutation_equivariant(self, scores, rnd):
        s = np.array(scores)
        g = regroup_perceptual(s)
        order = np.argsort(s, kind="stable")
        assert np.all(np.diff(g.labels[order]) >= 0)
        perm = list(range(len(s)))
        rnd.shuffle(perm)
        gp = regroup_perceptual(s[perm])
        assert gp.labels.tolist() == g.labels[perm].tolist()
        # exact positive rescaling leaves labels unchanged
        assert regroup_perceptual(4.0 * s).labels.tolist() == g.labels.tolist()

    def test_increasing_transform_on_separated_scores(self):
        s = np.random.default_rng(9).permutation(np.arange(40, dtype=float))
        g = regroup_perceptual(s)
        assert regroup_perceptual(np.exp(s / 7.0) * 3 + 1).labels.tolist() == g.labels.tolist()


class TestRegroupReasoning:
    def test_single_group(self):
        g = regroup_reasoning([-0.3, -0.1, -0.5, -0.2], 1)
        assert g.labels.tolist() == [0, 0, 0, 0]
        assert g.num_groups == 1

    def test_equal_count_cut(self):
        g = regroup_reasoning([-0.8, -0.6, -0.4, -0.2], 4)
        assert g.labels.tolist() == [0, 1, 2, 3]
        np.testing.assert_allclose(g.thresholds, [-0.65, -0.5, -0.35])

    def test_b12_on_512(self):
        scores = -np.random.default_rng(1).random(512)
        g = regroup_reasoning(scores, 12)
        sizes = g.sizes()
        assert g.num_groups == 12 and np.all(sizes > 0)
        assert sizes.min() >= 42 and sizes.max() <= 43

    def test_top_group_closed(self):
        g = regroup_reasoning([0.0, 1.0, 2.0, 3.0, 4.0], 2)
        assert g.labels.tolist() == [0, 0, 1, 1, 1]

    def test_ties_merge_empty_groups(self):
        g = regroup_reasoning([-1.0] * 6 + [-0.5, -0.2], 4)
        assert g.degenerate
        assert np.all(g.sizes() > 0)
        assert g.num_groups < 4
        assert g.labels.tolist() == sorted(g.labels.tolist())

    def test_invalid_b(self):
        with pytest.raises(InvalidInputError):
            regroup_reasoning([0.1, 0.2], 3)
        with pytest.raises(InvalidInputError):
            regroup_reasoning([0.1, 0.2], 0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-10, 0), min_size=1, max_size=50, unique=True), st.integers(1, 16))
    def test_monotone_and_nonempty(self, scores, b):
        if b > len(scores):
            return
        s = np.array(scores)
        g = regroup_reasoning(s, b)
        order = np.argsort(s)
        assert np.all(np.diff(g.labels[order]) >= 0)
        assert np.all(g.sizes() > 0)
        assert g.labels.min() == 0 and g.labels.max() == g.num_groups - 1


def test_scores_csv(tmp_path):
    path = tmp_path / "scores.csv"
    write_scores_csv(path, [0.5, 1.23456789], "entropy")
    assert path.read_text() == "sample_id,entropy\n0,0.5\n1,1.23457\n"
