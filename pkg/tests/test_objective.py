import math

import numpy as np
import pytest

from durian.errors import InvalidInputError
from durian.objective import (
    ObjectiveConfig,
    PolicyEval,
    dapo_surrogate,
    dynamic_sampling_filter,
    grpo_surrogate,
    importance_ratios,
    kl_penalty,
    overlong_penalty,
    token_weights,
)

from fixtures import make_instance
from oracles import central_difference


def oracle_objective(ev, adv, low, high, beta, style, mask=None):
    """Scalar-loop transcription of the clipped objective with exact KL."""
    B, G = ev.shape
    M = np.ones((B, G), bool) if mask is None else np.asarray(mask, bool)
    if M.ndim == 1:
        M = np.repeat(M[:, None], G, axis=1)
    active = [s for s in range(B) if M[s].any()]
    total = 0.0
    for s in active:
        idx = [i for i in range(G) if M[s, i]]
        row_tokens = sum(ev.new_logprobs[s * G + i].size for i in idx)
        for i in idx:
            k = s * G + i
            L = ev.new_logprobs[k].size
            for t in range(L):
                r = math.exp(ev.new_logprobs[k][t] - ev.old_logprobs[k][t])
                a = adv[k][t]
                term = min(r * a, min(max(r, 1 - low), 1 + high) * a)
                if beta:
                    p = np.exp(ev.new_logdists[k][t])
                    q = ev.ref_probs[k][t]
                    term -= beta * sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)
                if style == "response-mean":
                    total += term / (len(active) * len(idx) * L)
                else:
                    total += term / (len(active) * row_tokens)
    return -total


def fd_check(ev, adv, fn, cfg, mask=None, rel=1e-5):
    res = fn(ev, adv, cfg, mask)
    lp_num = central_difference(lambda: fn(ev, adv, cfg, mask).loss, ev.new_logprobs)
    for k, g in enumerate(res.grad_logprobs):
        np.testing.assert_allclose(g, lp_num[k], rtol=rel, atol=1e-8)
    if res.grad_logdists is not None:
        ld_num = central_difference(lambda: fn(ev, adv, cfg, mask).loss, ev.new_logdists)
        for k, g in enumerate(res.grad_logdists):
            np.testing.assert_allclose(g, ld_num[k], rtol=rel, atol=1e-8)


class TestRatios:
    def test_identity_when_policies_match(self):
        ev = PolicyEval([[-0.5, -1.0]], [[-0.5, -1.0]], 1)
        np.testing.assert_array_equal(importance_ratios(ev)[0], [1.0, 1.0])

    def test_values(self):
        ev = PolicyEval([[math.log(0.6)]], [[math.log(0.5)]], 1)
        assert importance_ratios(ev)[0][0] == pytest.approx(1.2, abs=1e-12)

    def test_misaligned(self):
        with pytest.raises(InvalidInputError):
            PolicyEval([[0.0, 0.0]], [[0.0]], 1)
        with pytest.raises(InvalidInputError):
            PolicyEval([[0.0], [0.0], [0.0]], [[0.0], [0.0], [0.0]], 2)


class TestClipping:
    @staticmethod
    def single(ratio, a, cfg=ObjectiveConfig(beta=0.0), fn=grpo_surrogate):
        ev = PolicyEval([[math.log(ratio)]], [[0.0]], 1)
        return fn(ev, [np.array([a])], cfg)

    def test_positive_advantage_caps_at_upper(self):
        res = self.single(1.5, 1.0)
        assert res.loss == pytest.approx(-1.2, abs=1e-12)
        assert res.grad_logprobs[0][0] == 0.0

    def test_negative_advantage_caps_at_lower(self):
        res = self.single(0.5, -1.0)
        assert res.loss == pytest.approx(0.8, abs=1e-12)
        assert res.grad_logprobs[0][0] == 0.0

    def test_pessimistic_side_not_clipped(self):
        res = self.single(0.5, 1.0)
        assert res.loss == pytest.approx(-0.5, abs=1e-12)
        assert res.grad_logprobs[0][0] == pytest.approx(-0.5, abs=1e-12)

    def test_dapo_asymmetric_upper(self):
        res = self.single(1.5, 1.0, fn=dapo_surrogate, cfg=ObjectiveConfig())
        assert res.loss == pytest.approx(-1.28, abs=1e-12)

    def test_inside_trust_region(self):
        res = self.single(1.1, 2.0)
        assert res.loss == pytest.approx(-2.2, abs=1e-12)
        assert res.metrics["clip_frac"] == 0.0


class TestKL:
    def test_two_point_example(self):
        p = np.array([[0.5, 0.5]])
        q = np.array([[0.9, 0.1]])
        ev = PolicyEval([[math.log(0.5)]], [[math.log(0.5)]], 1, [np.log(p)], [q])
        expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
        assert expected == pytest.approx(0.5108, abs=1e-4)
        assert kl_penalty(ev) == pytest.approx(expected, abs=1e-12)

    def test_zero_when_equal_and_nonnegative(self):
        rng = np.random.default_rng(0)
        ev, _ = make_instance(rng)
        same = PolicyEval(ev.new_logprobs, ev.old_logprobs, ev.group_size, ev.new_logdists,
                          [np.exp(d) for d in ev.new_logdists])
        assert kl_penalty(same) == pytest.approx(0.0, abs=1e-14)
        assert kl_penalty(ev) > 0

    def test_unnormalized_reference(self):
        ev = PolicyEval([[0.0]], [[0.0]], 1, [np.log([[1.0, 1e-300]])], [np.array([[0.5, 0.4]])])
        with pytest.raises(InvalidInputError):
            kl_penalty(ev)


class TestSurrogateValues:
    @pytest.mark.parametrize("seed", range(5))
    def test_grpo_matches_oracle(self, seed):
        ev, adv = make_instance(np.random.default_rng(seed))
        cfg = ObjectiveConfig(beta=0.05)
        got = grpo_surrogate(ev, adv, cfg).loss
        assert got == pytest.approx(oracle_objective(ev, adv, 0.2, 0.2, 0.05, "response-mean"),
                                    rel=1e-12, abs=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_dapo_matches_oracle(self, seed):
        ev, adv = make_instance(np.random.default_rng(100 + seed))
        got = dapo_surrogate(ev, adv).loss
        assert got == pytest.approx(oracle_objective(ev, adv, 0.2, 0.28, 0.0, "token-mean"),
                                    rel=1e-12, abs=1e-14)

    def test_equal_lengths_grpo_equals_dapo(self):
        ev, adv = make_instance(np.random.default_rng(7), equal_lengths=True)
        cfg = ObjectiveConfig(eps=0.2, eps_low=0.2, eps_high=0.2, beta=0.0)
        assert grpo_surrogate(ev, adv, cfg).loss == pytest.approx(dapo_surrogate(ev, adv, cfg).loss,
                                                                  abs=1e-10)

    def test_masked_rows_contribute_nothing(self):
        ev, adv = make_instance(np.random.default_rng(3), B=3)
        mask = np.array([True, False, True])
        res = grpo_surrogate(ev, adv, ObjectiveConfig(beta=0.02), mask)
        G = ev.group_size
        for k in range(G, 2 * G):
            np.testing.assert_array_equal(res.grad_logprobs[k], 0.0)
            np.testing.assert_array_equal(res.grad_logdists[k], 0.0)
        # changing a masked row leaves the loss unchanged
        adv2 = [a.copy() for a in adv]
        adv2[G] += 100.0
        assert grpo_surrogate(ev, adv2, ObjectiveConfig(beta=0.02), mask).loss == res.loss
        assert res.loss == pytest.approx(
            oracle_objective(ev, adv, 0.2, 0.2, 0.02, "response-mean", mask), rel=1e-12)

    def test_all_masked_is_zero(self):
        ev, adv = make_instance(np.random.default_rng(4), B=2)
        res = dapo_surrogate(ev, adv, mask=[False, False])
        assert res.loss == 0.0
        assert np.all(token_weights(ev, [False, False], "token-mean") == 0)

    def test_token_weights_sum_to_one(self):
        ev, _ = make_instance(np.random.default_rng(5))
        L = ev.lengths
        for style in ("response-mean", "token-mean"):
            W = token_weights(ev, None, style)
            assert float((W * L).sum()) == pytest.approx(1.0, abs=1e-12)


class TestGradients:
    @pytest.mark.parametrize("seed", range(4))
    def test_grpo_finite_difference(self, seed):
        ev, adv = make_instance(np.random.default_rng(seed))
        fd_check(ev, adv, grpo_surrogate, ObjectiveConfig(beta=0.04))

    @pytest.mark.parametrize("seed", range(4))
    def test_dapo_finite_difference(self, seed):
        ev, adv = make_instance(np.random.default_rng(50 + seed))
        fd_check(ev, adv, dapo_surrogate, ObjectiveConfig())

    def test_masked_finite_difference(self):
        ev, adv = make_instance(np.random.default_rng(9))
        fd_check(ev, adv, grpo_surrogate, ObjectiveConfig(beta=0.1), mask=[True, False, True])

    def test_no_kl_gradient_without_beta(self):
        ev, adv = make_instance(np.random.default_rng(1))
        assert dapo_surrogate(ev, adv).grad_logdists is None
        assert grpo_surrogate(ev, adv, ObjectiveConfig(beta=0.0)).grad_logdists is None


class TestDynamicSampling:
    def test_masks_uniform_rows(self):
        keep, counts = dynamic_sampling_filter([[1, 1, 1], [0, 0, 0], [1, 0, 1], [0.1, 0.1, 0.1]])
        assert keep.tolist() == [False, False, True, False]
        assert counts == {"total": 4, "kept": 1, "masked": 3, "masked_frac": 0.75}

    def test_all_kept(self):
        keep, counts = dynamic_sampling_filter(np.eye(3))
        assert keep.all() and counts["masked"] == 0


class TestOverlong:
    def test_ramp(self):
        np.testing.assert_allclose(overlong_penalty([4, 8, 10, 12, 20], 8, 12),
                                   [0.0, 0.0, -0.5, -1.0, -1.0])

    def test_invalid_caps(self):
        with pytest.raises(InvalidInputError):
            overlong_penalty([1], 5, 5)
