"""Generators against their analytic ground truths."""

import math

import numpy as np
import pytest

from infobench import (
    CapacityError,
    Channel,
    EnvSpec,
    SymbolStream,
    UsageError,
    entropy,
    estimate_mi_from_samples,
    gen_hierarchical,
    gen_markov,
    gen_rule_exception,
    generate,
    mutual_information,
)
from infobench.env_gen import (
    confounded_lag1_correlation,
    env_ground_truth,
    rule_exception_ground_truth,
    stationary_distribution,
)


class TestRuleException:
    def test_no_exceptions(self):
        s = gen_rule_exception(0, 0.0, 4, 0.5, 5000, seed=1)
        assert (s.symbols == 0).all()

    def test_all_exceptions(self):
        s = gen_rule_exception(0, 1.0, 4, 0.0, 5000, seed=1)
        assert (s.symbols != 0).all()

    def test_binomial_count(self):
        n = 10_000
        s = gen_rule_exception(0, 0.05, 4, 0.5, n, seed=1)
        count = int((s.symbols != 0).sum())
        sigma = math.sqrt(n * 0.05 * 0.95)
        assert abs(count - n * 0.05) <= 3 * sigma

    def test_binomial_count_mean_over_seeds(self):
        # Level check: the mean count over several seeds sits within the
        # 3-sigma band of the averaged binomial.
        n = 10_000
        counts = [
            int((gen_rule_exception(0, 0.05, 4, 0.5, n, seed=s).symbols != 0).sum())
            for s in range(8)
        ]
        se = math.sqrt(n * 0.05 * 0.95 / len(counts))
        assert abs(np.mean(counts) - n * 0.05) <= 3 * se

    def test_context_modulation_matches_ground_truth(self):
        n = 200_000
        s = gen_rule_exception(0, 0.05, 4, 0.5, n, seed=5)
        _, rates = rule_exception_ground_truth(0.05, 4, 0.5)
        for c in range(4):
            mask = s.contexts == c
            emp = (s.symbols[mask] != 0).mean()
            assert abs(emp - rates[c]) < 0.01

    def test_global_rate_preserved_under_blocks(self):
        freqs, rates = rule_exception_ground_truth(0.05, 4, 0.5, [4, 3, 2, 1])
        assert float(freqs @ rates) == pytest.approx(0.05, abs=1e-12)

    def test_contexts_cycle_deterministically(self):
        s = gen_rule_exception(0, 0.1, 3, 0.2, 9, seed=0)
        np.testing.assert_array_equal(s.contexts, [0, 1, 2, 0, 1, 2, 0, 1, 2])

    def test_seed_determinism(self):
        a = gen_rule_exception(0, 0.05, 4, 0.5, 2000, seed=9)
        b = gen_rule_exception(0, 0.05, 4, 0.5, 2000, seed=9)
        np.testing.assert_array_equal(a.symbols, b.symbols)
        np.testing.assert_array_equal(a.contexts, b.contexts)

    def test_bad_rate(self):
        with pytest.raises(UsageError):
            gen_rule_exception(0, 1.5, 4, 0.5, 100, seed=0)


class TestMarkov:
    def test_identity_transition_is_constant(self):
        s = gen_markov(Channel.identity(3), 500, seed=2)
        assert len(set(s.symbols.tolist())) == 1

    def test_frequencies_match_stationary(self):
        t = Channel.from_array([[0.7, 0.3], [0.3, 0.7]])
        s = gen_markov(t, 100_000, seed=4)
        pi = stationary_distribution(t)
        for k in range(2):
            assert abs((s.symbols == k).mean() - pi[k]) < 0.01

    def test_contexts_are_previous_symbols(self):
        t = Channel.from_array([[0.5, 0.5], [0.5, 0.5]])
        s = gen_markov(t, 1000, seed=6)
        np.testing.assert_array_equal(s.contexts[1:], s.symbols[:-1])

    def test_non_square_rejected(self):
        with pytest.raises(UsageError):
            gen_markov(Channel.uniform(2, 3), 100, seed=0)

    def test_confounded_correlation_positive_with_no_direct_effect(self):
        th = Channel.from_array([[0.7344, 0.2656], [0.2656, 0.7344]])
        em = Channel.from_array([[0.9, 0.1], [0.1, 0.9]])
        s = gen_markov(th, 100_000, seed=8, confounder=em)
        assert s.metadata["direct_effect"] == 0.0
        analytic = s.metadata["lag1_correlation"]
        assert analytic == pytest.approx(0.30, abs=0.001)
        emp = np.corrcoef(s.symbols[:-1], s.symbols[1:])[0, 1]
        assert emp > 0.2
        assert abs(emp - analytic) < 0.02

    def test_analytic_lag1_against_two_state_formula(self):
        # Symmetric binary case: corr = (2e-1)^2 (2s-1).
        for stay, e in ((0.8, 0.95), (0.6, 0.7)):
            th = np.array([[stay, 1 - stay], [1 - stay, stay]])
            em = np.array([[e, 1 - e], [1 - e, e]])
            expected = (2 * e - 1) ** 2 * (2 * stay - 1)
            assert confounded_lag1_correlation(th, em) == pytest.approx(expected, abs=1e-12)

    def test_confounded_contexts_are_hidden_states(self):
        th = Channel.from_array([[0.9, 0.1], [0.2, 0.8]])
        em = Channel.from_array([[0.8, 0.2], [0.3, 0.7]])
        s = gen_markov(th, 50_000, seed=10, confounder=em)
        # Emission frequencies conditional on the recorded hidden state.
        for h in range(2):
            mask = s.contexts == h
            emp = (s.symbols[mask] == 0).mean()
            assert abs(emp - em.cond[h, 0]) < 0.02


class TestHierarchical:
    def test_lossless_cascade(self):
        _, joint = gen_hierarchical(3, 1.0, 0.0, length=1, seed=0)
        assert mutual_information(joint) == pytest.approx(
            entropy(joint.marginal_y()), abs=1e-12
        )
        assert entropy(joint.marginal_y()) == pytest.approx(1.0, abs=1e-12)

    def test_full_scramble_at_first_level(self):
        _, joint = gen_hierarchical(3, 1.0, [0.5, 0.0], length=1, seed=0)
        assert mutual_information(joint) <= 1e-9

    def test_monte_carlo_matches_exact_joint(self):
        stream, joint = gen_hierarchical(3, 1.0, 0.1, length=100_000, seed=7)
        exact = mutual_information(joint)
        pairs = np.stack([stream.symbols, stream.contexts], axis=1)
        est = estimate_mi_from_samples(pairs, "miller_madow", bootstrap_reps=400, seed=7)
        assert est.covers(exact)

    def test_empirical_cell_frequencies(self):
        stream, joint = gen_hierarchical(2, 1.0, 0.2, length=200_000, seed=8)
        emp = np.zeros_like(joint.px_y)
        for x, y in zip(stream.symbols, stream.contexts):
            emp[x, y] += 1
        emp /= emp.sum()
        np.testing.assert_allclose(emp, joint.px_y, atol=0.01)

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            gen_hierarchical(13, 1.0, 0.1, length=10, seed=0)

    def test_bad_noise_length(self):
        with pytest.raises(UsageError):
            gen_hierarchical(3, 1.0, [0.1, 0.1, 0.1], length=10, seed=0)

    def test_seed_determinism(self):
        a, _ = gen_hierarchical(3, 1.0, 0.1, length=500, seed=11)
        b, _ = gen_hierarchical(3, 1.0, 0.1, length=500, seed=11)
        np.testing.assert_array_equal(a.symbols, b.symbols)


class TestEnvSpec:
    def test_json_round_trip(self):
        spec = EnvSpec("rule_exception", {
            "exception_rate": 0.05, "context_count": 4,
            "context_shift": 0.5, "length": 100,
        }, seed=3)
        back = EnvSpec.from_json(spec.to_json())
        assert back == spec

    def test_unknown_kind(self):
        with pytest.raises(UsageError):
            EnvSpec("weather", {}, seed=0)

    def test_missing_params(self):
        with pytest.raises(UsageError):
            EnvSpec("rule_exception", {"exception_rate": 0.05}, seed=0)

    def test_probability_range_validated(self):
        with pytest.raises(UsageError):
            EnvSpec("rule_exception", {
                "exception_rate": 1.4, "context_count": 4,
                "context_shift": 0.5, "length": 100,
            }, seed=0)

    def test_generate_dispatch_deterministic(self):
        spec = EnvSpec("markov_plain", {
            "transition": [[0.7, 0.3], [0.3, 0.7]], "length": 1000,
        }, seed=5)
        a = generate(spec)
        b = generate(spec)
        np.testing.assert_array_equal(a.symbols, b.symbols)


class TestStreamText:
    def test_round_trip_with_contexts(self):
        s = gen_rule_exception(0, 0.2, 3, 0.4, 200, seed=12)
        back = SymbolStream.load_text(s.save_text())
        np.testing.assert_array_equal(back.symbols, s.symbols)
        np.testing.assert_array_equal(back.contexts, s.contexts)
        assert back.alphabet == s.alphabet
        assert back.metadata["kind"] == "rule_exception"

    def test_round_trip_without_contexts(self):
        s = SymbolStream(symbols=np.array([0, 1, 1, 0]), alphabet=2,
                         metadata={"kind": "manual", "seed": 1})
        back = SymbolStream.load_text(s.save_text())
        np.testing.assert_array_equal(back.symbols, s.symbols)
        assert back.contexts is None

    def test_header_required(self):
        with pytest.raises(UsageError):
            SymbolStream.load_text("0\n1\n")


class TestGroundTruthView:
    def test_rule_exception_joint_matches_stream_statistics(self):
        spec = EnvSpec("rule_exception", {
            "exception_rate": 0.05, "context_count": 4, "context_shift": 0.5,
            "context_blocks": [4, 3, 2, 1], "length": 300_000, "alphabet": 2,
        }, seed=20)
        gt = env_ground_truth(spec)
        stream = generate(spec)
        for c in range(4):
            mask = stream.contexts == c
            assert abs(mask.mean() - gt.context_freq[c]) < 0.01
            assert abs((stream.symbols[mask] != 0).mean() - gt.emission.cond[c, 1]) < 0.01

    def test_markov_ground_truth_is_transition(self):
        spec = EnvSpec("markov_plain", {
            "transition": [[0.7, 0.3], [0.3, 0.7]], "length": 10,
        }, seed=0)
        gt = env_ground_truth(spec)
        np.testing.assert_allclose(gt.emission.cond, [[0.7, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(gt.context_freq, [0.5, 0.5], atol=1e-12)

    def test_hierarchical_ground_truth_matches_joint(self):
        spec = EnvSpec("hierarchical", {
            "levels": 3, "branch_entropy": 1.0, "noise": 0.1, "length": 1,
        }, seed=0)
        gt = env_ground_truth(spec)
        _, joint = gen_hierarchical(3, 1.0, 0.1, length=1, seed=0)
        assert mutual_information(gt.joint()) == pytest.approx(
            mutual_information(joint), abs=1e-12
        )
