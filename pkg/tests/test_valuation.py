import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simossb.errors import CapabilityError, ParameterError
from simossb.valuation import (
    MAX_ENUMERATION_GOODS, Valuation, acquire, additive_valuation, as_mask, completion_time,
    homogeneous_valuation, mask_to_bundle, marginal_value_at_prices, marginal_value_bundle,
    prune_completion_values, sample_homogeneous_valuation, sample_scheduling_valuation,
    scheduling_valuation, surplus)


def subsets(m):
    for r in range(m + 1):
        yield from (frozenset(c) for c in itertools.combinations(range(m), r))


def direct_completion_time(bundle, lam):
    # earliest 1-based time t with lam slots among goods 0..t-1
    have = 0
    for t in range(1, 64):
        have += (t - 1) in bundle
        if have >= lam:
            return t
    return math.inf


def brute_acquire(v, p):
    best = None
    for x in subsets(v.m):
        s = v(x) - sum(p[j] for j in x)
        if best is None or s > best[1] + 1e-12:
            best = (x, s)
    return best


class TestCompletionTime:
    def test_second_slot(self):
        assert completion_time({0, 2}, 2) == 3

    def test_too_few_slots(self):
        assert completion_time({0, 2}, 3, m=3) == math.inf

    def test_single_slot(self):
        assert completion_time({1}, 1) == 2

    def test_lambda_out_of_range(self):
        with pytest.raises(ParameterError):
            completion_time({0}, 0, m=3)
        with pytest.raises(ParameterError):
            completion_time({0}, 4, m=3)

    @given(st.sets(st.integers(0, 5)), st.integers(1, 6))
    def test_matches_direct_scan(self, bundle, lam):
        assert completion_time(bundle, lam, m=6) == direct_completion_time(bundle, lam)


class TestScheduling:
    def test_pruning_example(self):
        assert list(prune_completion_values([10, 40, 20])) == [40, 40, 20]

    def test_pruning_identity_on_monotone(self):
        assert list(prune_completion_values([40, 30, 30, 5])) == [40, 30, 30, 5]

    @given(st.integers(1, 4), st.lists(st.integers(1, 50), min_size=4, max_size=4))
    def test_table_matches_definition(self, lam, raw):
        m = 4
        values = prune_completion_values(raw)
        v = scheduling_valuation(lam, values)
        for x in subsets(m):
            t = direct_completion_time(x, lam)
            assert v(x) == (0 if t == math.inf else values[t - 1])
            if len(x) < lam:
                assert v(x) == 0

    def test_samples_are_free_disposal_and_bounded(self, rng):
        for m in range(1, 7):
            for _ in range(30):
                v = sample_scheduling_valuation(m, rng)
                assert v.satisfies_free_disposal()
                assert v(frozenset()) == 0
                assert 0 <= v.table.min() and v.table.max() <= v.vbar
                assert np.all(np.diff(v.completion_values) <= 0)

    def test_lambda_uniform(self):
        # chi-square against uniform over {1..m}
        rng = np.random.default_rng(7)
        m, n = 4, 100_000
        from simossb.environment import Environment
        env = Environment("U", m, 2)
        u = rng.random((n, env.valuation_demand))
        lam = np.floor(u[:, 0] * m).astype(int) + 1
        tables = env.tables_from_uniforms(u)
        # lambda is recoverable as the smallest bundle size with positive value
        sizes = np.array([bin(k).count("1") for k in range(1 << m)])
        inferred = np.array([sizes[t > 0].min() for t in tables])
        assert np.array_equal(inferred, lam)
        counts = np.bincount(lam, minlength=m + 1)[1:]
        expected = n / m
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 16.27  # 99.9% quantile, 3 dof

    def test_completion_values_uniform_range(self, rng):
        vals = np.array([sample_scheduling_valuation(1, rng).completion_values[0] for _ in range(4000)])
        assert vals.min() >= 1 and vals.max() <= 50
        assert abs(vals.mean() - 25.5) < 3 * math.sqrt((50 ** 2 - 1) / 12 / 4000)


class TestHomogeneous:
    def test_zero_first_marginal_forces_zero(self):
        from simossb.valuation import homogeneous_from_uniforms
        u = np.array([[0.001, 0.9, 0.99]])
        assert np.all(homogeneous_from_uniforms(u) == 0)

    def test_two_good_bundle(self):
        v = homogeneous_valuation([10, 5, 2])
        assert v({0, 2}) == 15 and v({1}) == 10 and v({0, 1, 2}) == 17

    def test_mean_first_marginal(self):
        rng = np.random.default_rng(3)
        n = 100_000
        from simossb.environment import Environment
        env = Environment("H", 1, 2)
        first = env.tables_from_uniforms(rng.random((n, 1)))[:, 1]
        sd = math.sqrt((128 ** 2 - 1) / 12 / n)
        assert abs(first.mean() - 63.5) < 3 * sd
        assert first.min() == 0 and first.max() == 127

    def test_samples_depend_on_size_and_are_concave(self, rng):
        for m in range(1, 6):
            for _ in range(30):
                v = sample_homogeneous_valuation(m, rng)
                by_size = {}
                for x in subsets(m):
                    by_size.setdefault(len(x), set()).add(v(x))
                assert all(len(s) == 1 for s in by_size.values())
                assert np.all(np.diff(v.marginals) <= 0)
                assert v.satisfies_free_disposal()

    def test_rejects_increasing_marginals(self):
        with pytest.raises(ParameterError):
            homogeneous_valuation([3, 5])


class TestSurplusAndAcquire:
    def test_surplus_examples(self):
        v = additive_valuation([12, 8, 1])
        assert surplus(v, {0, 1}, [3, 4, 100]) == 13
        assert surplus(v, set(), [3, 4, 100]) == 0
        v5 = Valuation(np.array([0.0, 5.0]), vbar=5)
        assert surplus(v5, {0}, [9]) == -4

    def test_unaffordable_prices(self):
        v = scheduling_valuation(2, [30, 30, 10])
        assert acquire(v, [51, 51, 51]) == (frozenset(), 0.0)

    def test_free_prices_reach_vbar(self, rng):
        for _ in range(20):
            v = sample_homogeneous_valuation(3, rng)
            assert acquire(v, [0, 0, 0])[1] == v.table.max()

    def test_desk_instance_matches_enumeration(self):
        v = scheduling_valuation(2, [30, 30, 10])
        bundle, value = acquire(v, [5, 5, 25])
        ref = brute_acquire(v, [5, 5, 25])
        assert value == ref[1] == 20
        assert bundle == ref[0] == frozenset({0, 1})

    def test_tie_breaks_to_smallest_mask(self):
        v = additive_valuation([5, 5])
        bundle, value = acquire(v, [5, 5])
        assert bundle == frozenset() and value == 0

    def test_capability_limit(self):
        with pytest.raises(CapabilityError):
            acquire(additive_valuation([1.0] * (MAX_ENUMERATION_GOODS + 1)), [0.0] * (MAX_ENUMERATION_GOODS + 1))

    @given(st.lists(st.integers(0, 60), min_size=3, max_size=3), st.integers(1, 3),
           st.lists(st.integers(1, 50), min_size=3, max_size=3), st.integers(0, 2), st.integers(0, 20))
    def test_sigma_monotone_and_nonnegative(self, p, lam, raw, j, bump):
        v = scheduling_valuation(lam, prune_completion_values(raw))
        _, s = acquire(v, p)
        q = list(p)
        q[j] += bump
        _, s2 = acquire(v, q)
        assert s >= 0 and s2 <= s
        assert s == pytest.approx(brute_acquire(v, p)[1])


class TestMarginalValues:
    def test_additive_bundle_marginal(self):
        v = additive_valuation([3, 7, 2])
        for x in subsets(3):
            for j in set(range(3)) - x:
                assert marginal_value_bundle(v, j, x) == [3, 7, 2][j]

    def test_complementarity_empty_bundle(self):
        v = scheduling_valuation(2, [30, 30, 10])
        assert all(marginal_value_bundle(v, j, set()) == 0 for j in range(3))

    def test_homogeneous_kth_marginal(self):
        v = homogeneous_valuation([10, 5, 2])
        assert marginal_value_bundle(v, 2, {0}) == 5
        assert marginal_value_bundle(v, 0, {1, 2}) == 2

    def test_member_good_rejected(self):
        with pytest.raises(ParameterError):
            marginal_value_bundle(additive_valuation([1, 2]), 0, {0})

    def test_other_prices_infinite_reduces_to_empty_bundle(self, rng):
        for _ in range(30):
            v = sample_scheduling_valuation(3, rng)
            for j in range(3):
                p = [v.vbar + 1] * 3
                assert marginal_value_at_prices(v, j, p) == marginal_value_bundle(v, j, set())

    def test_other_prices_zero_reduces_to_rest_bundle(self, rng):
        for _ in range(30):
            v = sample_homogeneous_valuation(3, rng)
            for j in range(3):
                rest = set(range(3)) - {j}
                assert marginal_value_at_prices(v, j, [0, 0, 0]) == marginal_value_bundle(v, j, rest)

    def test_random_instances_match_restricted_enumeration(self, rng):
        for _ in range(40):
            v = sample_scheduling_valuation(3, rng)
            p = rng.integers(0, 50, 3).astype(float)
            for j in range(3):
                with_j = max(v(x) - sum(p[i] for i in x if i != j) for x in subsets(3))
                without_j = max(v(x) - sum(p[i] for i in x) for x in subsets(3) if j not in x)
                mu = marginal_value_at_prices(v, j, p)
                assert mu == pytest.approx(with_j - without_j)
                assert 0 <= mu <= v.vbar


def test_mask_roundtrip():
    for mask in range(64):
        assert as_mask(mask_to_bundle(mask)) == mask
