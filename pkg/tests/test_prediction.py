import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simossb.errors import CapabilityError, DimensionError, GridMismatchError, ParameterError
from simossb.prediction import (
    PredictionHistogram, bp_distance, ks_joint, ks_joint_monte_carlo, ks_marginal, tally)
from simossb.valuation import Valuation


def random_hist(rng, m, size, sparse=False):
    alpha = np.full(size, 0.3 if sparse else 1.0)
    return PredictionHistogram(rng.dirichlet(alpha, size=m))


hist_params = st.tuples(st.integers(1, 3), st.integers(1, 8), st.integers(0, 2**32 - 1))


def brute_bundle_probs(pred, b):
    """Enumerate every grid price vector and record the won bundle."""
    m, size = pred.masses.shape
    out = np.zeros(1 << m)
    for q in itertools.product(range(size), repeat=m):
        p = np.prod([pred.masses[j, q[j]] for j in range(m)])
        mask = sum(1 << j for j in range(m) if b[j] > q[j])
        out[mask] += p
    return out


class TestCdf:
    def test_above_grid(self):
        pred = PredictionHistogram(np.random.default_rng(0).dirichlet(np.ones(11), size=2))
        assert pred.cdf([10, 10]) == 1.0
        assert pred.cdf([10.5, 400]) == 1.0

    def test_negative(self):
        assert PredictionHistogram.uniform(2, 10).cdf([-0.5, 10]) == 0.0

    def test_point_mass_below(self):
        pred = PredictionHistogram.point_mass([3, 3], 10)
        assert pred.cdf([3, 2]) == 0.0
        assert pred.cdf([3, 3.7]) == 1.0

    def test_dimension(self):
        with pytest.raises(DimensionError):
            PredictionHistogram.uniform(2, 10).cdf([1, 2, 3])

    def test_invariants(self, rng):
        pred = random_hist(rng, 3, 20)
        assert np.allclose(pred.masses.sum(axis=1), 1, atol=1e-9)
        assert np.all(np.diff(pred.cum, axis=1) >= -1e-15)
        assert np.all(pred.cum[:, -1] == 1.0)


class TestSampling:
    def test_point_mass_samples(self, rng):
        pred = PredictionHistogram.point_mass([2, 7, 0], 10)
        assert np.all(pred.sample(rng, 100) == [2, 7, 0])

    def test_sample_mean_clt(self):
        rng = np.random.default_rng(11)
        pred = random_hist(rng, 3, 30)
        n = 100_000
        draws = pred.sample(rng, n)
        sd = np.sqrt(pred.variances() / n)
        assert np.all(np.abs(draws.mean(axis=0) - pred.expected_point()) < 3 * sd + 1e-12)

    def test_equal_seeds_equal_streams(self):
        pred = random_hist(np.random.default_rng(1), 2, 10)
        a = pred.sample(np.random.default_rng(5), 50)
        b = pred.sample(np.random.default_rng(5), 50)
        assert np.array_equal(a, b)

    def test_inverse_cdf_frequencies(self, rng):
        pred = PredictionHistogram(np.array([[0.2, 0.0, 0.5, 0.3]]))
        draws = pred.sample(rng, 40_000)[:, 0]
        freq = np.bincount(draws, minlength=4) / 40_000
        assert freq[1] == 0
        assert np.allclose(freq, pred.masses[0], atol=0.01)


class TestPoints:
    def test_uniform_mean(self):
        assert np.allclose(PredictionHistogram.uniform(2, 10).expected_point(), [5.0, 5.0])

    def test_point_mass_mean(self):
        assert PredictionHistogram.point_mass([7], 10).expected_point()[0] == 7

    def test_two_point_mean(self):
        masses = np.zeros((1, 11))
        masses[0, [0, 10]] = 0.5
        assert PredictionHistogram(masses).expected_point()[0] == 5

    def test_sampled_point_point_mass(self, rng):
        assert np.all(PredictionHistogram.point_mass([4, 1], 9).sampled_point(17, rng) == [4, 1])

    def test_sampled_point_converges(self):
        rng = np.random.default_rng(2)
        pred = random_hist(rng, 2, 40)
        k = 10_000
        est = pred.sampled_point(k, rng)
        assert np.all(np.abs(est - pred.expected_point()) < 3 * np.sqrt(pred.variances() / k))

    def test_sampled_point_single_is_a_sample(self):
        pred = random_hist(np.random.default_rng(3), 3, 10)
        assert np.array_equal(pred.sampled_point(1, np.random.default_rng(9)),
                              pred.sample(np.random.default_rng(9), 1)[0])

    def test_sampled_point_needs_samples(self, rng):
        with pytest.raises(ParameterError):
            PredictionHistogram.uniform(1, 5).sampled_point(0, rng)


class TestDistances:
    def test_ks_identity(self, rng):
        f = random_hist(rng, 3, 12)
        assert ks_marginal(f, f) == 0 and ks_joint(f, f) == 0

    def test_ks_extreme(self):
        assert ks_marginal(PredictionHistogram.point_mass([0], 20), PredictionHistogram.point_mass([20], 20)) == 1

    @given(hist_params)
    def test_ks_symmetry_and_triangle(self, params):
        m, size, seed = params
        rng = np.random.default_rng(seed)
        f, g, h = (random_hist(rng, m, size, sparse=True) for _ in range(3))
        for dist in (ks_marginal, ks_joint):
            assert dist(f, g) == pytest.approx(dist(g, f), abs=1e-15)
            assert dist(f, h) <= dist(f, g) + dist(g, h) + 1e-12
            assert 0 <= dist(f, g) <= 1 + 1e-12

    def test_ks_joint_one_good_reduces(self, rng):
        f, g = random_hist(rng, 1, 15), random_hist(rng, 1, 15)
        cf, cg = np.cumsum(f.masses[0]), np.cumsum(g.masses[0])
        assert ks_joint(f, g) == pytest.approx(np.max(np.abs(cf - cg)))

    def test_ks_joint_double_loop(self, rng):
        f, g = random_hist(rng, 2, 9), random_hist(rng, 2, 9)
        best = 0.0
        for x in range(9):
            for y in range(9):
                pf = f.masses[0, :x + 1].sum() * f.masses[1, :y + 1].sum()
                pg = g.masses[0, :x + 1].sum() * g.masses[1, :y + 1].sum()
                best = max(best, abs(pf - pg))
        assert ks_joint(f, g) == pytest.approx(best, abs=1e-14)

    def test_ks_joint_zero_iff_marginals_equal(self, rng):
        f = random_hist(rng, 2, 6)
        g = PredictionHistogram(np.vstack([f.masses[0], rng.dirichlet(np.ones(6))]))
        assert ks_joint(f, PredictionHistogram(f.masses.copy())) == 0
        assert ks_joint(f, g) > 0

    def test_ks_joint_capability(self):
        f = PredictionHistogram.uniform(5, 3)
        with pytest.raises(CapabilityError):
            ks_joint(f, f)

    def test_ks_joint_monte_carlo_lower_bound(self, rng):
        f, g = random_hist(rng, 3, 8), random_hist(rng, 3, 8)
        approx = ks_joint_monte_carlo(f, g, 2000, rng)
        assert approx <= ks_joint(f, g) + 1e-12
        assert approx > 0.5 * ks_joint(f, g)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            ks_marginal(PredictionHistogram.uniform(2, 5), PredictionHistogram.uniform(2, 6))

    def test_bp_examples(self, rng):
        f, g = random_hist(rng, 3, 10), random_hist(rng, 3, 10)
        assert bp_distance(f, f, [3, 4, 5]) == 0
        assert bp_distance(f, g, [0, 0, 0]) == 0
        low = PredictionHistogram.point_mass([1, 1], 10)
        high = PredictionHistogram.point_mass([8, 8], 10)
        assert bp_distance(low, high, [5, 5]) == 1

    def test_bp_capability(self):
        f = PredictionHistogram.uniform(7, 2)
        with pytest.raises(CapabilityError):
            bp_distance(f, f, np.zeros(7))


class TestBundleProbabilities:
    def test_zero_bid(self, rng):
        pred = random_hist(rng, 3, 10)
        assert pred.bundle_prob([0, 0, 0], set()) == 1.0

    def test_bid_above_grid(self, rng):
        pred = random_hist(rng, 3, 10)
        assert pred.bundle_prob([10.5, 11, 99], {0, 1, 2}) == pytest.approx(1.0)

    @given(hist_params, st.lists(st.floats(0, 12, allow_nan=False), min_size=3, max_size=3))
    def test_matches_enumeration_and_sums_to_one(self, params, bids):
        m, size, seed = params
        pred = random_hist(np.random.default_rng(seed), m, size, sparse=True)
        b = np.array(bids[:m])
        probs = pred.bundle_probabilities(b)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(probs, brute_bundle_probs(pred, b), atol=1e-12)

    def test_expected_payment_and_utility(self, rng):
        pred = random_hist(rng, 2, 7)
        v = Valuation(np.array([0.0, 4.0, 3.0, 9.0]), vbar=9)
        b = np.array([3.5, 6.0])
        pay = util = 0.0
        for q in itertools.product(range(7), repeat=2):
            p = pred.masses[0, q[0]] * pred.masses[1, q[1]]
            won = [j for j in range(2) if b[j] > q[j]]
            paid = sum(q[j] for j in won)
            pay += p * paid
            util += p * (v(won) - paid)
        assert pred.expected_payment(b) == pytest.approx(pay)
        assert pred.expected_utility(v, b) == pytest.approx(util)


class TestBlend:
    def test_endpoints_exact(self, rng):
        f, g = random_hist(rng, 2, 9), random_hist(rng, 2, 9)
        assert np.array_equal(f.blend(g, 1.0).masses, g.masses)
        assert np.array_equal(f.blend(g, 0.0).masses, f.masses)

    def test_normalized(self, rng):
        f, g = random_hist(rng, 3, 9), random_hist(rng, 3, 9)
        mid = f.blend(g, 0.37)
        assert np.allclose(mid.masses.sum(axis=1), 1, atol=1e-12)
        assert np.allclose(mid.masses, 0.37 * g.masses + 0.63 * f.masses)

    def test_kappa_range(self, rng):
        f = random_hist(rng, 1, 4)
        with pytest.raises(ParameterError):
            f.blend(f, 1.5)


class TestSerialization:
    def test_roundtrip_exact(self, rng, tmp_path):
        pred = PredictionHistogram(rng.dirichlet(np.ones(51), size=3), statistic="price",
                                   environment="U[3,3]", metadata={"strategy": "X", "G": 10})
        path = tmp_path / "p.json"
        pred.save(path)
        back = PredictionHistogram.load(path)
        assert np.array_equal(back.masses, pred.masses)
        assert back.statistic == "price" and back.environment == "U[3,3]"
        assert back.metadata == {"strategy": "X", "G": 10}
        assert back.dumps() == pred.dumps()
        doc = json.loads(pred.dumps())
        assert doc["grid_size"] == 51

    def test_rejects_foreign_document(self):
        with pytest.raises(ParameterError):
            PredictionHistogram.from_dict({"format": "other"})


def test_tally_counts_and_clips():
    counts = tally(np.array([[0, 5], [2, 9], [2, -1]]), 4)
    assert counts.tolist() == [[1, 0, 2, 0, 0], [1, 0, 0, 0, 2]]


def test_bound_inequalities_spot(rng):
    """Payment, value and utility gaps are controlled by KS and BP distances."""
    for _ in range(200):
        m = int(rng.integers(1, 4))
        f, g = random_hist(rng, m, 11, sparse=True), random_hist(rng, m, 11, sparse=True)
        table = rng.integers(0, 50, 1 << m).astype(float)
        table[0] = 0
        v = Valuation(_monotone(table, m), vbar=50)
        b = rng.uniform(0, 12, m)
        ks, bp = ks_joint(f, g), bp_distance(f, g, b)
        l1 = np.abs(b).sum()
        assert f.expected_payment(b) <= g.expected_payment(b) + 2 * ks * l1 + 1e-9
        assert f.expected_value(v, b) >= g.expected_value(v, b) - bp * v.vbar - 1e-9
        assert f.expected_utility(v, b) >= g.expected_utility(v, b) - bp * v.vbar - 2 * ks * l1 - 1e-9


def _monotone(table, m):
    out = table.copy()
    for mask in range(1 << m):
        for j in range(m):
            if mask >> j & 1:
                out[mask] = max(out[mask], out[mask ^ (1 << j)])
    return out
