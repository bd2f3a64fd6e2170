import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simossb.egta import (
    EmpiricalGame, PayoffStat, Profile, all_profiles, bootstrap_regret_bound, expected_payoff, mixed_regret,
    ne_regret, regret, replicator_solve, simulate_profile, solve)
from simossb.environment import Environment
from simossb.errors import IncompleteGameError, ParameterError, SpecParseError


def matrix_game(u, names=("A", "B"), var=0.0, count=100):
    """Two-player symmetric game from ``u[i][j]`` = payoff of ``names[i]`` against ``names[j]``."""
    game = EmpiricalGame(2, names)
    for i, j in itertools.combinations_with_replacement(range(len(names)), 2):
        stats = {names[i]: PayoffStat(float(u[i][j]), var, count),
                 names[j]: PayoffStat(float(u[j][i]), var, count)}
        game.add(Profile.of([names[i], names[j]]), stats)
    return game


PRISONER = [[2, 0], [3, 1]]
HAWK_DOVE = [[-1, 4], [0, 2]]  # H, D; mixed equilibrium at p_H = 2/3


class TestProfiles:
    def test_canonical(self):
        assert Profile.of(["B", "A", "B"]) == Profile.parse("B|B|A")
        assert str(Profile.of(["B", "A"])) == "A|B"
        assert Profile.from_counts({"A": 2, "B": 1}).counts == {"A": 2, "B": 1}

    def test_all_profiles(self):
        assert len(all_profiles(["a", "b", "c"], 3)) == 10

    def test_pooled_merge(self, rng):
        x = rng.normal(size=40)
        a = PayoffStat(x[:15].mean(), x[:15].var(ddof=1), 15)
        b = PayoffStat(x[15:].mean(), x[15:].var(ddof=1), 25)
        c = a.merge(b)
        assert c.count == 40
        assert c.mean == pytest.approx(x.mean()) and c.variance == pytest.approx(x.var(ddof=1))


class TestRegret:
    def test_matrix_examples(self):
        game = matrix_game(PRISONER)
        assert regret(game, Profile.of("AA")) == 1
        assert regret(game, Profile.of("BB")) == 0

    def test_ne_regret_pure(self):
        game = matrix_game(PRISONER)
        assert ne_regret(game, {"B": 1.0}, "A") == 1
        assert ne_regret(game, {"B": 1.0}, "B") == 0

    def test_missing_deviations_listed(self):
        game = EmpiricalGame(2)
        game.add(Profile.of("AA"), {"A": PayoffStat(1, 0, 5)})
        game.strategies.append("B")
        with pytest.raises(IncompleteGameError) as info:
            regret(game, Profile.of("AA"))
        assert info.value.missing == [Profile.of("AB")]

    @given(st.lists(st.floats(-10, 10), min_size=9, max_size=9))
    def test_regret_nonnegative_and_symmetric(self, values):
        u = np.array(values).reshape(3, 3)
        game = matrix_game(u.tolist(), names=("a", "b", "c"))
        for profile in game.profiles():
            r = regret(game, profile)
            assert r >= 0
            reordered = Profile.of(list(reversed(profile.strategies)))
            assert regret(game, reordered) == r

    def test_mixed_payoff_reduces_to_lookup(self):
        game = matrix_game([[1, 2, 3], [4, 5, 6], [7, 8, 9]], names=("a", "b", "c"))
        for s, t in itertools.product("abc", repeat=2):
            assert expected_payoff(game, s, {t: 1.0}) == game.payoff(s, Profile.of([s, t]))

    def test_three_player_expansion(self, rng):
        names = ("a", "b")
        game = EmpiricalGame(3, names)
        table = {}
        for prof in all_profiles(names, 3):
            stats = {s: PayoffStat(float(rng.normal()), 0.0, 3) for s in prof.counts}
            table[prof] = stats
            game.add(prof, stats)
        x = {"a": 0.3, "b": 0.7}
        for s in names:
            brute = 0.0
            for opp in itertools.product(names, repeat=2):
                w = np.prod([x[o] for o in opp])
                brute += w * table[Profile.of(list(opp) + [s])][s].mean
            assert expected_payoff(game, s, x) == pytest.approx(brute)


class TestReplicator:
    def test_recovers_interior_equilibrium(self):
        game = matrix_game(HAWK_DOVE, names=("H", "D"))
        eqs = replicator_solve(game, ["D", "H"], rng=np.random.default_rng(0))
        assert len(eqs) == 1
        assert eqs[0]["H"] == pytest.approx(2 / 3, abs=1e-3)
        assert mixed_regret(game, eqs[0]) <= 1e-6
        assert all(abs(ne_regret(game, eqs[0], s)) <= 1e-6 for s in ("H", "D"))

    def test_dominant_strategy(self):
        game = matrix_game(PRISONER)
        eqs = replicator_solve(game, ["A", "B"], rng=np.random.default_rng(0))
        assert len(eqs) == 1 and eqs[0] == {"B": 1.0}

    def test_confirmation_against_all_strategies(self):
        game = matrix_game(HAWK_DOVE, names=("H", "D"))
        reports = solve(game, rng=np.random.default_rng(1))
        confirmed = [r for r in reports if r.confirmed]
        assert len(confirmed) == 1 and confirmed[0].mixture["H"] == pytest.approx(2 / 3, abs=1e-6)
        refuted = [r for r in reports if not r.confirmed]
        assert {tuple(r.mixture) for r in refuted} == {("H",), ("D",)}
        assert all(r.regret > 0.5 for r in refuted)

    def test_exact_equilibrium_ne_regret_nonnegative(self):
        game = matrix_game([[1, 0, 0], [0, 1, 0], [0, 0, 1]], names=("a", "b", "c"))
        for report in solve(game, rng=np.random.default_rng(2)):
            if report.confirmed:
                assert all(v >= -1e-6 for v in report.ne_regrets.values())


class TestBootstrap:
    def test_zero_variance_equals_point_regret(self):
        game = matrix_game(PRISONER, var=0.0, count=10)
        eq = {"A": 1.0}
        assert bootstrap_regret_bound(game, eq, 200, 0.9, np.random.default_rng(0)) == pytest.approx(
            mixed_regret(game, eq))

    def test_median_quantile(self):
        game = matrix_game(HAWK_DOVE, names=("H", "D"), var=4.0, count=50)
        eq = {"H": 2 / 3, "D": 1 / 3}
        rng = np.random.default_rng(3)
        med = bootstrap_regret_bound(game, eq, 4000, 0.5, rng)
        q90 = bootstrap_regret_bound(game, eq, 4000, 0.9, rng)
        assert 0 < med < q90

    def test_shrinks_with_sample_count(self):
        eq = {"H": 2 / 3, "D": 1 / 3}
        bounds = [bootstrap_regret_bound(matrix_game(HAWK_DOVE, names=("H", "D"), var=9.0, count=c), eq, 2000,
                                         0.9, np.random.default_rng(4)) for c in (10, 100, 1000, 10_000)]
        assert all(a >= b for a, b in zip(bounds, bounds[1:]))

    def test_needs_two_samples(self):
        game = matrix_game(PRISONER, count=1)
        with pytest.raises(ParameterError):
            bootstrap_regret_bound(game, {"A": 1.0}, 10, 0.9)


class TestSimulation:
    def test_zero_bids(self):
        # every good still goes to a random bidder, at price zero
        env = Environment("U", 1, 3)
        stats = simulate_profile(["ZeroBid"] * 3, env, 30_000, seed=1)["ZeroBid"]
        assert stats.count == 90_000
        expected = 25.5 / 3  # one free good worth U{1..50} spread over three agents
        assert abs(stats.mean - expected) < 4 * np.sqrt(stats.variance / 90_000)

    def test_zero_bids_pay_nothing(self):
        from simossb.simulation import Plan, play
        from simossb.streams import InstanceStream
        from simossb.strategies import build_strategy
        env = Environment("U", 2, 3)
        zero = build_strategy("ZeroBid", m=2)
        plan = Plan(env, [zero] * 3)
        out = play(plan, InstanceStream(0, "z", width=plan.width).block(0, 100))
        assert np.all(out.prices == 0)
        assert np.all(out.utilities() >= 0)

    def test_truthful_single_good(self):
        env = Environment("U", 1, 2)
        stats = simulate_profile(["StraightMV(pred=uniform)"] * 2, env, 40_000, seed=2,
                                 resolver=_resolver(env))["StraightMV(pred=uniform)"]
        values = np.arange(1, 51)
        expected = np.maximum(values[:, None] - values[None, :], 0).mean()
        sd = np.sqrt(stats.variance / 40_000)
        assert abs(stats.mean - expected) < 4 * sd

    def test_deterministic(self):
        env = Environment("U", 2, 3)
        profile = ["ZeroBid", "StraightMV(pred=uniform)", "StraightMV(pred=uniform)"]
        a = simulate_profile(profile, env, 700, seed=3, resolver=_resolver(env))
        b = simulate_profile(profile, env, 700, seed=3, resolver=_resolver(env), workers=2)
        assert a == b

    def test_unknown_strategy(self):
        with pytest.raises(SpecParseError):
            simulate_profile(["Mystery", "ZeroBid"], Environment("U", 1, 2), 10)

    def test_needs_instances(self):
        with pytest.raises(ParameterError):
            simulate_profile(["ZeroBid"] * 2, Environment("U", 1, 2), 0)


def _resolver(env):
    from simossb.strategies import PredictionResolver
    return PredictionResolver([], env.m, env.price_max)


def test_csv_roundtrip():
    game = matrix_game(HAWK_DOVE, names=("H", "D"), var=1.5, count=30)
    text = game.to_csv(["config_sha256: abc", "seed: 1"])
    assert text.startswith("# config_sha256: abc\n# seed: 1\nprofile,strategy,")
    back = EmpiricalGame.from_csv(text)
    assert back.table == game.table and back.n == 2
    assert back.to_csv(["config_sha256: abc", "seed: 1"]) == text
