"""Empirical game-theoretic analysis of symmetric games.

Payoffs are keyed by profile, a multiset of strategy names.  A mixed
profile is a dict from strategy name to probability.  Expected payoffs
against a mixture are computed exactly by expanding over the multinomial
distribution of opponent profiles.
"""
from __future__ import annotations

import csv
import functools
import io
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .environment import Environment
from .errors import IncompleteGameError, ParameterError
from .simulation import Plan, map_blocks
from .strategies import build_strategy, parse_spec

PROFILE_SEP = "|"


@dataclass(frozen=True, order=True)
class Profile:
    """Sorted tuple of strategy names, one entry per player."""

    strategies: tuple

    @classmethod
    def of(cls, strategies: Iterable[str]) -> "Profile":
        return cls(tuple(sorted(strategies)))

    @classmethod
    def from_counts(cls, counts: dict) -> "Profile":
        return cls.of(s for s, c in counts.items() for _ in range(c))

    @classmethod
    def parse(cls, text: str) -> "Profile":
        return cls.of(text.split(PROFILE_SEP))

    @property
    def n(self) -> int:
        return len(self.strategies)

    @property
    def counts(self) -> Counter:
        return Counter(self.strategies)

    def deviate(self, old: str, new: str) -> "Profile":
        items = list(self.strategies)
        items.remove(old)
        return Profile.of(items + [new])

    def __str__(self):
        return PROFILE_SEP.join(self.strategies)


@dataclass
class PayoffStat:
    mean: float
    variance: float
    count: int
    seed_range: str = ""

    def merge(self, other: "PayoffStat") -> "PayoffStat":
        n = self.count + other.count
        mean = (self.count * self.mean + other.count * other.mean) / n
        ss = ((self.count - 1) * self.variance + (other.count - 1) * other.variance
              + self.count * (self.mean - mean) ** 2 + other.count * (other.mean - mean) ** 2)
        ranges = ",".join(r for r in (self.seed_range, other.seed_range) if r)
        return PayoffStat(mean, ss / (n - 1) if n > 1 else 0.0, n, ranges)


class EmpiricalGame:
    """Symmetric payoff table ``profile -> {strategy: PayoffStat}``."""

    def __init__(self, n: int, strategies: Sequence[str] = ()):
        self.n = n
        self.strategies: list = list(strategies)
        self.table: dict = {}

    def add(self, profile: Profile, stats: dict) -> None:
        if profile.n != self.n:
            raise ParameterError(f"profile {profile} has {profile.n} players, game has {self.n}")
        for s in profile.counts:
            if s not in stats:
                raise ParameterError(f"no payoff for {s} in {profile}")
            if s not in self.strategies:
                self.strategies.append(s)
        entry = self.table.setdefault(profile, {})
        for s, stat in stats.items():
            entry[s] = entry[s].merge(stat) if s in entry else stat

    def has(self, profile: Profile) -> bool:
        return profile in self.table

    def stat(self, strategy: str, profile: Profile) -> PayoffStat:
        try:
            return self.table[profile][strategy]
        except KeyError:
            raise IncompleteGameError([profile]) from None

    def payoff(self, strategy: str, profile: Profile) -> float:
        return self.stat(strategy, profile).mean

    def profiles(self) -> list:
        return sorted(self.table)

    def complete_supports(self) -> list:
        """Strategy subsets for which every profile over the subset is present."""
        out = []
        for size in range(1, len(self.strategies) + 1):
            for support in itertools.combinations(sorted(self.strategies), size):
                if all(Profile.of(p) in self.table
                       for p in itertools.combinations_with_replacement(support, self.n)):
                    out.append(support)
        return out

    # ---------------------------------------------------------------- I/O

    CSV_FIELDS = ("profile", "strategy", "mean", "variance", "count", "seed_range")

    def to_csv(self, header_comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_comments:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        for profile in self.profiles():
            for s in sorted(self.table[profile]):
                st = self.table[profile][s]
                writer.writerow([str(profile), s, repr(st.mean), repr(st.variance), st.count, st.seed_range])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, strategies: Sequence[str] = ()) -> "EmpiricalGame":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.DictReader(lines))
        if not rows:
            raise ParameterError("payoff table is empty")
        n = Profile.parse(rows[0]["profile"]).n
        game = cls(n, strategies)
        grouped: dict = {}
        for row in rows:
            profile = Profile.parse(row["profile"])
            grouped.setdefault(profile, {})[row["strategy"]] = PayoffStat(
                float(row["mean"]), float(row["variance"]), int(row["count"]), row.get("seed_range", ""))
        for profile, stats in grouped.items():
            game.add(profile, stats)
        return game

    def merge(self, other: "EmpiricalGame") -> "EmpiricalGame":
        out = EmpiricalGame(self.n, list(self.strategies))
        for g in (self, other):
            for profile, stats in g.table.items():
                out.add(profile, dict(stats))
        return out


# ------------------------------------------------------------ simulation


def _payoff_sums(outcome, agent_strategy: tuple):
    util = outcome.utilities()
    out = {}
    for i, s in enumerate(agent_strategy):
        col = util[:, i]
        acc = out.setdefault(s, [0.0, 0.0, 0])
        acc[0] += float(col.sum())
        acc[1] += float((col * col).sum())
        acc[2] += col.shape[0]
    return out


def simulate_profile(profile, environment: Environment, instances: int, seed: int = 0,
                     resolver: Optional[Callable] = None, prediction=None,
                     workers: Optional[int] = 1) -> dict:
    """Mean, variance and count of each strategy's per-agent payoff."""
    if instances < 1:
        raise ParameterError("need at least one instance")
    if not isinstance(profile, Profile):
        profile = Profile.of(profile)
    if profile.n != environment.n:
        raise ParameterError(f"profile has {profile.n} players, environment {environment.n}")
    built = {s: build_strategy(parse_spec(s), prediction, resolver, environment.m)
             for s in profile.counts}
    plan = Plan(environment, [built[s] for s in profile.strategies])
    fn = functools.partial(_payoff_sums, agent_strategy=profile.strategies)
    blocks = map_blocks(fn, plan, seed, ("profile", str(profile)), instances, workers)
    stats = {}
    for s in profile.counts:
        total = sum(b[s][0] for b in blocks)
        sq = sum(b[s][1] for b in blocks)
        count = sum(b[s][2] for b in blocks)
        mean = total / count
        var = max(sq - count * mean * mean, 0.0) / (count - 1) if count > 1 else 0.0
        stats[s] = PayoffStat(mean, var, count, f"{seed}:0-{instances}")
    return stats


# ------------------------------------------------------------------ regret


def regret(game: EmpiricalGame, profile: Profile, strategies: Optional[Sequence[str]] = None) -> float:
    """Largest gain from a unilateral deviation (0 counts as staying put)."""
    strategies = list(strategies or game.strategies)
    missing = []
    best = 0.0
    for s in profile.counts:
        if not game.has(profile):
            missing.append(profile)
            break
        base = game.payoff(s, profile)
        for alt in strategies:
            if alt == s:
                continue
            dev = profile.deviate(s, alt)
            if not game.has(dev):
                missing.append(dev)
                continue
            best = max(best, game.payoff(alt, dev) - base)
    if missing:
        raise IncompleteGameError(sorted(set(missing)))
    return best


def _opponent_terms(support: Sequence[str], n: int):
    """Opponent multisets of size ``n-1`` over ``support`` with multinomial coefficients."""
    terms = []
    for combo in itertools.combinations_with_replacement(range(len(support)), n - 1):
        counts = np.bincount(combo, minlength=len(support))
        coef = math.factorial(n - 1)
        for c in counts:
            coef //= math.factorial(int(c))
        terms.append((counts, coef))
    return terms


class MixtureEvaluator:
    """Fast expected payoffs ``u(s, x)`` for mixtures over a fixed support."""

    def __init__(self, game: EmpiricalGame, support: Sequence[str], deviators: Sequence[str] = ()):
        self.support = list(support)
        self.deviators = list(dict.fromkeys(list(support) + list(deviators)))
        terms = _opponent_terms(self.support, game.n)
        self.powers = np.array([t[0] for t in terms], dtype=np.float64)  # (M, k)
        self.coef = np.array([t[1] for t in terms], dtype=np.float64)
        self.keys = []
        missing = []
        payoff = np.empty((len(self.deviators), len(terms)))
        variance = np.empty_like(payoff)
        counts = np.empty_like(payoff)
        for a, s in enumerate(self.deviators):
            for c, (cnt, _) in enumerate(terms):
                opp = [self.support[i] for i, k in enumerate(cnt) for _ in range(int(k))]
                prof = Profile.of(opp + [s])
                self.keys.append((s, prof))
                if not game.has(prof) or s not in game.table[prof]:
                    missing.append(prof)
                    continue
                st = game.table[prof][s]
                payoff[a, c], variance[a, c], counts[a, c] = st.mean, st.variance, st.count
        if missing:
            raise IncompleteGameError(sorted(set(missing)))
        self.payoff = payoff
        self.variance = variance
        self.count = counts

    def weights(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.coef * np.prod(x[None, :] ** self.powers, axis=1)

    def payoffs(self, x, table=None) -> np.ndarray:
        """``u(s, x)`` for every deviator ``s``; ``table`` may be ``(B, S, M)``."""
        table = self.payoff if table is None else table
        return table @ self.weights(x)

    def regret(self, x, table=None):
        u = self.payoffs(x, table)
        k = len(self.support)
        value = u[..., :k] @ np.asarray(x, dtype=np.float64)
        return np.max(u, axis=-1) - value


def _as_vector(eq: dict, support: Sequence[str]) -> np.ndarray:
    return np.array([eq.get(s, 0.0) for s in support])


def _support_of(eq: dict) -> list:
    return sorted(s for s, p in eq.items() if p > 0)


def expected_payoff(game: EmpiricalGame, strategy: str, eq: dict) -> float:
    support = _support_of(eq)
    ev = MixtureEvaluator(game, support, [strategy])
    return float(ev.payoffs(_as_vector(eq, support))[ev.deviators.index(strategy)])


def mixed_regret(game: EmpiricalGame, eq: dict, strategies: Optional[Sequence[str]] = None) -> float:
    support = _support_of(eq)
    ev = MixtureEvaluator(game, support, strategies if strategies is not None else game.strategies)
    return float(ev.regret(_as_vector(eq, support)))


def ne_regret(game: EmpiricalGame, eq: dict, strategy: str) -> float:
    """Payoff of the equilibrium mixture minus that of deviating to ``strategy``."""
    support = _support_of(eq)
    ev = MixtureEvaluator(game, support, [strategy])
    x = _as_vector(eq, support)
    u = ev.payoffs(x)
    return float(u[: len(support)] @ x - u[ev.deviators.index(strategy)])


# --------------------------------------------------------- equilibrium search


def _replicate(ev: MixtureEvaluator, x: np.ndarray, iterations: int, floor: float) -> np.ndarray:
    k = len(ev.support)
    for _ in range(iterations):
        fitness = ev.payoffs(x)[:k] - floor
        new = x * fitness
        new /= new.sum()
        if np.max(np.abs(new - x)) < 1e-15:
            return new
        x = new
    return x


def replicator_solve(game: EmpiricalGame, support: Sequence[str], iterations: int = 100_000,
                     tolerance: float = 1e-6, rng: Optional[np.random.Generator] = None,
                     starts: int = 10) -> list:
    """Mixed equilibria of the game restricted to ``support``.

    Discrete-time replicator dynamics from the uniform mixture and
    ``starts - 1`` random interior points; fixed points whose regret within
    the support is at most ``tolerance`` are returned (deduplicated), sorted
    by regret.
    """
    support = sorted(support)
    ev = MixtureEvaluator(game, support)
    rng = rng if rng is not None else np.random.default_rng(0)
    k = len(support)
    floor = float(ev.payoff.min()) - 1.0
    inits = [np.full(k, 1.0 / k)] + [rng.dirichlet(np.ones(k)) for _ in range(max(starts - 1, 0))]
    found: list = []
    for x0 in inits:
        x = _replicate(ev, x0, iterations, floor)
        x[x < 1e-12] = 0.0
        x /= x.sum()
        r = float(ev.regret(x))
        if r > tolerance:
            continue
        if any(np.max(np.abs(x - y)) < 1e-4 for y, _ in found):
            continue
        found.append((x, r))
    found.sort(key=lambda t: t[1])
    return [{s: float(p) for s, p in zip(support, x) if p > 0} for x, _ in found]


def bootstrap_regret_bound(game: EmpiricalGame, eq: dict, resamples: int = 1000,
                           quantile: float = 0.9, rng: Optional[np.random.Generator] = None,
                           strategies: Optional[Sequence[str]] = None) -> float:
    """Upper ``quantile`` of the equilibrium's regret over resampled tables.

    Each payoff entry is redrawn from a normal approximation to its sampling
    distribution, ``N(mean, variance / count)``.
    """
    if not 0 < quantile < 1:
        raise ParameterError("quantile must lie in (0, 1)")
    support = _support_of(eq)
    ev = MixtureEvaluator(game, support, strategies if strategies is not None else game.strategies)
    if np.any(ev.count < 2):
        raise ParameterError("bootstrap needs at least two samples per payoff entry")
    rng = rng if rng is not None else np.random.default_rng(0)
    se = np.sqrt(ev.variance / ev.count)
    noise = rng.standard_normal((resamples,) + ev.payoff.shape)
    tables = ev.payoff[None] + noise * se[None]
    regrets = ev.regret(_as_vector(eq, support), tables)
    return float(np.quantile(regrets, quantile))


@dataclass
class EquilibriumReport:
    mixture: dict
    regret: float
    bootstrap_bound: Optional[float]
    confirmed: bool
    ne_regrets: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "support": sorted(self.mixture),
            "probabilities": {s: self.mixture[s] for s in sorted(self.mixture)},
            "regret": self.regret,
            "bootstrap_bound": self.bootstrap_bound,
            "confirmed": self.confirmed,
            "ne_regret": {s: self.ne_regrets[s] for s in sorted(self.ne_regrets)},
        }


def solve(game: EmpiricalGame, tolerance: float = 1e-6, resamples: int = 1000, quantile: float = 0.9,
          rng: Optional[np.random.Generator] = None, iterations: int = 100_000,
          starts: int = 10) -> list:
    """Search every complete support and check candidates against all strategies.

    A candidate is confirmed when every deviation profile exists and its
    regret over the full strategy set is at most ``tolerance``; otherwise it
    is refuted (or left unconfirmed if deviations are missing).  Each
    evaluable candidate also carries its bootstrap regret bound.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    reports: list = []
    seen: list = []
    for support in game.complete_supports():
        for eq in replicator_solve(game, support, iterations, tolerance, rng, starts):
            key = np.array([eq.get(s, 0.0) for s in sorted(game.strategies)])
            if any(np.max(np.abs(key - k)) < 1e-4 for k in seen):
                continue
            seen.append(key)
            try:
                r = mixed_regret(game, eq)
            except IncompleteGameError:
                reports.append(EquilibriumReport(eq, float("nan"), None, False))
                continue
            try:
                bound = bootstrap_regret_bound(game, eq, resamples, quantile, rng)
            except ParameterError:
                bound = 0.0
            confirmed = r <= tolerance
            ne = {s: ne_regret(game, eq, s) for s in game.strategies}
            reports.append(EquilibriumReport(eq, r, bound, confirmed, ne))
    reports.sort(key=lambda rep: (not rep.confirmed, rep.regret if rep.regret == rep.regret else np.inf))
    return reports


def equilibria_json(reports: Sequence[EquilibriumReport], header: Optional[dict] = None) -> str:
    doc = dict(header or {})
    doc["equilibria"] = [r.to_dict() for r in reports]
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def all_profiles(strategies: Sequence[str], n: int) -> list:
    return [Profile.of(c) for c in itertools.combinations_with_replacement(sorted(strategies), n)]
