"""Iterative search for self-confirming price predictions.

Starting from a uniform prediction, every iteration simulates ``G`` games
with all agents playing the strategy on the current prediction, tallies the
resulting per-good price statistic, and stops once the tally is within
``tau`` (max per-good KS distance) of the prediction.  Otherwise the
prediction moves toward the tally by ``kappa_t``.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .environment import Environment
from .errors import ConfigurationError
from .prediction import STATISTICS, PredictionHistogram, ks_marginal, tally
from .simulation import Plan, map_blocks, outcome_statistics
from .strategies import StrategySpec, build_strategy, parse_spec

logger = logging.getLogger(__name__)


@dataclass
class ScppConfig:
    strategy: Union[str, StrategySpec]
    environment: Environment
    statistic: str = "HB"
    G: int = 10_000
    L: int = 50
    tau: float = 0.05
    kappa: Union[str, float] = "harmonic"  # "harmonic" -> 1/t, or a constant in (0, 1]
    seed: int = 0
    viewpoints: str = "one"  # "one" reference agent per game, or "all"
    workers: Optional[int] = 1

    def __post_init__(self):
        if isinstance(self.strategy, str):
            self.strategy = parse_spec(self.strategy)
        if self.statistic not in STATISTICS:
            raise ConfigurationError(f"statistic must be one of {STATISTICS}")
        if self.G < 1 or self.L < 1:
            raise ConfigurationError("G and L must be positive")
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        if self.viewpoints not in ("one", "all"):
            raise ConfigurationError("viewpoints must be 'one' or 'all'")
        if self.kappa != "harmonic":
            kappa = float(self.kappa)
            if not 0 < kappa <= 1:
                raise ConfigurationError("constant kappa must lie in (0, 1]")
            self.kappa = kappa

    def kappa_at(self, t: int) -> float:
        return 1.0 / t if self.kappa == "harmonic" else float(self.kappa)


@dataclass
class ScppResult:
    prediction: PredictionHistogram
    iterations_used: int
    converged: bool
    final_ks_marg: float
    ks_trace: list = field(default_factory=list)


def _statistic_counts(outcome, statistic, viewpoints, price_max):
    values = np.floor(outcome_statistics(outcome, statistic, viewpoints)).astype(np.int64)
    return tally(values, price_max)


def tally_outcomes(strategy, prediction: PredictionHistogram, environment: Environment, G: int,
                   statistic: str = "HB", seed: int = 0, stream: tuple = ("tally",),
                   viewpoints: str = "one", workers: Optional[int] = 1,
                   resolver: Optional[Callable] = None) -> PredictionHistogram:
    """Histogram of the price statistic over ``G`` games where everyone plays
    ``strategy`` on ``prediction``.  Statistics are floored to the grid."""
    spec = parse_spec(strategy) if isinstance(strategy, str) else strategy
    # the prediction under test always overrides any stored reference
    agent = build_strategy(replace(spec, pred=None), prediction, resolver)
    plan = Plan(environment, [agent] * environment.n)
    fn = functools.partial(_statistic_counts, statistic=statistic, viewpoints=viewpoints,
                           price_max=prediction.price_max)
    counts = sum(map_blocks(fn, plan, seed, stream, G, workers))
    return PredictionHistogram.from_counts(counts, statistic=statistic,
                                           environment=environment.label)


def derive_scpp(config: ScppConfig, initial: Optional[PredictionHistogram] = None,
                resolver: Optional[Callable] = None) -> ScppResult:
    env = config.environment
    F = initial or PredictionHistogram.uniform(env.m, env.price_max, statistic=config.statistic,
                                               environment=env.label)
    trace = []
    for t in range(1, config.L + 1):
        F_new = tally_outcomes(config.strategy, F, env, config.G, config.statistic, config.seed,
                               ("scpp-tally", t), config.viewpoints, config.workers, resolver)
        ks = ks_marginal(F, F_new)
        trace.append(ks)
        logger.info("scpp %s iteration %d: KS_marg=%.5f", config.strategy, t, ks)
        if ks < config.tau:
            return ScppResult(_annotate(F, config, t, ks), t, True, ks, trace)
        F = F.blend(F_new, config.kappa_at(t))
    return ScppResult(_annotate(F, config, config.L, trace[-1]), config.L, False, trace[-1], trace)


def _annotate(F: PredictionHistogram, config: ScppConfig, iterations: int, ks: float):
    meta = {
        "strategy": str(replace(config.strategy, pred=None)),
        "iterations": iterations,
        "G": config.G,
        "tau": config.tau,
        "kappa": config.kappa,
        "viewpoints": config.viewpoints,
        "final_ks_marg": ks,
        "seed": config.seed,
    }
    return PredictionHistogram(F.masses, statistic=config.statistic,
                               environment=config.environment.label, metadata=meta)


def verify_self_confirming(strategy, prediction: PredictionHistogram, environment: Environment,
                           G_check: int, statistic: str = "HB", seed: int = 0,
                           stream: tuple = ("scpp-verify",), viewpoints: str = "one",
                           workers: Optional[int] = 1, resolver: Optional[Callable] = None) -> float:
    """KS_marg between ``prediction`` and a fresh tally of play on it."""
    observed = tally_outcomes(strategy, prediction, environment, G_check, statistic, seed, stream,
                              viewpoints, workers, resolver)
    return ks_marginal(prediction, observed)


def prediction_name(strategy, statistic: str) -> str:
    spec = parse_spec(strategy) if isinstance(strategy, str) else strategy
    return f"{replace(spec, pred=None)}_{statistic}"
