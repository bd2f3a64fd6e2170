"""Exact expected utility and brute-force optimal bids against a prediction.

On the integer price grid with strict-inequality winning, every bid in
``(x, x+1]`` has the same outcome distribution, so a unit-step bid grid
already contains a globally optimal bid vector.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .environment import Environment
from .errors import CapabilityError, DimensionError
from .prediction import PredictionHistogram
from .streams import derive_rng
from .strategies import bid_grid, build_strategy, check_oracle_capacity, parse_spec
from .valuation import Valuation

EXACT_MAX_GOODS = 6


def exact_expected_utility(v: Valuation, b, prediction: PredictionHistogram) -> float:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (prediction.m,) or v.m != prediction.m:
        raise DimensionError("bid, valuation and prediction must agree on m")
    if prediction.m > EXACT_MAX_GOODS:
        raise CapabilityError(f"exact expectation enumerates 2**m bundles; m={prediction.m} too large")
    return float(kernels.exact_eu(v.table[None], b[None], prediction.cum[None], prediction.pcum[None])[0])


def optimal_bid(v: Valuation, prediction: PredictionHistogram, grid_step: float = 1.0):
    """Best bid vector on the grid ``{0, step, ...}`` and its expected utility."""
    if v.m != prediction.m:
        raise DimensionError("valuation and prediction disagree on m")
    check_oracle_capacity(prediction.m, prediction.price_max, grid_step)
    grid = bid_grid(prediction.price_max, grid_step)
    best, eu = kernels.optimal_grid(v.table[None], prediction.cum[None], prediction.pcum[None], grid)
    return best[0], float(eu[0])


@dataclass
class OracleReport:
    optimal_bid: np.ndarray
    optimal_eu: float
    strategy_bid: np.ndarray
    strategy_eu: float

    @property
    def ratio(self) -> float:
        return self.strategy_eu / self.optimal_eu if self.optimal_eu > 0 else float("nan")


def compare(v: Valuation, prediction: PredictionHistogram, strategy_bid, grid_step: float = 1.0) -> OracleReport:
    best, best_eu = optimal_bid(v, prediction, grid_step)
    return OracleReport(best, best_eu, np.asarray(strategy_bid, dtype=np.float64),
                        exact_expected_utility(v, strategy_bid, prediction))


@dataclass
class OptimalitySummary:
    strategy: str
    strategy_eu: np.ndarray  # per trial
    optimal_eu: np.ndarray
    exhaustive: bool

    @property
    def ratio(self) -> float:
        """Mean strategy EU over mean optimal EU."""
        denom = self.optimal_eu.mean()
        return float(self.strategy_eu.mean() / denom) if denom > 0 else float("nan")


def optimality_ratio(strategy, environment: Environment, prediction: PredictionHistogram,
                     trials: int, grid_step: float = 1.0, seed: int = 0,
                     resolver: Optional[Callable] = None,
                     valuation_stream: tuple = ("oracle-valuations",)) -> OptimalitySummary:
    """Compare a strategy with the grid oracle over sampled valuations.

    Valuations depend only on ``seed`` and ``valuation_stream``, so several
    strategies evaluated with the same seed face identical instances.
    """
    spec = parse_spec(strategy) if isinstance(strategy, str) else strategy
    exhaustive = check_oracle_capacity(environment.m, prediction.price_max, grid_step)
    tables = environment.sample_tables(trials, derive_rng(seed, *valuation_stream))
    agent = build_strategy(spec, prediction, resolver)
    bid_rng = derive_rng(seed, "oracle-bids", str(spec))
    bids = agent.bids(tables, bid_rng.random((trials, agent.demand)))
    cum, pcum = prediction.cum[None], prediction.pcum[None]
    strategy_eu = kernels.exact_eu(tables, np.ascontiguousarray(bids), cum, pcum)
    _, optimal_eu = kernels.optimal_grid(tables, cum, pcum, bid_grid(prediction.price_max, grid_step))
    return OptimalitySummary(str(spec), strategy_eu, optimal_eu, exhaustive)
