"""Simultaneous second-price sealed-bid auctions, one per good."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError
from .valuation import Valuation


def _pair(b, q):
    b = np.asarray(b, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if b.ndim != 1 or b.shape != q.shape:
        raise DimensionError(f"bid shape {b.shape} does not match price shape {q.shape}")
    return b, q


def winnings(b, q) -> frozenset:
    """Goods won when highest other bids are ``q``; ties lose."""
    b, q = _pair(b, q)
    return frozenset(int(j) for j in np.flatnonzero(b > q))


def payment(b, q) -> float:
    b, q = _pair(b, q)
    return float(q[b > q].sum())


def utility(v: Valuation, b, q) -> float:
    b, q = _pair(b, q)
    if b.shape[0] != v.m:
        raise DimensionError(f"valuation has m={v.m}, bid has {b.shape[0]} entries")
    return v(winnings(b, q)) - payment(b, q)


def highest_other_bids(bids) -> np.ndarray:
    """For bids ``(..., n, m)``, the max over the other agents, same shape."""
    bids = np.asarray(bids, dtype=np.float64)
    n = bids.shape[-2]
    if n < 2:
        raise ConfigurationError("highest other bid needs at least two agents")
    order = np.sort(bids, axis=-2)
    top, second = order[..., -1:, :], order[..., -2:-1, :]
    is_top = bids == top
    # if the top bid is shared, every agent's best rival still bids `top`
    unique_top = is_top.sum(axis=-2, keepdims=True) == 1
    return np.where(is_top & unique_top, second, top)


@dataclass
class AuctionResult:
    allocation: list  # frozenset of goods per agent
    payments: np.ndarray  # (n,)
    hb: np.ndarray  # (n, m) highest other-agent bids
    clearing_prices: np.ndarray  # (m,) price paid for each good
    winners: np.ndarray  # (m,) winning agent per good


def settle(tables, bids, winners, prices) -> np.ndarray:
    """Utilities ``(N, n)`` for batched auction outcomes.

    ``tables`` is ``(N, n, 2**m)``; ``winners`` and ``prices`` are ``(N, m)``.
    """
    n_agents = bids.shape[1]
    m = bids.shape[2]
    won = winners[:, None, :] == np.arange(n_agents)[None, :, None]  # (N, n, m)
    mask = (won * (1 << np.arange(m))).sum(axis=2)
    value = np.take_along_axis(tables, mask[:, :, None], axis=2)[:, :, 0]
    paid = np.where(won, prices[:, None, :], 0.0).sum(axis=2)
    return value - paid


def run_auction(all_bids, rng: np.random.Generator) -> AuctionResult:
    bids = np.asarray(all_bids, dtype=np.float64)
    if bids.ndim != 2:
        raise DimensionError("expected an (agents, goods) bid array")
    n, m = bids.shape
    if n < 2:
        raise ConfigurationError("an auction needs at least two agents")
    winners, prices = kernels.clear(bids[None], rng.random((1, m)))
    winners, prices = winners[0], prices[0]
    allocation = [frozenset(int(j) for j in np.flatnonzero(winners == i)) for i in range(n)]
    payments = np.array([prices[winners == i].sum() for i in range(n)])
    return AuctionResult(allocation, payments, highest_other_bids(bids), prices, winners)
