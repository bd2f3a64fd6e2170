"""Batched game simulation shared by SCPP derivation and payoff estimation.

Instances are processed in fixed-size blocks.  Each instance's uniforms are
read from its own slice of a counter-based stream, and block results are
reduced in block order, so outputs do not depend on the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .environment import Environment
from .mechanism import highest_other_bids, settle
from .streams import InstanceStream
from .strategies import Strategy

BLOCK_SIZE = 512


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class Plan:
    """Which strategy each of the ``n`` agents plays in every instance."""

    environment: Environment
    agents: Sequence[Strategy]

    def __post_init__(self):
        if len(self.agents) != self.environment.n:
            raise ValueError(f"plan has {len(self.agents)} agents, environment needs {self.environment.n}")
        env = self.environment
        self.offsets = []
        col = env.n * env.valuation_demand
        for agent in self.agents:
            self.offsets.append(col)
            col += agent.demand
        self.tie_col = col
        self.ref_col = col + env.m
        self.width = self.ref_col + 1


@dataclass
class BlockOutcome:
    tables: np.ndarray  # (N, n, 2**m)
    bids: np.ndarray  # (N, n, m)
    winners: np.ndarray  # (N, m)
    prices: np.ndarray  # (N, m)
    reference: np.ndarray  # (N,) uniformly chosen agent index

    def utilities(self) -> np.ndarray:
        return settle(self.tables, self.bids, self.winners, self.prices)


def play(plan: Plan, u: np.ndarray) -> BlockOutcome:
    env = plan.environment
    n, m, vd = env.n, env.m, env.valuation_demand
    count = u.shape[0]
    tables = env.tables_from_uniforms(u[:, : n * vd].reshape(count * n, vd)).reshape(count, n, 1 << m)
    bids = np.empty((count, n, m))
    groups: dict = {}
    for i, agent in enumerate(plan.agents):
        groups.setdefault(id(agent), (agent, []))[1].append(i)
    for agent, idx in groups.values():
        d = agent.demand
        ug = np.stack([u[:, plan.offsets[i]:plan.offsets[i] + d] for i in idx], axis=1)
        tg = tables[:, idx].reshape(count * len(idx), 1 << m)
        b = agent.bids(tg, np.ascontiguousarray(ug.reshape(count * len(idx), d)))
        bids[:, idx] = b.reshape(count, len(idx), m)
    winners, prices = kernels.clear(bids, np.ascontiguousarray(u[:, plan.tie_col:plan.tie_col + m]))
    reference = np.minimum((u[:, plan.ref_col] * n).astype(np.int64), n - 1)
    return BlockOutcome(tables, bids, winners, prices, reference)


def outcome_statistics(outcome: BlockOutcome, statistic: str, viewpoints: str = "one") -> np.ndarray:
    """Observed price statistic per instance (and viewpoint), shape ``(rows, m)``."""
    if statistic == "price":
        return outcome.prices
    hb = highest_other_bids(outcome.bids)
    if viewpoints == "all":
        return hb.reshape(-1, hb.shape[-1])
    return hb[np.arange(hb.shape[0]), outcome.reference]


def _run_block(job):
    fn, plan, key_args, start, count = job
    stream = InstanceStream(*key_args, width=plan.width)
    return fn(play(plan, stream.block(start, count)))


def map_blocks(fn: Callable[[BlockOutcome], object], plan: Plan, seed: int, tags: tuple,
               instances: int, workers: int | None = None) -> list:
    """Apply ``fn`` to every simulated block; results come back in block order."""
    key_args = (seed,) + tuple(tags)
    jobs = [(fn, plan, key_args, start, min(BLOCK_SIZE, instances - start))
            for start in range(0, instances, BLOCK_SIZE)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run_block(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_block, jobs))
