"""Numpy implementations of the numerical kernels.

This module is the reference for :mod:`simossb._ckernels` and the fallback
when the compiled extension is unavailable.  Every function is batched over
a leading instance axis ``N``; valuation tables are ``(N, 2**m)`` arrays
indexed by bundle bitmask.

Price distributions are passed as per-good cumulative arrays on the integer
grid ``{0, ..., G-1}``: ``cum[q, k, x] = Pr(price_k <= x)`` and
``pcum[q, k, x] = sum_{y <= x} y * Pr(price_k = y)``.  The leading axis ``q``
is either ``N`` (one distribution per instance) or 1 (shared).
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"
# grid bids whose utility is within this of the best count as tied
TIE_TOL = 1e-12


def _members(m: int) -> np.ndarray:
    masks = np.arange(1 << m)[:, None]
    return (masks >> np.arange(m)[None, :]) & 1 == 1


def sample_grid(cum, u):
    """Inverse-CDF draws: smallest grid point ``x`` with ``cum[k, x] > u``."""
    cum = np.asarray(cum, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    out = np.empty(u.shape, dtype=np.int64)
    top = cum.shape[1] - 1
    for k in range(cum.shape[0]):
        out[:, k] = np.minimum(np.searchsorted(cum[k], u[:, k], side="right"), top)
    return out


def _bundle_costs(prices, members):
    # prices (N, m) -> costs (N, 2**m), summed in ascending good order
    costs = np.zeros((prices.shape[0], members.shape[0]))
    for j in range(members.shape[1]):
        costs += np.where(members[:, j][None, :], prices[:, j : j + 1], 0.0)
    return costs


def marginal_values(tables, prices):
    tables = np.asarray(tables, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    m = prices.shape[1]
    members = _members(m)
    costs = _bundle_costs(prices, members)
    surplus = tables - costs
    out = np.empty(prices.shape)
    masks = np.arange(1 << m)
    for j in range(m):
        has = members[:, j]
        with_j = tables[:, has] - costs[:, masks[has] ^ (1 << j)]
        without = surplus[:, ~has].max(axis=1)
        out[:, j] = np.maximum(with_j.max(axis=1), without) - without
    return out


def average_mu(tables, prices):
    tables = np.asarray(tables, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    n, k, m = prices.shape
    mv = marginal_values(np.repeat(tables, k, axis=0), prices.reshape(n * k, m))
    return mv.reshape(n, k, m).sum(axis=1) / k


def _win_index(b, size):
    idx = np.ceil(np.minimum(b, size)) - 1
    return np.clip(idx, -1, size - 1).astype(np.int64)


def _win_stats(cum, pcum, bids):
    """Per-good ``Pr(price < bid)`` and ``E[price; price < bid]``."""
    size = cum.shape[-1]
    idx = _win_index(bids, size)
    safe = np.maximum(idx, 0)
    prob = np.take_along_axis(np.broadcast_to(cum, bids.shape + (size,)), safe[..., None], -1)[..., 0]
    pay = np.take_along_axis(np.broadcast_to(pcum, bids.shape + (size,)), safe[..., None], -1)[..., 0]
    prob = np.where(idx < 0, 0.0, prob)
    pay = np.where(idx < 0, 0.0, pay)
    return prob, pay


def _bundle_probs(prob, members, skip=None):
    # prob (N, m) -> (N, 2**m); good `skip` is left out of the product
    out = np.ones((prob.shape[0], members.shape[0]))
    for k in range(members.shape[1]):
        if k == skip:
            continue
        out *= np.where(members[:, k][None, :], prob[:, k : k + 1], 1.0 - prob[:, k : k + 1])
    return out


def _eu(tables, prob, pay, members):
    return (_bundle_probs(prob, members) * tables).sum(axis=1) - pay.sum(axis=1)


def exact_eu(tables, bids, cum, pcum):
    tables = np.asarray(tables, dtype=np.float64)
    bids = np.asarray(bids, dtype=np.float64)
    prob, pay = _win_stats(np.asarray(cum), np.asarray(pcum), bids)
    return _eu(tables, prob, pay, _members(bids.shape[1]))


def local_bid_product(tables, cum, pcum, bids, iterations, tol, trace=None):
    """Coordinate ascent on exact expected utility under a product distribution.

    Each update sets ``b_j`` to the expected marginal value of good ``j``
    given the other current bids.  ``trace`` (``(N, iterations*m + 1)``)
    receives the expected utility before the first and after every update.
    """
    tables = np.asarray(tables, dtype=np.float64)
    b = np.array(bids, dtype=np.float64)
    cum = np.asarray(cum, dtype=np.float64)
    pcum = np.asarray(pcum, dtype=np.float64)
    n, m = b.shape
    members = _members(m)
    masks = np.arange(1 << m)
    prob, pay = _win_stats(cum, pcum, b)
    active = np.ones(n, dtype=bool)
    if trace is not None:
        trace[:] = np.nan
        trace[:, 0] = _eu(tables, prob, pay, members)
    for sweep in range(iterations):
        change = np.zeros(n)
        for j in range(m):
            without = ~members[:, j]
            probs = _bundle_probs(prob, members, skip=j)[:, without]
            delta = tables[:, masks[without] | (1 << j)] - tables[:, masks[without]]
            new = (probs * delta).sum(axis=1)
            new = np.where(active, new, b[:, j])
            change = np.maximum(change, np.abs(new - b[:, j]))
            b[:, j] = new
            pj, qj = _win_stats(cum[:, j : j + 1], pcum[:, j : j + 1], b[:, j : j + 1])
            prob[:, j], pay[:, j] = pj[:, 0], qj[:, 0]
            if trace is not None:
                col = 1 + sweep * m + j
                trace[:, col] = np.where(active, _eu(tables, prob, pay, members), np.nan)
        active &= change > tol
        if not active.any():
            break
    return b


def local_bid_joint(tables, samples, bids, iterations, tol, trace=None):
    """Coordinate updates using sample means over shared joint price draws."""
    tables = np.asarray(tables, dtype=np.float64)
    samples = np.asarray(samples)
    b = np.array(bids, dtype=np.float64)
    n, s, m = samples.shape
    rows = np.arange(n)[:, None]
    won = b[:, None, :] > samples
    weights = 1 << np.arange(m)
    active = np.ones(n, dtype=bool)

    def utility():
        mask = (won * weights).sum(axis=2)
        paid = np.where(won, samples, 0).sum(axis=2)
        return (tables[rows, mask] - paid).sum(axis=1) / s

    if trace is not None:
        trace[:] = np.nan
        trace[:, 0] = utility()
    for sweep in range(iterations):
        change = np.zeros(n)
        for j in range(m):
            rest = (won * weights).sum(axis=2) & ~(1 << j)
            delta = tables[rows, rest | (1 << j)] - tables[rows, rest]
            new = np.where(active, delta.sum(axis=1) / s, b[:, j])
            change = np.maximum(change, np.abs(new - b[:, j]))
            b[:, j] = new
            won[:, :, j] = new[:, None] > samples[:, :, j]
            if trace is not None:
                trace[:, 1 + sweep * m + j] = np.where(active, utility(), np.nan)
        active &= change > tol
        if not active.any():
            break
    return b


def sample_utilities(tables, bids, samples):
    """Mean utility of each candidate bid over each instance's price samples."""
    tables = np.asarray(tables, dtype=np.float64)
    bids = np.asarray(bids, dtype=np.float64)
    samples = np.asarray(samples)
    n, c, m = bids.shape
    s = samples.shape[1]
    weights = 1 << np.arange(m)
    won = bids[:, :, None, :] > samples[:, None, :, :]  # (N, C, S, m)
    mask = (won * weights).sum(axis=3)
    paid = np.where(won, samples[:, None, :, :], 0).sum(axis=3)
    value = np.take_along_axis(tables[:, None, :], mask.reshape(n, 1, c * s), axis=2).reshape(n, c, s)
    return (value - paid).sum(axis=2) / s


def optimal_grid(tables, cum, pcum, grid):
    """Exhaustive bid search over ``grid**m``.

    Bids within ``TIE_TOL`` of the best utility count as tied; the
    lexicographically smallest of them is returned with the best utility.
    """
    tables = np.asarray(tables, dtype=np.float64)
    cum = np.asarray(cum, dtype=np.float64)
    pcum = np.asarray(pcum, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    n = tables.shape[0]
    m = cum.shape[1]
    size = len(grid)
    members = _members(m)
    best_b = np.empty((n, m))
    best_u = np.empty(n)
    for i in range(n):
        q = i if cum.shape[0] > 1 else 0
        prob, pay = _win_stats(cum[q], pcum[q], np.broadcast_to(grid[:, None], (size, m)))
        eu = np.zeros((size,) * m)
        for mask in range(1 << m):
            term = np.array(tables[i, mask])
            for k in range(m):
                factor = prob[:, k] if members[mask, k] else 1.0 - prob[:, k]
                shape = [1] * m
                shape[k] = size
                term = term * factor.reshape(shape)
            eu = eu + term
        for k in range(m):
            shape = [1] * m
            shape[k] = size
            eu = eu - pay[:, k].reshape(shape)
        flat_eu = eu.reshape(-1)
        best_u[i] = flat_eu.max()
        flat = int(np.argmax(flat_eu >= best_u[i] - TIE_TOL))
        best_b[i] = grid[list(np.unravel_index(flat, eu.shape))]
    return best_b, best_u


def clear(bids, u_tie):
    """Second-price clearing of every good; ties split uniformly.

    Returns ``(winners, prices)`` each of shape ``(N, m)``.
    """
    bids = np.asarray(bids, dtype=np.float64)
    u_tie = np.asarray(u_tie, dtype=np.float64)
    n, agents, m = bids.shape
    top = bids.max(axis=1)  # (N, m)
    tied = bids == top[:, None, :]
    count = tied.sum(axis=1)
    pick = np.minimum(np.floor(u_tie * count).astype(np.int64), count - 1)
    order = np.cumsum(tied, axis=1) - 1
    chosen = tied & (order == pick[:, None, :])
    winners = chosen.argmax(axis=1)
    others = np.where(chosen, -np.inf, bids)
    prices = others.max(axis=1)
    return winners.astype(np.int64), prices
