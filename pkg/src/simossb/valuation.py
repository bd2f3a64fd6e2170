"""Combinatorial valuations over m goods and the acquisition problem.

Goods are indexed ``0 .. m-1``.  A bundle may be given either as an iterable
of good indices or as an integer bitmask (bit ``j`` set means good ``j`` is
in the bundle).  Every valuation is tabulated once into a length ``2**m``
array indexed by bitmask, which is what the numerical kernels consume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import CapabilityError, DimensionError, ParameterError

Bundle = Union[int, Iterable[int]]

SCHEDULING_MAX_VALUE = 50
HOMOGENEOUS_MAX_MARGINAL = 127
MAX_ENUMERATION_GOODS = 20


def as_mask(bundle: Bundle) -> int:
    if isinstance(bundle, (int, np.integer)):
        return int(bundle)
    mask = 0
    for j in bundle:
        mask |= 1 << int(j)
    return mask


def mask_to_bundle(mask: int) -> frozenset:
    return frozenset(j for j in range(int(mask).bit_length()) if mask >> j & 1)


def popcounts(m: int) -> np.ndarray:
    masks = np.arange(1 << m)
    return np.array([bin(x).count("1") for x in masks], dtype=np.int64)


def mask_matrix(m: int) -> np.ndarray:
    """Boolean ``(2**m, m)`` membership matrix: row X, column j is ``j in X``."""
    masks = np.arange(1 << m)[:, None]
    return (masks >> np.arange(m)[None, :]) & 1 == 1


@dataclass(frozen=True, eq=False)
class Valuation:
    """A bundle-value function tabulated over all ``2**m`` bundles.

    ``vbar`` is the upper bound on any bundle value for the distribution the
    valuation came from (not necessarily attained by this instance).
    """

    table: np.ndarray
    vbar: float

    def __post_init__(self):
        table = np.ascontiguousarray(self.table, dtype=np.float64)
        size = table.shape[0]
        if table.ndim != 1 or size & (size - 1) or size < 2:
            raise DimensionError("valuation table length must be 2**m with m >= 1")
        object.__setattr__(self, "table", table)
        table.setflags(write=False)

    @property
    def m(self) -> int:
        return self.table.shape[0].bit_length() - 1

    def __call__(self, bundle: Bundle) -> float:
        mask = as_mask(bundle)
        if mask >> self.m:
            raise DimensionError(f"bundle {bundle!r} refers to goods beyond m={self.m}")
        return float(self.table[mask])

    def satisfies_free_disposal(self) -> bool:
        t = self.table
        for j in range(self.m):
            bit = 1 << j
            without = np.array([x for x in range(t.shape[0]) if not x & bit])
            if np.any(t[without | bit] < t[without]):
                return False
        return True


@dataclass(frozen=True, eq=False)
class SchedulingValuation(Valuation):
    lam: int = 1
    completion_values: tuple = ()


@dataclass(frozen=True, eq=False)
class HomogeneousValuation(Valuation):
    marginals: tuple = ()


def completion_time(bundle: Bundle, lam: int, m: int | None = None) -> float:
    """Earliest time slot (1-based) by which ``bundle`` holds ``lam`` slots.

    Good ``j`` is the slot for time ``j + 1``.  Returns ``math.inf`` when the
    bundle has fewer than ``lam`` slots.
    """
    mask = as_mask(bundle)
    width = m if m is not None else max(mask.bit_length(), 1)
    if not 1 <= lam <= width:
        raise ParameterError(f"task length {lam} outside 1..{width}")
    held = 0
    for j in range(width):
        if mask >> j & 1:
            held += 1
            if held >= lam:
                return j + 1
    return math.inf


def _completion_table(m: int) -> np.ndarray:
    """``T[mask, lam]`` as an int array, with ``m + 1`` standing in for infinity."""
    out = np.full((1 << m, m + 1), m + 1, dtype=np.int64)
    for mask in range(1 << m):
        for lam in range(1, m + 1):
            t = completion_time(mask, lam, m)
            if t != math.inf:
                out[mask, lam] = t
    return out


def prune_completion_values(raw) -> np.ndarray:
    """Impose nonincreasing completion values by a backward running maximum."""
    raw = np.asarray(raw)
    return np.maximum.accumulate(raw[..., ::-1], axis=-1)[..., ::-1]


def scheduling_tables(lam, values) -> np.ndarray:
    """Tabulate scheduling valuations.

    Args:
        lam: ``(N,)`` task lengths in ``1..m``.
        values: ``(N, m)`` nonincreasing completion values ``V^1..V^m``.

    Returns:
        ``(N, 2**m)`` float64 bundle values.
    """
    lam = np.asarray(lam, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[-1]
    padded = np.concatenate([values, np.zeros(values.shape[:-1] + (1,))], axis=-1)
    t = _completion_table(m)[:, lam].T  # (N, 2**m)
    return np.take_along_axis(padded, t - 1, axis=-1)


def homogeneous_tables(marginals) -> np.ndarray:
    marginals = np.asarray(marginals, dtype=np.float64)
    m = marginals.shape[-1]
    cum = np.concatenate([np.zeros(marginals.shape[:-1] + (1,)), np.cumsum(marginals, axis=-1)], axis=-1)
    return cum[..., popcounts(m)]


def scheduling_from_uniforms(u: np.ndarray, m: int):
    """Map ``(N, m + 1)`` uniforms to task lengths and pruned completion values."""
    lam = np.floor(u[:, 0] * m).astype(np.int64) + 1
    raw = np.floor(u[:, 1:] * SCHEDULING_MAX_VALUE).astype(np.int64) + 1
    return lam, prune_completion_values(raw)


def homogeneous_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Map ``(N, m)`` uniforms to weakly decreasing integer marginals."""
    out = np.empty(u.shape, dtype=np.int64)
    out[:, 0] = np.floor(u[:, 0] * (HOMOGENEOUS_MAX_MARGINAL + 1))
    for k in range(1, u.shape[1]):
        out[:, k] = np.floor(u[:, k] * (out[:, k - 1] + 1))
    return out


def scheduling_valuation(lam: int, completion_values) -> SchedulingValuation:
    values = np.asarray(completion_values, dtype=np.float64)
    m = values.shape[0]
    if not 1 <= lam <= m:
        raise ParameterError(f"task length {lam} outside 1..{m}")
    if np.any(np.diff(values) > 0):
        raise ParameterError("completion values must be nonincreasing in time")
    table = scheduling_tables([lam], values[None, :])[0]
    return SchedulingValuation(table, SCHEDULING_MAX_VALUE, lam=int(lam),
                               completion_values=tuple(int(x) for x in values))


def homogeneous_valuation(marginals) -> HomogeneousValuation:
    marg = np.asarray(marginals, dtype=np.float64)
    if np.any(np.diff(marg) > 0) or np.any(marg < 0):
        raise ParameterError("unit marginals must be nonnegative and nonincreasing")
    table = homogeneous_tables(marg[None, :])[0]
    return HomogeneousValuation(table, HOMOGENEOUS_MAX_MARGINAL * marg.shape[0],
                                marginals=tuple(int(x) for x in marg))


def additive_valuation(values, vbar: float | None = None) -> Valuation:
    values = np.asarray(values, dtype=np.float64)
    table = mask_matrix(values.shape[0]).astype(np.float64) @ values
    return Valuation(table, float(values.sum()) if vbar is None else vbar)


def sample_scheduling_valuation(m: int, rng: np.random.Generator) -> SchedulingValuation:
    if m < 1:
        raise ParameterError("need at least one good")
    lam, values = scheduling_from_uniforms(rng.random((1, m + 1)), m)
    return scheduling_valuation(int(lam[0]), values[0])


def sample_homogeneous_valuation(m: int, rng: np.random.Generator) -> HomogeneousValuation:
    if m < 1:
        raise ParameterError("need at least one good")
    return homogeneous_valuation(homogeneous_from_uniforms(rng.random((1, m)))[0])


def _check_prices(v: Valuation, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (v.m,):
        raise DimensionError(f"price vector has shape {p.shape}, expected ({v.m},)")
    return p


def surplus(v: Valuation, bundle: Bundle, p) -> float:
    p = _check_prices(v, p)
    mask = as_mask(bundle)
    return v(mask) - float(sum(p[j] for j in range(v.m) if mask >> j & 1))


def acquire(v: Valuation, p) -> tuple[frozenset, float]:
    """Surplus-maximizing bundle at fixed prices, by exhaustive enumeration.

    Ties go to the smallest bitmask, so the empty bundle wins whenever the
    best achievable surplus is zero.
    """
    p = _check_prices(v, p)
    if v.m > MAX_ENUMERATION_GOODS:
        raise CapabilityError(f"acquire enumerates 2**m bundles; m={v.m} is too large")
    costs = mask_matrix(v.m) @ p
    surpluses = v.table - costs
    best = int(np.argmax(surpluses))
    return mask_to_bundle(best), float(surpluses[best])


def marginal_value_bundle(v: Valuation, good: int, bundle: Bundle) -> float:
    mask = as_mask(bundle)
    if mask >> good & 1:
        raise ParameterError(f"good {good} already in bundle")
    return v(mask | 1 << good) - v(mask)


def marginal_value_at_prices(v: Valuation, good: int, p) -> float:
    """Optimal surplus with ``good`` free minus optimal surplus without it.

    Removing a good is modelled as pricing it at ``vbar + 1``, which keeps it
    out of every optimal bundle.
    """
    p = _check_prices(v, p)
    free, barred = p.copy(), p.copy()
    free[good] = 0.0
    barred[good] = v.vbar + 1.0
    return acquire(v, free)[1] - acquire(v, barred)[1]
