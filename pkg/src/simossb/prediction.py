"""Price predictions as products of per-good marginals on an integer grid.

A :class:`PredictionHistogram` holds, for each good, a probability mass
vector over prices ``{0, ..., price_max}``.  Outcome semantics follow the
strict-inequality rule: a bid ``b_j`` wins good ``j`` against price ``q_j``
only when ``b_j > q_j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .errors import CapabilityError, DimensionError, GridMismatchError, ParameterError
from .valuation import Valuation, as_mask, mask_matrix

FORMAT = "simossb.prediction/1"
STATISTICS = ("HB", "price")
KS_JOINT_MAX_GOODS = 4
KS_JOINT_MAX_CELLS = 50_000_000
BP_MAX_GOODS = 6


class PredictionHistogram:
    """Per-good price distributions on the grid ``{0, ..., price_max}``."""

    def __init__(self, masses, statistic: str = "HB", environment: str | None = None,
                 metadata: dict | None = None):
        masses = np.array(masses, dtype=np.float64, ndmin=2)
        if masses.ndim != 2 or masses.shape[1] < 1:
            raise DimensionError("masses must be a (goods, grid) array")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise ParameterError("masses must be finite and nonnegative")
        totals = masses.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise ParameterError("every good needs positive total mass")
        if np.any(np.abs(totals - 1.0) > 1e-9):
            masses = masses / totals
        if statistic not in STATISTICS:
            raise ParameterError(f"statistic must be one of {STATISTICS}")
        masses.setflags(write=False)
        self.masses = masses
        self.statistic = statistic
        self.environment = environment
        self.metadata = dict(metadata or {})
        self.cum = np.cumsum(masses, axis=1)
        self.cum[:, -1] = 1.0
        self.pcum = np.cumsum(masses * np.arange(masses.shape[1]), axis=1)
        self.cum.setflags(write=False)
        self.pcum.setflags(write=False)

    # construction -----------------------------------------------------

    @classmethod
    def uniform(cls, m: int, price_max: int, **kw) -> "PredictionHistogram":
        return cls(np.full((m, price_max + 1), 1.0 / (price_max + 1)), **kw)

    @classmethod
    def point_mass(cls, prices, price_max: int, **kw) -> "PredictionHistogram":
        prices = np.asarray(prices, dtype=np.int64)
        masses = np.zeros((prices.shape[0], price_max + 1))
        masses[np.arange(prices.shape[0]), prices] = 1.0
        return cls(masses, **kw)

    @classmethod
    def from_counts(cls, counts, **kw) -> "PredictionHistogram":
        counts = np.asarray(counts, dtype=np.float64)
        return cls(counts / counts.sum(axis=1, keepdims=True), **kw)

    @classmethod
    def from_samples(cls, samples, price_max: int, **kw) -> "PredictionHistogram":
        samples = np.asarray(samples, dtype=np.int64)
        return cls.from_counts(tally(samples, price_max), **kw)

    # basic properties ------------------------------------------------

    @property
    def m(self) -> int:
        return self.masses.shape[0]

    @property
    def price_max(self) -> int:
        return self.masses.shape[1] - 1

    def _check_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise DimensionError(f"vector has shape {x.shape}, expected ({self.m},)")
        return x

    def _check_grid(self, other: "PredictionHistogram") -> None:
        if self.masses.shape != other.masses.shape:
            raise GridMismatchError(
                f"grids differ: {self.masses.shape} vs {other.masses.shape}")

    def marginal_cdf(self, j: int, x: float) -> float:
        if x < 0:
            return 0.0
        return float(self.cum[j, min(int(np.floor(x)), self.price_max)])

    def cdf(self, q) -> float:
        """``Pr(p <= q)`` under the product of marginals."""
        q = self._check_vector(q)
        out = 1.0
        for j in range(self.m):
            out *= self.marginal_cdf(j, q[j])
        return out

    # sampling ----------------------------------------------------------

    def sample_from_uniforms(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1, self.m)
        return kernels.sample_grid(self.cum, np.ascontiguousarray(u))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        draws = self.sample_from_uniforms(rng.random((1 if size is None else size, self.m)))
        return draws[0] if size is None else draws

    def expected_point(self) -> np.ndarray:
        return self.pcum[:, -1].copy()

    def variances(self) -> np.ndarray:
        grid = np.arange(self.price_max + 1)
        second = (self.masses * grid**2).sum(axis=1)
        return second - self.expected_point() ** 2

    def sampled_point(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if k < 1:
            raise ParameterError("need at least one sample")
        return self.sample(rng, k).mean(axis=0)

    # outcome probabilities --------------------------------------------

    def win_probabilities(self, b) -> np.ndarray:
        """``Pr(q_j < b_j)`` per good."""
        b = self._check_vector(b)
        idx = np.clip(np.ceil(np.minimum(b, self.price_max + 1)) - 1, -1, self.price_max).astype(int)
        probs = self.cum[np.arange(self.m), np.maximum(idx, 0)]
        return np.where(idx < 0, 0.0, probs)

    def bundle_probabilities(self, b) -> np.ndarray:
        """Probability of winning exactly each bundle (indexed by bitmask)."""
        win = self.win_probabilities(b)
        members = mask_matrix(self.m)
        return np.prod(np.where(members, win[None, :], 1.0 - win[None, :]), axis=1)

    def bundle_prob(self, b, bundle) -> float:
        return float(self.bundle_probabilities(b)[as_mask(bundle)])

    def expected_payment(self, b) -> float:
        b = self._check_vector(b)
        return float(sum(self._paid_below(j, b[j]) for j in range(self.m)))

    def _paid_below(self, j: int, bid: float) -> float:
        idx = int(np.ceil(min(bid, self.price_max + 1))) - 1
        if idx < 0:
            return 0.0
        return float(self.pcum[j, min(idx, self.price_max)])

    def expected_value(self, v: Valuation, b) -> float:
        if v.m != self.m:
            raise DimensionError("valuation and prediction disagree on m")
        return float(self.bundle_probabilities(b) @ v.table)

    def expected_utility(self, v: Valuation, b) -> float:
        return self.expected_value(v, b) - self.expected_payment(b)

    # algebra -----------------------------------------------------------

    def blend(self, other: "PredictionHistogram", kappa: float) -> "PredictionHistogram":
        """``kappa * other + (1 - kappa) * self``."""
        self._check_grid(other)
        if not 0.0 <= kappa <= 1.0:
            raise ParameterError(f"kappa={kappa} outside [0, 1]")
        if kappa == 1.0:
            masses = other.masses
        elif kappa == 0.0:
            masses = self.masses
        else:
            masses = kappa * other.masses + (1.0 - kappa) * self.masses
        return PredictionHistogram(masses, statistic=self.statistic, environment=self.environment)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT,
            "environment": self.environment,
            "statistic": self.statistic,
            "grid_size": self.price_max + 1,
            "masses": [[float(x) for x in row] for row in self.masses],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionHistogram":
        if data.get("format") != FORMAT:
            raise ParameterError(f"not a prediction document (format={data.get('format')!r})")
        masses = np.array(data["masses"], dtype=np.float64)
        if masses.shape[1] != data["grid_size"]:
            raise GridMismatchError("grid_size disagrees with the stored masses")
        return cls(masses, statistic=data["statistic"], environment=data.get("environment"),
                   metadata=data.get("metadata"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "PredictionHistogram":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __repr__(self):
        return (f"PredictionHistogram(m={self.m}, price_max={self.price_max}, "
                f"statistic={self.statistic!r})")


@dataclass(frozen=True, eq=False)
class PointPrediction:
    prices: np.ndarray = field()

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.ndim != 1 or np.any(prices < 0):
            raise ParameterError("point prediction must be a nonnegative vector")
        object.__setattr__(self, "prices", prices)

    @property
    def m(self) -> int:
        return self.prices.shape[0]


def tally(samples, price_max: int) -> np.ndarray:
    """Per-good integer counts of grid values; values are clipped to the grid."""
    samples = np.clip(np.asarray(samples, dtype=np.int64), 0, price_max)
    m = samples.shape[1]
    counts = np.zeros((m, price_max + 1), dtype=np.int64)
    for j in range(m):
        counts[j] = np.bincount(samples[:, j], minlength=price_max + 1)
    return counts


def ks_marginal(f: PredictionHistogram, g: PredictionHistogram) -> float:
    """Largest per-good Kolmogorov-Smirnov distance."""
    f._check_grid(g)
    return float(np.max(np.abs(f.cum - g.cum)))


def ks_joint(f: PredictionHistogram, g: PredictionHistogram) -> float:
    """Exact sup-distance between the joint CDFs over all grid points."""
    f._check_grid(g)
    m, size = f.masses.shape
    if m > KS_JOINT_MAX_GOODS or size**m > KS_JOINT_MAX_CELLS:
        raise CapabilityError(
            f"exact joint KS needs {size}**{m} grid cells; use ks_joint_monte_carlo")
    if m == 1:
        return ks_marginal(f, g)
    rest_f = np.ones(1)
    rest_g = np.ones(1)
    for j in range(1, m):
        rest_f = np.multiply.outer(rest_f, f.cum[j]).reshape(-1)
        rest_g = np.multiply.outer(rest_g, g.cum[j]).reshape(-1)
    best = 0.0
    for x in range(size):
        best = max(best, float(np.max(np.abs(f.cum[0, x] * rest_f - g.cum[0, x] * rest_g))))
    return best


def ks_joint_monte_carlo(f: PredictionHistogram, g: PredictionHistogram, points: int,
                         rng: np.random.Generator) -> float:
    """Approximate joint KS: maximum CDF gap over grid points drawn from both
    distributions.  Always a lower bound on the exact value."""
    f._check_grid(g)
    pts = np.concatenate([f.sample(rng, points), g.sample(rng, points)])
    rows = np.arange(f.m)
    pf = np.prod(f.cum[rows, pts], axis=1)
    pg = np.prod(g.cum[rows, pts], axis=1)
    return float(np.max(np.abs(pf - pg)))


def bp_distance(f: PredictionHistogram, g: PredictionHistogram, b) -> float:
    """Total-variation distance between the won-bundle distributions at bid ``b``."""
    f._check_grid(g)
    if f.m > BP_MAX_GOODS:
        raise CapabilityError(f"bundle distance enumerates 2**m bundles; m={f.m} exceeds {BP_MAX_GOODS}")
    return 0.5 * float(np.abs(f.bundle_probabilities(b) - g.bundle_probabilities(b)).sum())
