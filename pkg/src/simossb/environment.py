"""Symmetric IPV environments ``U[m,n]`` (scheduling) and ``H[m,n]`` (homogeneous)."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import valuation as val
from .errors import ConfigurationError

_LABEL = re.compile(r"^\s*([UH])\s*(?:\[\s*(\d+)\s*,\s*(\d+)\s*\]|(\d)(\d))\s*$")


@dataclass(frozen=True)
class Environment:
    """Valuation family plus good and agent counts.

    ``vbar`` bounds bundle values; ``price_max`` bounds any single good's
    marginal value and hence any rational bid, and sets the price grid
    ``{0, ..., price_max}``.
    """

    kind: str
    m: int
    n: int

    def __post_init__(self):
        if self.kind not in ("U", "H"):
            raise ConfigurationError(f"unknown valuation distribution {self.kind!r} (expected U or H)")
        if self.m < 1:
            raise ConfigurationError("environment needs at least one good")
        if self.n < 2:
            raise ConfigurationError("environment needs at least two agents")

    @classmethod
    def parse(cls, label: str) -> "Environment":
        """Accept ``"U[5,5]"`` or the compact ``"U55"``."""
        match = _LABEL.match(label)
        if not match:
            raise ConfigurationError(f"cannot parse environment label {label!r}")
        kind, m1, n1, m2, n2 = match.groups()
        return cls(kind, int(m1 or m2), int(n1 or n2))

    @property
    def label(self) -> str:
        return f"{self.kind}[{self.m},{self.n}]"

    @property
    def tag(self) -> str:
        return f"{self.kind}{self.m}{self.n}"

    @property
    def vbar(self) -> float:
        if self.kind == "U":
            return float(val.SCHEDULING_MAX_VALUE)
        return float(val.HOMOGENEOUS_MAX_MARGINAL * self.m)

    @property
    def price_max(self) -> int:
        if self.kind == "U":
            return val.SCHEDULING_MAX_VALUE
        return val.HOMOGENEOUS_MAX_MARGINAL

    @property
    def valuation_demand(self) -> int:
        """Uniform draws consumed per sampled valuation."""
        return self.m + 1 if self.kind == "U" else self.m

    def tables_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1, self.valuation_demand)
        if self.kind == "U":
            lam, values = val.scheduling_from_uniforms(u, self.m)
            return val.scheduling_tables(lam, values)
        return val.homogeneous_tables(val.homogeneous_from_uniforms(u))

    def sample_valuation(self, rng: np.random.Generator) -> val.Valuation:
        if self.kind == "U":
            return val.sample_scheduling_valuation(self.m, rng)
        return val.sample_homogeneous_valuation(self.m, rng)

    def sample_tables(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.tables_from_uniforms(rng.random((count, self.valuation_demand)))

    def valuation_from_table(self, table) -> val.Valuation:
        return val.Valuation(np.asarray(table, dtype=np.float64), self.vbar)
