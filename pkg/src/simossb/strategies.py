"""Price-prediction bidding strategies.

Strategies are described by compact strings such as ``"StraightMU8"``,
``"AverageMU64_HB"`` or ``"LocalBid(init=StraightMU8,K=10,Ns=64,pred=scpp:U53_HB)"``.
:func:`parse_spec` turns a string into a :class:`StrategySpec`;
:func:`build_strategy` binds a spec to a price prediction and returns an
object whose :meth:`Strategy.bids` computes bids for a batch of valuations.

Every strategy consumes a fixed number of uniform draws per bid
(:attr:`Strategy.demand`), which keeps simulations replayable from
per-instance random streams.

Grammar::

    spec   := FAMILY [DIGITS] ["(" arg ("," arg)* ")"] ["_HB" | "_price"]
    arg    := KEY "=" value | spec            (positional: generator / init)
    value  := spec | NUMBER | pred-ref
    pred   := "scpp:" NAME | "point:" x1;x2;... | "uniform"

A trailing ``_HB``/``_price`` is shorthand for ``pred=scpp:<base>_<STAT>``,
the self-confirming prediction derived for that same strategy.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .errors import CapabilityError, ParameterError, SpecParseError
from .prediction import PointPrediction, PredictionHistogram
from .valuation import Valuation

FAMILIES = ("ZeroBid", "StraightMV", "StraightMU", "AverageMU", "BidEval", "BidEvalMix",
            "LocalBid", "Optimal")
ALIASES = {"SMV": "StraightMV", "SMU": "StraightMU", "AMU": "AverageMU", "Zero": "ZeroBid"}
K_FAMILIES = {"StraightMU": 0, "AverageMU": 64, "BidEvalMix": 8}

# name -> (default, kind); order fixes the canonical argument order
PARAMS = {
    "BidEval": {"gen": ("StraightMU8", "spec"), "C": (10, "int"), "Ne": (64, "int")},
    "BidEvalMix": {"C": (10, "int"), "Ne": (64, "int")},
    "LocalBid": {"init": ("StraightMU8", "spec"), "K": (10, "int"), "Ns": (64, "int"),
                 "ev": ("product", "str")},
    "Optimal": {"step": (1.0, "float")},
}
POSITIONAL = {"BidEval": "gen", "LocalBid": "init"}
CONVERGENCE_TOL = 1e-9

Prediction = Union[PredictionHistogram, PointPrediction]


@dataclass(frozen=True)
class StrategySpec:
    family: str
    k: Optional[int] = None
    params: tuple = ()  # ((name, value), ...) in canonical order, defaults filled
    pred: Optional[str] = None

    def get(self, name):
        return dict(self.params)[name]

    @property
    def base(self) -> str:
        """Canonical name without any prediction reference."""
        return format_spec(replace(self, pred=None))

    def __str__(self) -> str:
        return format_spec(self)


# ---------------------------------------------------------------- parsing

_NAME = re.compile(r"[A-Za-z]+")
_DIGITS = re.compile(r"\d+")
_STAT = re.compile(r"_(HB|price)")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message, token=None):
        token = token if token is not None else self.text[self.pos:self.pos + 12] or "<end>"
        raise SpecParseError(f"{message} at position {self.pos} in {self.text!r}: {token!r}", token)

    def peek(self, s):
        return self.text.startswith(s, self.pos)

    def expect(self, s):
        if not self.peek(s):
            self.error(f"expected {s!r}")
        self.pos += len(s)

    def spec(self) -> StrategySpec:
        match = _NAME.match(self.text, self.pos)
        if not match:
            self.error("expected a strategy name")
        name = match.group()
        family = ALIASES.get(name, name)
        if family not in FAMILIES:
            self.error("unknown strategy", name)
        self.pos = match.end()
        k = None
        digits = _DIGITS.match(self.text, self.pos)
        if digits:
            if family not in K_FAMILIES:
                self.error(f"{family} takes no sample count", name + digits.group())
            k = int(digits.group())
            self.pos = digits.end()
        if family in K_FAMILIES and k is None:
            k = K_FAMILIES[family]
        args: dict = {}
        pred = None
        if self.peek("("):
            self.pos += 1
            first = True
            while True:
                key = self._key()
                if key is None:
                    if not first or family not in POSITIONAL:
                        self.error("expected key=value")
                    key = POSITIONAL[family]
                    args[key] = self.spec()
                elif key == "pred":
                    pred = self._pred_ref()
                elif key == "k" and family in K_FAMILIES:
                    k = self._number(int)
                else:
                    if family not in PARAMS or key not in PARAMS[family]:
                        self.error(f"unknown parameter for {family}", key)
                    kind = PARAMS[family][key][1]
                    if kind == "spec":
                        args[key] = self.spec()
                    elif kind == "str":
                        args[key] = self._word()
                    else:
                        args[key] = self._number(int if kind == "int" else float)
                first = False
                if self.peek(","):
                    self.pos += 1
                    continue
                self.expect(")")
                break
        stat = _STAT.match(self.text, self.pos)
        spec = _complete(family, k, args, None)
        if stat:
            self.pos = stat.end()
            if pred is not None:
                self.error("both pred= and a statistic suffix given")
            pred = f"scpp:{spec.base}_{stat.group(1)}"
        return replace(spec, pred=pred)

    def _key(self):
        match = re.compile(r"([A-Za-z]+)=").match(self.text, self.pos)
        if not match:
            return None
        self.pos = match.end()
        return match.group(1)

    def _word(self):
        match = re.compile(r"[A-Za-z]+").match(self.text, self.pos)
        if not match:
            self.error("expected a word")
        self.pos = match.end()
        return match.group()

    def _number(self, cast):
        match = re.compile(r"[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?").match(self.text, self.pos)
        if not match:
            self.error("expected a number")
        self.pos = match.end()
        try:
            return cast(match.group())
        except ValueError:
            self.error("bad number", match.group())

    def _pred_ref(self):
        match = re.compile(r"[^,()]+").match(self.text, self.pos)
        if not match:
            self.error("expected a prediction reference")
        ref = match.group()
        if not (ref == "uniform" or ref.startswith("scpp:") or ref.startswith("point:")):
            self.error("prediction must be scpp:NAME, point:x;y;.. or uniform", ref)
        self.pos = match.end()
        return ref


def _complete(family, k, args, pred) -> StrategySpec:
    params = []
    for name, (default, kind) in PARAMS.get(family, {}).items():
        value = args.get(name, default)
        if kind == "spec" and isinstance(value, str):
            value = parse_spec(value)
        params.append((name, value))
    spec = StrategySpec(family, k, tuple(params), pred)
    validate_spec(spec)
    return spec


def validate_spec(spec: StrategySpec) -> None:
    p = dict(spec.params)
    if spec.family == "AverageMU" and spec.k < 1:
        raise SpecParseError("AverageMU needs k >= 1", str(spec.k))
    if spec.family == "BidEvalMix" and spec.k < 1:
        raise SpecParseError("BidEvalMix needs k >= 1", str(spec.k))
    for name in ("C", "K"):
        if name in p and p[name] < 1:
            raise SpecParseError(f"{name} must be positive", str(p[name]))
    if "ev" in p and p["ev"] not in ("product", "joint"):
        raise SpecParseError("ev must be product or joint", p["ev"])
    if "step" in p and not p["step"] > 0:
        raise SpecParseError("step must be positive", str(p["step"]))


def parse_spec(text: str) -> StrategySpec:
    parser = _Parser(text.strip())
    spec = parser.spec()
    if parser.pos != len(parser.text):
        parser.error("unexpected trailing text")
    return spec


def _fmt_value(value):
    if isinstance(value, StrategySpec):
        return format_spec(value)
    if isinstance(value, float):
        return repr(value).removesuffix(".0") if value.is_integer() else repr(value)
    return str(value)


def format_spec(spec: StrategySpec) -> str:
    name = spec.family
    if spec.family in K_FAMILIES and not (spec.family == "StraightMU" and spec.k == 0):
        name += str(spec.k)
    defaults = PARAMS.get(spec.family, {})
    args = []
    for key, value in spec.params:
        default = defaults[key][0]
        if isinstance(value, StrategySpec):
            if format_spec(value) == default:
                continue
        elif value == default:
            continue
        args.append(f"{key}={_fmt_value(value)}")
    base = name + (f"({','.join(args)})" if args else "")
    if spec.pred is None:
        return base
    for stat in ("HB", "price"):
        if spec.pred == f"scpp:{base}_{stat}":
            return f"{base}_{stat}"
    args.append(f"pred={spec.pred}")
    return f"{name}({','.join(args)})"


# -------------------------------------------------------- prediction lookup


class PredictionResolver:
    """Resolves ``pred=`` references against directories of prediction files."""

    def __init__(self, search_dirs=(), m: int | None = None, price_max: int | None = None):
        self.search_dirs = [Path(d) for d in search_dirs]
        self.m = m
        self.price_max = price_max
        self._cache: dict = {}

    def __call__(self, ref: str) -> Prediction:
        if ref in self._cache:
            return self._cache[ref]
        if ref == "uniform":
            if self.m is None or self.price_max is None:
                raise ParameterError("uniform prediction needs m and price_max")
            out = PredictionHistogram.uniform(self.m, self.price_max)
        elif ref.startswith("point:"):
            out = PointPrediction([float(x) for x in ref[6:].split(";")])
        elif ref.startswith("scpp:"):
            name = ref[5:]
            for d in self.search_dirs:
                path = d / f"{name}.json"
                if path.exists():
                    out = PredictionHistogram.load(path)
                    break
            else:
                raise FileNotFoundError(
                    f"prediction {name!r} not found in {[str(d) for d in self.search_dirs]}")
        else:
            raise ParameterError(f"bad prediction reference {ref!r}")
        self._cache[ref] = out
        return out


# ------------------------------------------------------------- strategies


class Strategy:
    """A spec bound to a prediction; bids for batches of valuation tables."""

    def __init__(self, spec: StrategySpec, prediction: Optional[Prediction], m: int):
        self.spec = spec
        self.prediction = prediction
        self.m = m

    @property
    def demand(self) -> int:
        return 0

    def bids(self, tables, u) -> np.ndarray:
        raise NotImplementedError

    def bid(self, v: Valuation, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((1, self.demand))
        return self.bids(v.table[None, :], u)[0]

    def _histogram(self) -> PredictionHistogram:
        if not isinstance(self.prediction, PredictionHistogram):
            raise ParameterError(f"{self.spec.family} needs a distribution prediction")
        return self.prediction

    def _samples(self, u, k):
        """``(N, k, m)`` integer price draws from the first ``k*m`` columns."""
        hist = self._histogram()
        n = u.shape[0]
        flat = np.ascontiguousarray(u[:, : k * self.m]).reshape(n * k, self.m)
        return hist.sample_from_uniforms(flat).reshape(n, k, self.m)

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec}>"


class ZeroBid(Strategy):
    def bids(self, tables, u):
        return np.zeros((np.shape(tables)[0], self.m))


class StraightMV(Strategy):
    def _point(self) -> np.ndarray:
        if isinstance(self.prediction, PointPrediction):
            return self.prediction.prices
        return self._histogram().expected_point()

    def bids(self, tables, u):
        tables = np.ascontiguousarray(tables, dtype=np.float64)
        prices = np.ascontiguousarray(np.broadcast_to(self._point(), (tables.shape[0], self.m)))
        return kernels.marginal_values(tables, prices)


class StraightMU(Strategy):
    @property
    def demand(self):
        return self.spec.k * self.m

    def bids(self, tables, u):
        tables = np.ascontiguousarray(tables, dtype=np.float64)
        if self.spec.k == 0:
            point = np.broadcast_to(self._histogram().expected_point(), (tables.shape[0], self.m))
        else:
            point = self._samples(u, self.spec.k).mean(axis=1)
        return kernels.marginal_values(tables, np.ascontiguousarray(point))


class AverageMU(Strategy):
    @property
    def demand(self):
        return self.spec.k * self.m

    def bids(self, tables, u):
        samples = self._samples(u, self.spec.k).astype(np.float64)
        return kernels.average_mu(np.ascontiguousarray(tables, dtype=np.float64), samples)


def _empirical_cdfs(samples, size):
    """Per-instance empirical ``cum``/``pcum`` arrays from ``(N, S, m)`` draws."""
    n, s, m = samples.shape
    offsets = (np.arange(n)[:, None, None] * m + np.arange(m)[None, None, :]) * size
    counts = np.bincount((samples + offsets).reshape(-1), minlength=n * m * size)
    counts = counts.reshape(n, m, size).astype(np.float64)
    cum = np.cumsum(counts, axis=2) / s
    pcum = np.cumsum(counts * np.arange(size), axis=2) / s
    return cum, pcum


class LocalBid(Strategy):
    """Good-by-good replacement of each bid by its expected marginal value.

    With ``Ns > 0`` the expectation is taken over the product of the
    empirical per-good marginals of ``Ns`` shared draws (``ev=product``) or
    over the joint draws themselves (``ev=joint``).  ``Ns = 0`` uses the
    prediction's marginals exactly.
    """

    def __init__(self, spec, prediction, m, init: Strategy):
        super().__init__(spec, prediction, m)
        self.init = init
        self.iterations = spec.get("K")
        self.n_samples = spec.get("Ns")
        self.mode = spec.get("ev")

    @property
    def demand(self):
        return self.init.demand + self.n_samples * self.m

    def bids(self, tables, u, trace=None):
        tables = np.ascontiguousarray(tables, dtype=np.float64)
        hist = self._histogram()
        d0 = self.init.demand
        start = np.ascontiguousarray(self.init.bids(tables, u[:, :d0]))
        if self.n_samples == 0:
            return kernels.local_bid_product(tables, hist.cum[None], hist.pcum[None], start,
                                             self.iterations, CONVERGENCE_TOL, trace)
        samples = self._samples(u[:, d0:], self.n_samples)
        if self.mode == "joint":
            return kernels.local_bid_joint(tables, samples, start, self.iterations,
                                           CONVERGENCE_TOL, trace)
        cum, pcum = _empirical_cdfs(samples, hist.price_max + 1)
        return kernels.local_bid_product(tables, cum, pcum, start, self.iterations,
                                         CONVERGENCE_TOL, trace)


class BidEval(Strategy):
    """Best of ``C`` generated candidates by (sampled or exact) expected utility."""

    def __init__(self, spec, prediction, m, generators: list):
        super().__init__(spec, prediction, m)
        self.generators = generators
        self.n_eval = spec.get("Ne")

    @property
    def demand(self):
        return sum(g.demand for g in self.generators) + self.n_eval * self.m

    def candidates(self, tables, u) -> np.ndarray:
        out = []
        col = 0
        for gen in self.generators:
            out.append(gen.bids(tables, u[:, col:col + gen.demand]))
            col += gen.demand
        return np.stack(out, axis=1)

    def scores(self, tables, candidates, u) -> np.ndarray:
        hist = self._histogram()
        if self.n_eval == 0:
            n, c, m = candidates.shape
            flat = kernels.exact_eu(np.repeat(tables, c, axis=0),
                                    np.ascontiguousarray(candidates.reshape(n * c, m)),
                                    hist.cum[None], hist.pcum[None])
            return flat.reshape(n, c)
        col = sum(g.demand for g in self.generators)
        samples = self._samples(u[:, col:], self.n_eval)
        return kernels.sample_utilities(tables, candidates, samples)

    def bids(self, tables, u):
        tables = np.ascontiguousarray(tables, dtype=np.float64)
        cands = self.candidates(tables, u)
        best = np.argmax(self.scores(tables, cands, u), axis=1)
        return cands[np.arange(cands.shape[0]), best]


class Optimal(Strategy):
    """Exhaustive grid search for the expected-utility-maximizing bid."""

    def __init__(self, spec, prediction, m):
        super().__init__(spec, prediction, m)
        self.step = float(spec.get("step"))

    def grid(self) -> np.ndarray:
        return bid_grid(self._histogram().price_max, self.step)

    def bids(self, tables, u):
        hist = self._histogram()
        check_oracle_capacity(hist.m, hist.price_max, self.step)
        tables = np.ascontiguousarray(tables, dtype=np.float64)
        best, _ = kernels.optimal_grid(tables, hist.cum[None], hist.pcum[None], self.grid())
        return best


def bid_grid(price_max: int, step: float) -> np.ndarray:
    """``{0, step, ...}`` up to the first point above ``price_max``."""
    if not step > 0:
        raise ParameterError("grid step must be positive")
    count = int(np.ceil(price_max / step - 1e-12)) + 2
    return np.arange(count) * step


ORACLE_MAX_CELLS = 2_000_000


def check_oracle_capacity(m: int, price_max: int, step: float) -> bool:
    """Raise unless the bid grid is searchable; return whether it is exhaustive.

    Up to three goods are searched exhaustively at any step; four or five
    goods are allowed only at a step coarse enough to bound the search.
    """
    size = len(bid_grid(price_max, step))
    if m <= 3 and size**m <= 50 * ORACLE_MAX_CELLS:
        return True
    if m <= 5 and size**m <= ORACLE_MAX_CELLS:
        return False
    raise CapabilityError(f"bid grid of {size}**{m} points is beyond the oracle's reach")


def mix_generators(k: int, count: int) -> list:
    cycle = [f"StraightMU{k}", f"AverageMU{k}", f"LocalBid(init=StraightMU{k})"]
    return [parse_spec(cycle[i % 3]) for i in range(count)]


def build_strategy(spec: Union[str, StrategySpec], prediction: Optional[Prediction] = None,
                   resolver: Optional[Callable[[str], Prediction]] = None,
                   m: Optional[int] = None) -> Strategy:
    """Bind ``spec`` to a prediction.

    The strategy's own ``pred=`` reference wins over ``prediction``, which acts as
    the context default and is inherited by nested generators.
    """
    if isinstance(spec, str):
        spec = parse_spec(spec)
    if spec.pred is not None:
        if resolver is None:
            raise ParameterError(f"{spec} references {spec.pred} but no resolver was given")
        prediction = resolver(spec.pred)
    if prediction is not None:
        m = prediction.m
    if m is None:
        raise ParameterError(f"cannot infer the number of goods for {spec}")

    def child(s):
        return build_strategy(s, prediction, resolver, m)

    family = spec.family
    if family == "ZeroBid":
        return ZeroBid(spec, prediction, m)
    if prediction is None:
        raise ParameterError(f"{spec} needs a price prediction")
    if family == "StraightMV":
        return StraightMV(spec, prediction, m)
    if family == "StraightMU":
        return StraightMU(spec, prediction, m)
    if family == "AverageMU":
        return AverageMU(spec, prediction, m)
    if family == "LocalBid":
        return LocalBid(spec, prediction, m, child(spec.get("init")))
    if family == "BidEval":
        gen = child(spec.get("gen"))
        return BidEval(spec, prediction, m, [gen] * spec.get("C"))
    if family == "BidEvalMix":
        return BidEval(spec, prediction, m, [child(s) for s in mix_generators(spec.k, spec.get("C"))])
    if family == "Optimal":
        return Optimal(spec, prediction, m)
    raise SpecParseError(f"unknown strategy family {family}", family)


# ------------------------------------------------ single-valuation helpers


def straight_mv(v: Valuation, p) -> np.ndarray:
    point = p if isinstance(p, PointPrediction) else PointPrediction(p)
    return StraightMV(parse_spec("StraightMV"), point, v.m).bids(v.table[None], None)[0]


def straight_mu(v: Valuation, prediction: PredictionHistogram, k: int,
                rng: np.random.Generator) -> np.ndarray:
    if k < 0:
        raise ParameterError("k must be >= 0 (0 selects the exact mean)")
    return build_strategy(StrategySpec("StraightMU", k), prediction).bid(v, rng)


def average_mu(v: Valuation, prediction: PredictionHistogram, k: int,
               rng: np.random.Generator) -> np.ndarray:
    if k < 1:
        raise ParameterError("k must be >= 1")
    return build_strategy(StrategySpec("AverageMU", k), prediction).bid(v, rng)


def bid_eval(v: Valuation, prediction: PredictionHistogram, generator, C: int, n_eval: int,
             rng: np.random.Generator) -> np.ndarray:
    if C < 1 or n_eval < 0:
        raise ParameterError("need C >= 1 and n_eval >= 0")
    gen = generator if isinstance(generator, StrategySpec) else parse_spec(generator)
    spec = _complete("BidEval", None, {"gen": gen, "C": C, "Ne": n_eval}, None)
    return build_strategy(spec, prediction).bid(v, rng)


def local_bid(v: Valuation, prediction: PredictionHistogram, init="StraightMU8", K: int = 10,
              n_samples: int = 64, rng: np.random.Generator | None = None,
              mode: str = "product") -> np.ndarray:
    if K < 1 or n_samples < 0:
        raise ParameterError("need K >= 1 and n_samples >= 0")
    init = init if isinstance(init, StrategySpec) else parse_spec(init)
    spec = _complete("LocalBid", None, {"init": init, "K": K, "Ns": n_samples, "ev": mode}, None)
    rng = rng if rng is not None else np.random.default_rng(0)
    return build_strategy(spec, prediction).bid(v, rng)
