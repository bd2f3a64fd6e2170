"""Command-line entry point: ``simossb <command> [<action>] --config FILE``.

Every experiment is described by a YAML file, for example::

    seed: 7
    environment: U[3,3]
    predictions: [predictions]      # searched for scpp:NAME references
    strategies: [LocalBid_HB, StraightMU8_HB, AverageMU8_HB]
    scpp: {strategy: LocalBid, statistic: HB, G: 10000, L: 50, tau: 0.05}
    egta: {instances: 10000, payoffs: payoffs.csv}
    oracle: {strategies: [LocalBid_HB], prediction: scpp:LocalBid_HB, trials: 500}

Relative paths are resolved against the config file's directory, except the
output directory which is relative to the working directory.  Every output
file records the SHA-256 of the config file and the master seed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import egta, oracle, scpp
from .environment import Environment
from .errors import ConfigurationError, SimOSSBError, SpecParseError
from .prediction import PredictionHistogram
from .streams import derive_rng
from .strategies import PredictionResolver, format_spec, parse_spec

logger = logging.getLogger("simossb")

SCPP_DEFAULTS = {"strategy": None, "statistic": "HB", "G": 10_000, "L": 50, "tau": 0.05,
                 "kappa": "harmonic", "viewpoints": "one", "G_check": 10_000, "prediction": None}
EGTA_DEFAULTS = {"instances": 10_000, "profiles": "all", "payoffs": "payoffs.csv", "tolerance": 1e-6,
                 "resamples": 1000, "quantile": 0.9, "iterations": 100_000, "starts": 10}
ORACLE_DEFAULTS = {"strategies": None, "prediction": None, "trials": 500, "grid_step": 1.0}
VALUATION_DEFAULTS = {"count": 10}
TOP_KEYS = {"seed", "environment", "predictions", "strategies", "out", "scpp", "egta", "oracle",
            "valuation"}


@dataclass
class Context:
    config: dict
    config_path: Path
    digest: str
    seed: int
    environment: Environment
    out: Path
    workers: int | None
    resolver: PredictionResolver

    def section(self, name: str, defaults: dict) -> dict:
        raw = self.config.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigurationError(f"config section {name!r} must be a mapping")
        unknown = set(raw) - set(defaults)
        if unknown:
            raise ConfigurationError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
        return {**defaults, **raw}

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.config_path.parent / path

    def provenance(self) -> dict:
        return {"config_sha256": self.digest, "seed": self.seed, "environment": self.environment.label}

    def header(self) -> list:
        return [f"config_sha256: {self.digest}", f"seed: {self.seed}",
                f"environment: {self.environment.label}"]

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        return path

    def write_csv(self, name: str, fields, rows) -> Path:
        buf = io.StringIO()
        for line in self.header():
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        writer.writerows(rows)
        return self.write(name, buf.getvalue())


def load_config(path: Path) -> tuple[dict, str]:
    data = path.read_bytes()
    try:
        config = yaml.safe_load(data) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigurationError(f"{path}: invalid YAML{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(config, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    unknown = set(config) - TOP_KEYS
    if unknown:
        raise ConfigurationError(f"{path}: unknown key(s): {', '.join(sorted(unknown))}")
    return config, hashlib.sha256(data).hexdigest()


def make_context(args) -> Context:
    path = Path(args.config)
    config, digest = load_config(path)
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ConfigurationError("a master seed is required (config 'seed' or --seed)")
    if "environment" not in config:
        raise ConfigurationError("config needs an 'environment' such as U[3,3]")
    env = Environment.parse(str(config["environment"]))
    out = Path(args.out or config.get("out") or "results")
    search = config.get("predictions") or []
    if isinstance(search, str):
        search = [search]
    dirs = [path.parent / d for d in search] + [out]
    return Context(config, path, digest, int(seed), env, out, args.workers,
                   PredictionResolver(dirs, env.m, env.price_max))


def _canonical(spec: str) -> str:
    return format_spec(parse_spec(str(spec)))


def _roster(ctx: Context) -> list:
    roster = ctx.config.get("strategies")
    if not roster:
        raise ConfigurationError("config needs a non-empty 'strategies' list")
    return [_canonical(s) for s in roster]


def _prediction(ctx: Context, ref) -> PredictionHistogram | None:
    if ref is None:
        return None
    ref = str(ref)
    if ref.endswith(".json"):
        return PredictionHistogram.load(ctx.resolve(ref))
    return ctx.resolver(ref)


# ----------------------------------------------------------------- commands


def cmd_valuation_sample(ctx: Context) -> str:
    opts = ctx.section("valuation", VALUATION_DEFAULTS)
    env = ctx.environment
    tables = env.sample_tables(int(opts["count"]), derive_rng(ctx.seed, "valuation-sample", env.tag))
    fields = ["instance"] + [f"v{mask}" for mask in range(1 << env.m)]
    rows = [[i] + [repr(float(x)) for x in t] for i, t in enumerate(tables)]
    path = ctx.write_csv(f"valuations_{env.tag}.csv", fields, rows)
    return f"wrote {len(rows)} valuations to {path}"


def _scpp_config(ctx: Context, opts: dict) -> scpp.ScppConfig:
    if not opts["strategy"]:
        raise ConfigurationError("scpp.strategy is required")
    return scpp.ScppConfig(
        strategy=replace(parse_spec(str(opts["strategy"])), pred=None), environment=ctx.environment,
        statistic=opts["statistic"], G=int(opts["G"]), L=int(opts["L"]), tau=float(opts["tau"]),
        kappa=opts["kappa"], seed=ctx.seed, viewpoints=opts["viewpoints"], workers=ctx.workers)


def cmd_scpp_derive(ctx: Context) -> str:
    opts = ctx.section("scpp", SCPP_DEFAULTS)
    config = _scpp_config(ctx, opts)
    result = scpp.derive_scpp(config, resolver=ctx.resolver)
    name = scpp.prediction_name(config.strategy, config.statistic)
    pred = result.prediction
    pred.metadata.update(ctx.provenance(), converged=result.converged)
    path = ctx.write(f"{name}.json", pred.dumps())
    ctx.write_csv(f"{name}_ks_trace.csv", ["iteration", "ks_marg"],
                  [[t + 1, repr(k)] for t, k in enumerate(result.ks_trace)])
    state = "converged" if result.converged else "did not converge"
    return (f"{name}: {state} after {result.iterations_used} iterations, "
            f"KS_marg={result.final_ks_marg:.4f}; wrote {path}")


def cmd_scpp_verify(ctx: Context) -> str:
    opts = ctx.section("scpp", SCPP_DEFAULTS)
    config = _scpp_config(ctx, opts)
    name = scpp.prediction_name(config.strategy, config.statistic)
    pred = _prediction(ctx, opts["prediction"] or f"scpp:{name}")
    ks = scpp.verify_self_confirming(config.strategy, pred, ctx.environment, int(opts["G_check"]),
                                     config.statistic, ctx.seed, viewpoints=config.viewpoints,
                                     workers=ctx.workers, resolver=ctx.resolver)
    doc = {"provenance": ctx.provenance(), "prediction": name, "G_check": int(opts["G_check"]),
           "ks_marg": ks}
    path = ctx.write(f"{name}_verify.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return f"{name}: verification KS_marg={ks:.4f}; wrote {path}"


def _profiles(ctx: Context, roster: list, spec) -> list:
    if spec == "all":
        return egta.all_profiles(roster, ctx.environment.n)
    out = []
    for text in spec:
        names = [_canonical(s) for s in (text.split(egta.PROFILE_SEP) if isinstance(text, str) else text)]
        out.append(egta.Profile.of(names))
    return out


def cmd_simulate(ctx: Context) -> str:
    opts = ctx.section("egta", EGTA_DEFAULTS)
    roster = _roster(ctx)
    game = egta.EmpiricalGame(ctx.environment.n, roster)
    for profile in _profiles(ctx, roster, opts["profiles"]):
        stats = egta.simulate_profile(profile, ctx.environment, int(opts["instances"]), ctx.seed,
                                      ctx.resolver, workers=ctx.workers)
        game.add(profile, stats)
        logger.info("simulated %s", profile)
    path = ctx.write(Path(opts["payoffs"]).name, game.to_csv(ctx.header()))
    return f"simulated {len(game.table)} profiles x {opts['instances']} instances; wrote {path}"


def _load_game(ctx: Context, opts: dict) -> egta.EmpiricalGame:
    name = Path(opts["payoffs"])
    for candidate in (ctx.out / name.name, ctx.resolve(name)):
        if candidate.exists():
            return egta.EmpiricalGame.from_csv(candidate.read_text(),
                                               _roster(ctx) if ctx.config.get("strategies") else ())
    raise ConfigurationError(f"payoff table {name} not found; run 'simossb simulate' first")


def cmd_egta_regret(ctx: Context) -> str:
    opts = ctx.section("egta", EGTA_DEFAULTS)
    game = _load_game(ctx, opts)
    rows = []
    for profile in game.profiles():
        try:
            r = egta.regret(game, profile)
        except egta.IncompleteGameError:
            r = float("nan")
        rows.append([str(profile), repr(r)])
    path = ctx.write_csv("regret.csv", ["profile", "regret"], rows)
    finite = [float(r) for _, r in rows if r != "nan"]
    best = min(finite) if finite else float("nan")
    return f"regret for {len(rows)} profiles (min {best:.4g}); wrote {path}"


def cmd_egta_solve(ctx: Context) -> str:
    opts = ctx.section("egta", EGTA_DEFAULTS)
    game = _load_game(ctx, opts)
    reports = egta.solve(game, float(opts["tolerance"]), int(opts["resamples"]), float(opts["quantile"]),
                         derive_rng(ctx.seed, "egta-solve"), int(opts["iterations"]), int(opts["starts"]))
    text = egta.equilibria_json(reports, {"provenance": ctx.provenance(), "tolerance": float(opts["tolerance"]),
                                          "quantile": float(opts["quantile"])})
    path = ctx.write("equilibria.json", text)
    confirmed = sum(r.confirmed for r in reports)
    return f"{confirmed} confirmed of {len(reports)} candidate equilibria; wrote {path}"


def cmd_oracle_compare(ctx: Context) -> str:
    opts = ctx.section("oracle", ORACLE_DEFAULTS)
    pred = _prediction(ctx, opts["prediction"] or "uniform")
    names = opts["strategies"] or ctx.config.get("strategies")
    if not names:
        raise ConfigurationError("oracle.strategies (or top-level strategies) is required")
    summaries = []
    for name in names:
        spec = parse_spec(str(name))
        s = oracle.optimality_ratio(spec, ctx.environment, pred, int(opts["trials"]),
                                    float(opts["grid_step"]), ctx.seed, ctx.resolver)
        rows = [[i, repr(float(a)), repr(float(b))] for i, (a, b) in enumerate(zip(s.strategy_eu, s.optimal_eu))]
        ctx.write_csv(f"oracle_{_filename(s.strategy)}.csv", ["trial", "strategy_eu", "optimal_eu"], rows)
        summaries.append(f"{s.strategy}={s.ratio:.4f}")
    return "optimality ratios: " + ", ".join(summaries) + f"; wrote {len(summaries)} files to {ctx.out}"


def _filename(spec: str) -> str:
    return "".join(c if c.isalnum() or c in "_-." else "_" for c in spec)


COMMANDS = {
    ("valuation", "sample"): cmd_valuation_sample,
    ("scpp", "derive"): cmd_scpp_derive,
    ("scpp", "verify"): cmd_scpp_verify,
    ("simulate", None): cmd_simulate,
    ("egta", "regret"): cmd_egta_regret,
    ("egta", "solve"): cmd_egta_solve,
    ("oracle", "compare"): cmd_oracle_compare,
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="YAML experiment file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config 'seed')")
    parser.add_argument("--workers", type=int, default=None,
                        help="simulation worker processes (default: all cores; results do not depend on it)")
    parser.add_argument("--out", default=None, help="output directory (default: config 'out' or ./results)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


HELP = {
    "valuation": "draw valuation tables",
    "valuation sample": "write sampled valuation tables to CSV",
    "scpp": "derive and check self-confirming price predictions",
    "scpp derive": "iterate play on a prediction until it reproduces itself",
    "scpp verify": "score a saved prediction against a fresh tally",
    "simulate": "estimate payoffs for strategy profiles",
    "egta": "analyse the empirical game",
    "egta regret": "regret of every simulated profile",
    "egta solve": "replicator search for symmetric mixed equilibria",
    "oracle": "compare strategies with the exhaustive grid optimum",
    "oracle compare": "per-trial strategy vs optimal expected utility",
}


def build_parser() -> argparse.ArgumentParser:
    defaults = (f"scpp defaults: {SCPP_DEFAULTS}\negta defaults: {EGTA_DEFAULTS}\n"
                f"oracle defaults: {ORACLE_DEFAULTS}\nvaluation defaults: {VALUATION_DEFAULTS}")
    parser = argparse.ArgumentParser(prog="simossb", description="Simultaneous sealed-bid auction laboratory.",
                                     epilog=defaults, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    groups: dict = {}
    for (command, action) in COMMANDS:
        if action is None:
            _common(sub.add_parser(command, help=HELP[command]))
            continue
        if command not in groups:
            group = sub.add_parser(command, help=HELP[command])
            groups[command] = group.add_subparsers(dest="action", required=True)
        _common(groups[command].add_parser(action, help=HELP[f"{command} {action}"]))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[(args.command, getattr(args, "action", None))]
    try:
        ctx = make_context(args)
        print(handler(ctx))
    except SpecParseError as exc:
        print(f"error: cannot parse strategy near {exc.token!r}: {exc}", file=sys.stderr)
        return 2
    except (SimOSSBError, OSError, ValueError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
