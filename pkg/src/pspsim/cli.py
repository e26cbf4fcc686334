"""Command line runner for the auction experiments.

    pspsim reserve-sweep   reserve-price table from Algorithm 2 ensembles
    pspsim latency-sweep   event simulation across communication-latency scales
    pspsim twins           industrious vs lazy twin buyers
    pspsim run             one driver or simulation run with full trace
    pspsim gen-population  write a sampled population file

Settings come from built-in defaults, then an optional INI file
(``--config``), then command line flags. Exit status: 0 on success, 2 for
an invalid configuration, 3 if a driver did not converge, 4 if a
simulation hit its time limit.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .artifacts import metadata, write_csv, write_json, write_jsonl
from .auction import OUTCOME_COLUMNS, outcome_rows
from .experiments import DRIVERS, initial_bids, realization_rows, reserve_sweep, reserve_table
from .sim import QUIESCENT, SimConfig, run_simulation, run_twins, sweep_comm_scale
from .stochastic import DelayModel
from .strategy import StrategyParams, verify_epsilon_nash
from .valuation import (read_population, sample_population, twin_population,
                        write_population)

log = logging.getLogger("pspsim")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3
EXIT_TIMEOUT = 4


class ConfigError(ValueError):
    pass


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    out = [float(x) for x in str(text).replace(",", " ").split()]
    if not out:
        raise ValueError("empty list")
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    section: Optional[str]    # INI section; None means flag only
    kind: Any
    default: Any
    help: str
    key: Optional[str] = None

    @property
    def ini_key(self) -> str:
        return self.key or self.name


OPTIONS = {o.name: o for o in [
    Opt("seed", None, int, 1, "master seed"),
    Opt("out", "output", str, None, "output directory (gen-population: output file)", "dir"),
    Opt("figures", "output", _bool, True, "render PNG figures next to the tables"),
    Opt("jobs", "output", int, 1, "worker processes for ensemble members"),
    Opt("buyers", "population", int, 100, "number of buyers n"),
    Opt("quantity", "population", float, None, "resource supply Q (default: 1000, or the file's)"),
    Opt("pop_seed", "population", int, None, "population seed (default: master seed)", "seed"),
    Opt("population", "population", str, None, "read buyers from a population file", "file"),
    Opt("qbar_min", "population", float, 50.0, "smallest qbar"),
    Opt("qbar_max", "population", float, 100.0, "largest qbar"),
    Opt("pbar_min", "population", float, 10.0, "smallest pbar"),
    Opt("pbar_max", "population", float, 20.0, "largest pbar"),
    Opt("epsilon", "market", float, 5.0, "bid fee epsilon"),
    Opt("reserve", "market", float, 12.0, "seller reserve price P"),
    Opt("reserves", "market", _floats, [0.0, 6.0, 12.0, 14.0, 16.0], "reserve prices to sweep"),
    Opt("ensemble", "ensemble", int, 100, "ensemble size", "size"),
    Opt("driver", "strategy", str, "alg2", "alg1, alg2 or sim (run only)"),
    Opt("tolerance", "strategy", float, 1e-10, "compromise-move tolerance for alg2"),
    Opt("max_rounds", "strategy", int, 10_000, "round cap for the drivers"),
    Opt("interleave", "strategy", str, "phases", "alg2 update order: phases or per-buyer"),
    Opt("verify", "strategy", _bool, True, "check every final state for epsilon-Nash"),
    Opt("exclude_nonconverged", "strategy", _bool, False,
        "drop non-converged realizations from the averages"),
    Opt("scales", "sim", _floats, [1.0, 5.0, 10.0, 20.0], "communication latency scales"),
    Opt("comm_scale", "sim", float, 1.0, "communication latency scale"),
    Opt("factor", "sim", float, 17.0, "laziness factor for the second half of the twins"),
    Opt("pair", "sim", int, None, "twin pair to trace (default: highest pbar)"),
    Opt("window", "sim", float, None, "quiescence window in seconds", "quiescence_window"),
    Opt("max_sim_time", "sim", float, 1e5, "simulated-time limit in seconds"),
    Opt("trace_level", "sim", int, 1, "0 none, 1 sends and activations, 2 every evaluation"),
    Opt("resend_lagging", "sim", _bool, False, "resend the last bid when it has not landed"),
    Opt("comm_delta", "sim", float, 0.1, "communication delay translation"),
    Opt("comm_lambda", "sim", float, 1.0, "communication delay scale"),
    Opt("comm_beta", "sim", float, 0.75, "communication delay shape"),
    Opt("eval_delta", "sim", float, 1.0, "evaluation interval translation"),
    Opt("eval_lambda", "sim", float, 0.25, "evaluation interval scale"),
    Opt("eval_beta", "sim", float, 1.5, "evaluation interval shape"),
]}

_POP = ["buyers", "quantity", "pop_seed", "population", "qbar_min", "qbar_max",
        "pbar_min", "pbar_max"]
_DELAYS = ["comm_delta", "comm_lambda", "comm_beta", "eval_delta", "eval_lambda", "eval_beta"]
_SIM = ["window", "max_sim_time", "resend_lagging"] + _DELAYS
_DRIVE = ["tolerance", "max_rounds", "interleave"]
_COMMON = ["seed", "out", "figures", "jobs", "epsilon", "verify"]

COMMANDS = {
    "reserve-sweep": _COMMON + _POP + _DRIVE + ["reserves", "ensemble", "driver",
                                                 "exclude_nonconverged"],
    "latency-sweep": _COMMON + _POP + _SIM + ["reserve", "scales", "ensemble"],
    "twins": _COMMON + _POP + _SIM + ["reserve", "comm_scale", "factor", "pair", "ensemble"],
    "run": _COMMON + _POP + _DRIVE + _SIM + ["reserve", "driver", "comm_scale", "trace_level"],
    "gen-population": ["seed", "out"] + _POP,
}

DEFAULT_OUT = {"gen-population": "population.txt"}
# settings that change where or how fast results are written, never what they are
_NOT_HASHED = {"out", "figures", "jobs"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pspsim", description=__doc__.split("\n\n")[0],
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"pspsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, names in COMMANDS.items():
        p = sub.add_parser(command, help=_HELP[command], description=_HELP[command])
        p.add_argument("--config", help="INI file; flags override its values")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
        for name in names:
            o = OPTIONS[name]
            flag = "--" + name.replace("_", "-")
            shown = DEFAULT_OUT.get(command, f"out/{command}") if name == "out" else o.default
            if o.kind is _bool:
                p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction,
                               default=None, help=f"{o.help} (default: {shown})")
            else:
                p.add_argument(flag, dest=name, default=None,
                               help=f"{o.help} (default: {shown})")
    return parser


_HELP = {
    "reserve-sweep": "ensemble averages across reserve prices",
    "latency-sweep": "event simulation across communication-latency scales",
    "twins": "industrious and lazy buyers with identical valuations",
    "run": "single run with full trace and outcome",
    "gen-population": "sample a buyer population and write it to a file",
}


def _parse(o: Opt, raw):
    try:
        return o.kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {o.name}: {raw!r} ({exc})") from None


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the INI file, then explicit flags."""
    names = COMMANDS[command]
    settings = {n: OPTIONS[n].default for n in names}
    if "out" in settings:
        settings["out"] = DEFAULT_OUT.get(command, f"out/{command}")
    if getattr(args, "config", None):
        ini = configparser.ConfigParser()
        if not ini.read(args.config):
            raise ConfigError(f"cannot read config file {args.config}")
        by_key = {(OPTIONS[n].section, OPTIONS[n].ini_key): n for n in names
                  if OPTIONS[n].section}
        for section in ini.sections():
            for key, raw in ini.items(section, raw=True):
                if (section, key) in by_key:
                    name = by_key[(section, key)]
                    settings[name] = _parse(OPTIONS[name], raw)
                elif not _known_elsewhere(section, key):
                    raise ConfigError(f"unknown setting [{section}] {key}")
    for n in names:
        raw = getattr(args, n, None)
        if raw is not None:
            settings[n] = _parse(OPTIONS[n], raw)
    _validate(command, settings)
    return settings


def _known_elsewhere(section, key) -> bool:
    # one INI file may carry settings for several subcommands
    return any(o.section == section and o.ini_key == key for o in OPTIONS.values())


def _validate(command, s):
    if s.get("driver") is not None:
        allowed = ("alg1", "alg2", "sim") if command == "run" else ("alg1", "alg2")
        if s["driver"] not in allowed:
            raise ConfigError(f"driver must be one of {allowed}")
    for name in ("ensemble", "buyers", "jobs", "max_rounds"):
        if name in s and s[name] < 1:
            raise ConfigError(f"{name} must be at least 1")
    if command == "twins" and s["population"] is None and s["buyers"] % 2:
        raise ConfigError("twins need an even number of buyers")
    if "trace_level" in s and s["trace_level"] not in (0, 1, 2):
        raise ConfigError("trace_level must be 0, 1 or 2")


# -- building blocks ----------------------------------------------------------


def load_population(s: dict, twins: bool = False):
    reserve = s.get("reserve", 0.0)
    if s["population"]:
        pop = read_population(s["population"])
        quantity = pop.quantity if s["quantity"] is None else s["quantity"]
        return type(pop)(pop.buyers, quantity, reserve)
    seed = s["seed"] if s["pop_seed"] is None else s["pop_seed"]
    n = s["buyers"] // 2 if twins else s["buyers"]
    quantity = 1000.0 if s["quantity"] is None else s["quantity"]
    pop = sample_population(n, seed, (s["qbar_min"], s["qbar_max"]),
                            (s["pbar_min"], s["pbar_max"]), quantity, reserve)
    return twin_population(pop) if twins else pop


def _reproducible(s: dict) -> dict:
    return {k: v for k, v in s.items() if k not in _NOT_HASHED}


def _hashed(command: str, s: dict) -> dict:
    out = _reproducible(s)
    out["command"] = command
    if s.get("population"):
        out["population"] = hashlib.sha256(Path(s["population"]).read_bytes()).hexdigest()
    return out


def _params(s) -> StrategyParams:
    return StrategyParams(s["epsilon"], s["tolerance"], s["max_rounds"], s["interleave"])


def _sim_config(s, pop, **extra) -> SimConfig:
    comm = DelayModel(s["comm_delta"], s["comm_lambda"], s["comm_beta"])
    ev = DelayModel(s["eval_delta"], s["eval_lambda"], s["eval_beta"])
    return SimConfig(pop, epsilon=s["epsilon"], comm=comm, eval=ev,
                     quiescence_window=s["window"], max_sim_time=s["max_sim_time"],
                     resend_lagging=s["resend_lagging"], verify=s["verify"], **extra)


def _sim_record(k: int, r) -> dict:
    o = r.outcome
    return {"realization": k, "reason": r.reason, "end_time": r.end_time,
            "activations": r.activations, "evaluations": r.evaluations,
            "nash_ok": None if r.nash is None else r.nash.ok,
            "nash_worst_gain": None if r.nash is None else r.nash.worst_gain,
            "aggregates": o.aggregates(), "allocation": o.allocation, "value": o.value,
            "cost": o.cost, "utility": o.utility}


def _stats_dict(st) -> dict:
    return {"mean": st.mean, "variance": st.variance, "count": st.count}


def _sim_exit(runs) -> int:
    return EXIT_OK if all(r.reason == QUIESCENT for r in runs) else EXIT_TIMEOUT


# -- subcommands --------------------------------------------------------------


def cmd_reserve_sweep(s, out: Path, meta: dict) -> int:
    pop = load_population(s)
    points = reserve_sweep(pop, s["reserves"], s["ensemble"], s["seed"], _params(s),
                           s["driver"], s["verify"], s["jobs"], s["exclude_nonconverged"])
    header, rows = reserve_table(points)
    write_csv(out / "table1.csv", header, rows, meta)
    header, rows = realization_rows(points)
    write_csv(out / "realizations.csv", header, rows, meta)
    write_json(out / "summary.json", {
        "experiment": "reserve-sweep", "settings": _reproducible(s),
        "points": [{"reserve": p.reserve, "realizations": len(p.runs), "included": p.included,
                    "converged": p.converged, "nash_failures": p.nash_failures,
                    **{k: _stats_dict(getattr(p, k)) for k in
                       ("mean_price", "total_value", "total_utility", "revenue", "buyback")}}
                   for p in points]}, meta)
    if s["figures"]:
        from .plots import reserve_figure
        reserve_figure(points, out / "table1.png")
    for p in points:
        print(f"P={p.reserve:g}  E[p]={p.mean_price.mean:.4f}  S[v]={p.total_value.mean:.2f}  "
              f"S[u]={p.total_utility.mean:.2f}  S[c]={p.revenue.mean:.4g}  "
              f"converged {p.converged}/{len(p.runs)}")
    ok = all(p.converged == len(p.runs) for p in points)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_latency_sweep(s, out: Path, meta: dict) -> int:
    pop = load_population(s)
    cfg = _sim_config(s, pop)
    results = sweep_comm_scale(cfg, s["scales"], s["ensemble"], s["seed"], s["jobs"])
    agg_header = ["scale", "mean_price", "mean_price_sd", "total_utility", "total_utility_sd",
                  "total_value", "total_value_sd", "revenue", "revenue_sd", "realizations",
                  "quiescent", "nash_failures"]
    agg, per, records = [], [], []
    for scale, S in results:
        agg.append([scale, S.mean_price.mean, S.mean_price.std, S.total_utility.mean,
                    S.total_utility.std, S.total_value.mean, S.total_value.std, S.revenue.mean,
                    S.revenue.std, S.size, S.quiescent, S.nash_failures])
        for i in range(S.value_mean.size):
            per.append([scale, i + 1, S.allocation_mean[i]]
                       + [x for name in ("value", "cost", "utility") for x in _mean_sd(S, name, i)])
        records += [{"scale": scale, **_sim_record(k, r)} for k, r in enumerate(S.runs)]
    write_csv(out / "aggregates.csv", agg_header, agg, meta)
    write_csv(out / "buyers.csv", ["scale", "buyer", "allocation", "value", "value_sd", "cost",
                                   "cost_sd", "utility", "utility_sd"], per, meta)
    write_jsonl(out / "realizations.jsonl", records, meta)
    write_json(out / "summary.json", {
        "experiment": "latency-sweep", "settings": _reproducible(s),
        "scales": [{"scale": scale, "realizations": S.size, "quiescent": S.quiescent,
                    "nash_failures": S.nash_failures,
                    "mean_price": _stats_dict(S.mean_price),
                    "total_utility": _stats_dict(S.total_utility)} for scale, S in results]},
        meta)
    if s["figures"]:
        from .plots import latency_figure
        latency_figure(results, out / "latency.png")
    for scale, S in results:
        print(f"scale={scale:g}  <E[p]>={S.mean_price.mean:.4f}  <S[u]>={S.total_utility.mean:.2f}"
              f"  quiescent {S.quiescent}/{S.size}")
    return _sim_exit([r for _, S in results for r in S.runs])


def _mean_sd(S, name, i):
    var = getattr(S, f"{name}_var")
    return getattr(S, f"{name}_mean")[i], None if var is None else var[i] ** 0.5


def cmd_twins(s, out: Path, meta: dict) -> int:
    pop = load_population(s, twins=True)
    cfg = _sim_config(s, pop, comm_scale=s["comm_scale"])
    T = run_twins(cfg, s["factor"], s["ensemble"], s["seed"], s["pair"], s["jobs"])
    m, S = T.half, T.summary
    rows = []
    for k in range(m):
        rows.append([k + 1, k + 1, k + 1 + m, *_mean_sd(S, "utility", k),
                     *_mean_sd(S, "utility", k + m), T.pair_diff[k], T.pair_sd[k]])
    write_csv(out / "pairs.csv", ["pair", "industrious", "lazy", "utility", "utility_sd",
                                  "lazy_utility", "lazy_utility_sd", "difference", "pooled_sd"],
              rows, meta)
    a, b = T.watch
    write_csv(out / "transient.csv", ["time", f"utility_{a}", f"utility_{b}"], T.transient, meta)
    write_jsonl(out / "realizations.jsonl", [_sim_record(k, r) for k, r in enumerate(S.runs)],
                meta)
    write_json(out / "summary.json", {
        "experiment": "twins", "settings": _reproducible(s), "factor": T.factor, "watch": list(T.watch),
        "realizations": S.size, "quiescent": S.quiescent, "nash_failures": S.nash_failures,
        "pair_difference": T.pair_diff, "pooled_sd": T.pair_sd}, meta)
    if s["figures"]:
        from .plots import twins_figure
        twins_figure(T, out / "twins.png")
    print(f"pairs={m}  max |<u_i> - <u_i+m>|={abs(T.pair_diff).max():.4f}  "
          f"quiescent {S.quiescent}/{S.size}")
    return _sim_exit(S.runs)


def cmd_run(s, out: Path, meta: dict) -> int:
    pop = load_population(s)
    if s["driver"] == "sim":
        cfg = _sim_config(s, pop, comm_scale=s["comm_scale"], trace_level=s["trace_level"])
        r = run_simulation(cfg, s["seed"])
        result, trace, nash = r.outcome, r.trace, r.nash
        info = {"reason": r.reason, "end_time": r.end_time, "activations": r.activations,
                "evaluations": r.evaluations}
        status = _sim_exit([r])
    else:
        trace = [] if s["trace_level"] > 0 else None
        res = DRIVERS[s["driver"]](pop, initial_bids(pop, s["seed"], 0), _params(s), trace)
        result = res.outcome
        nash = verify_epsilon_nash(res.profile, pop, s["epsilon"]) if s["verify"] else None
        info = {"converged": res.converged, "rounds": res.rounds, "updates": res.updates}
        status = EXIT_OK if res.converged else EXIT_NONCONVERGED
    write_csv(out / "outcome.csv", list(OUTCOME_COLUMNS),
              outcome_rows(result, pop.reserve_price, pop.quantity), meta)
    write_jsonl(out / "trace.jsonl", trace or [], meta)
    write_json(out / "summary.json", {
        "experiment": "run", "settings": _reproducible(s), **info, "aggregates": result.aggregates(),
        "nash": None if nash is None else {"ok": nash.ok, "worst_gain": nash.worst_gain,
                                           "worst_buyer": nash.worst_buyer}}, meta)
    if s["figures"]:
        from .plots import outcome_figure
        outcome_figure(result, out / "outcome.png")
    agg = result.aggregates()
    print("  ".join(f"{k}={v:.6g}" for k, v in agg.items() if v is not None))
    if nash is not None:
        print(f"epsilon-Nash: {'ok' if nash.ok else 'FAILED'} "
              f"(worst gain {nash.worst_gain:.4g}, buyer {nash.worst_buyer})")
    return status


def cmd_gen_population(s, out: Path, meta: dict) -> int:
    pop = load_population(s)
    write_population(pop, out, [f"{k} {meta[k]}" for k in sorted(meta)])
    print(f"wrote {pop.n} buyers to {out}")
    return EXIT_OK


HANDLERS = {"reserve-sweep": cmd_reserve_sweep, "latency-sweep": cmd_latency_sweep,
            "twins": cmd_twins, "run": cmd_run, "gen-population": cmd_gen_population}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve(args.command, args)
        meta = metadata(_hashed(args.command, s), s["seed"])
        out = Path(s["out"])
        if args.command == "gen-population":
            out.parent.mkdir(parents=True, exist_ok=True)
        else:
            out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](s, out, meta)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"pspsim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
