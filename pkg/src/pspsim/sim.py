"""Event-driven auction with random evaluation times and bid latency.

Every buyer re-evaluates its epsilon-best reply at renewal times spaced by
its evaluation delay model. A reply that beats the buyer's previously sent
bid by at least epsilon is sent, and becomes active in the auction only
after a communication delay. Buyers read the active bids instantly.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .auction import Bid, BidProfile, MarketOutcome, outcome
from .stochastic import (DelayModel, default_delay_models, ensemble_arrays, ensemble_stats,
                         random_initial_bids, substream)
from .strategy import NashCheck, _Book, verify_epsilon_nash
from .valuation import Population

log = logging.getLogger(__name__)

EVALUATE = 0
ACTIVATE = 1

QUIESCENT = "quiescent"
TIMEOUT = "timeout"


class Event(NamedTuple):
    """Queue entry; ``(time, seq)`` is unique, so later fields never get compared."""

    time: float
    seq: int
    kind: int
    buyer: int
    bid: Optional[Bid] = None


@dataclass
class AgentConfig:
    buyer: int
    comm: DelayModel
    eval: DelayModel
    last_sent: Bid


@dataclass(frozen=True)
class SimConfig:
    population: Population
    epsilon: float = 5.0
    comm: DelayModel = field(default_factory=lambda: default_delay_models()[0])
    eval: DelayModel = field(default_factory=lambda: default_delay_models()[1])
    comm_scale: float = 1.0
    # buyer id -> (comm, eval); comm_scale is not applied on top of these
    overrides: dict = field(default_factory=dict)
    quiescence_window: Optional[float] = None
    max_sim_time: float = 1e5
    initial: Optional[BidProfile] = None
    trace_level: int = 0          # 0 none, 1 sends and activations, 2 every evaluation
    watch: tuple = ()             # buyers whose utility is sampled after each activation
    resend_lagging: bool = False  # experimental; see notes in README
    verify: bool = True

    def __post_init__(self):
        if self.epsilon <= 0 or self.comm_scale <= 0:
            raise ValueError("epsilon and comm_scale must be positive")
        window = self.window
        if window <= 0 or self.max_sim_time <= window:
            raise ValueError("need 0 < quiescence_window < max_sim_time")

    def models(self, buyer: int) -> tuple[DelayModel, DelayModel]:
        if buyer in self.overrides:
            return self.overrides[buyer]
        return self.comm.scaled(self.comm_scale, delta=False), self.eval

    @property
    def window(self) -> float:
        """Quiet time that ends a run: 50 mean evaluation intervals of the slowest buyer."""
        if self.quiescence_window is not None:
            return self.quiescence_window
        return 50.0 * max(self.models(i)[1].mean for i in self.population.ids)

    def initial_profile(self, seed: int) -> BidProfile:
        if self.initial is not None:
            return self.initial
        return random_initial_bids(self.population, substream(seed, "initial"))


@dataclass
class SimResult:
    profile: BidProfile
    outcome: MarketOutcome
    reason: str
    end_time: float
    activations: int
    evaluations: int
    nash: Optional[NashCheck]
    trace: list = field(default_factory=list, repr=False)
    watched: list = field(default_factory=list, repr=False)

    @property
    def quiescent(self) -> bool:
        return self.reason == QUIESCENT


def run_simulation(cfg: SimConfig, seed: int, realization: int = 0) -> SimResult:
    pop = cfg.population
    eps = cfg.epsilon
    start = cfg.initial_profile(seed)
    if start.n != pop.n or start.reserve_price != pop.reserve_price:
        raise ValueError("initial profile does not match the population")
    book = _Book(start)
    agents = {}
    comm_rng, eval_rng = {}, {}
    for i in pop.ids:
        comm, ev = cfg.models(i)
        agents[i] = AgentConfig(i, comm, ev, start.bid(i))
        comm_rng[i] = substream(seed, "comm", realization, i)
        eval_rng[i] = substream(seed, "eval", realization, i)

    queue: list[Event] = []
    seq = 0

    def push(t, kind, buyer, bid=None):
        nonlocal seq
        heapq.heappush(queue, Event(t, seq, kind, buyer, bid))
        seq += 1

    for i in pop.ids:
        push(agents[i].eval.from_uniform(eval_rng[i].random()), EVALUATE, i)

    window = cfg.window
    # activations so far; a buyer that held at the same count would hold again
    held_at = {i: -1 for i in pop.ids}
    held_reply = {}
    in_flight = 0
    last_activity = 0.0
    activations = evaluations = 0
    trace, watched = [], []
    reason, now = TIMEOUT, 0.0
    while queue:
        ev = queue[0]
        now = ev.time
        if in_flight == 0 and now - last_activity >= window:
            reason = QUIESCENT
            break
        if now > cfg.max_sim_time:
            now = cfg.max_sim_time
            break
        heapq.heappop(queue)
        i = ev.buyer
        agent = agents[i]
        if ev.kind == EVALUATE:
            evaluations += 1
            sent = agent.last_sent
            if held_at[i] == activations:
                cand, gain = held_reply[i]
            else:
                v = pop[i]
                x, w, gain = book.reply(i, v, eps, sent.quantity, sent.price)
                cand = Bid(i, x, w)
            send = gain >= eps
            if send:
                held_at[i] = -1
            else:
                held_at[i] = activations
                held_reply[i] = (cand, gain)
            if not send and cfg.resend_lagging and _lagging(book, agent):
                send, cand = True, sent
            if send:
                agent.last_sent = cand
                push(now + agent.comm.from_uniform(comm_rng[i].random()), ACTIVATE, i, cand)
                in_flight += 1
            if cfg.trace_level >= 2 or (cfg.trace_level == 1 and send):
                trace.append({"time": now, "event": "evaluate", "buyer": i,
                              "quantity": cand.quantity, "price": cand.price,
                              "gain": gain, "decision": "send" if send else "hold"})
            push(now + agent.eval.from_uniform(eval_rng[i].random()), EVALUATE, i)
        else:
            activations += 1
            in_flight -= 1
            last_activity = now
            book.set(i, ev.bid.quantity, ev.bid.price)
            if cfg.trace_level >= 1:
                trace.append({"time": now, "event": "activate", "buyer": i,
                              "quantity": ev.bid.quantity, "price": ev.bid.price,
                              "gain": None, "decision": "activate"})
            if cfg.watch:
                watched.append((now, *(_utility_now(book, pop, j) for j in cfg.watch)))

    final = book.snapshot()
    result = outcome(final, pop)
    nash = None
    if cfg.verify:
        nash = verify_epsilon_nash(final, pop, eps)
        if reason == QUIESCENT and not nash.ok:
            log.warning("quiescent state is not epsilon-Nash: buyer %d could gain %.4g",
                        nash.worst_buyer, nash.worst_gain)
    return SimResult(final, result, reason, now, activations, evaluations, nash, trace, watched)


def _utility_now(book: _Book, pop: Population, j: int) -> float:
    return book.utility(j, pop[j])


def _lagging(book: _Book, agent: AgentConfig) -> bool:
    sent = agent.last_sent
    return book.q[agent.buyer] != sent.quantity or book.p[agent.buyer] != sent.price


# -- ensembles ---------------------------------------------------------------


def _run_one(args):
    cfg, seed, realization = args
    return run_simulation(cfg, seed, realization)


def run_ensemble(cfg: SimConfig, ensemble: int, seed: int, jobs: int = 1,
                 first: int = 0) -> list[SimResult]:
    """Realizations ``first..ensemble-1``; they share initial bids and differ in delay draws."""
    if ensemble < 1:
        raise ValueError("ensemble must have at least one member")
    if cfg.initial is None:
        cfg = replace(cfg, initial=cfg.initial_profile(seed))
    tasks = [(cfg, seed, r) for r in range(first, ensemble)]
    if jobs <= 1:
        return [_run_one(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


@dataclass
class EnsembleSummary:
    """Ensemble statistics of the aggregates and of every buyer's outcome."""

    size: int
    quiescent: int
    nash_failures: int
    mean_price: object
    total_utility: object
    total_value: object
    revenue: object
    value_mean: np.ndarray
    value_var: Optional[np.ndarray]
    cost_mean: np.ndarray
    cost_var: Optional[np.ndarray]
    utility_mean: np.ndarray
    utility_var: Optional[np.ndarray]
    allocation_mean: np.ndarray
    runs: list = field(repr=False, default_factory=list)


def summarize(runs: list[SimResult]) -> EnsembleSummary:
    outs = [r.outcome for r in runs]
    vm, vv = ensemble_arrays([o.value for o in outs])
    cm, cv = ensemble_arrays([o.cost for o in outs])
    um, uv = ensemble_arrays([o.utility for o in outs])
    am, _ = ensemble_arrays([o.allocation for o in outs])
    prices = [o.mean_price for o in outs if o.mean_price is not None]
    return EnsembleSummary(
        size=len(runs),
        quiescent=sum(r.quiescent for r in runs),
        nash_failures=sum(1 for r in runs if r.nash is not None and not r.nash.ok),
        mean_price=ensemble_stats(prices) if prices else None,
        total_utility=ensemble_stats([o.total_utility for o in outs]),
        total_value=ensemble_stats([o.total_value for o in outs]),
        revenue=ensemble_stats([o.revenue for o in outs]),
        value_mean=vm, value_var=vv, cost_mean=cm, cost_var=cv,
        utility_mean=um, utility_var=uv, allocation_mean=am, runs=runs)


def sweep_comm_scale(cfg: SimConfig, scales, ensemble: int, seed: int,
                     jobs: int = 1) -> list[tuple[float, EnsembleSummary]]:
    """Ensemble summaries as the communication-latency scale is stretched.

    Initial bids are pinned once for the whole sweep and realization ``r``
    reuses the same delay streams at every scale.
    """
    scales = list(scales)
    if not scales:
        raise ValueError("need at least one scale")
    cfg = replace(cfg, initial=cfg.initial_profile(seed))
    return [(float(s), summarize(run_ensemble(replace(cfg, comm_scale=float(s)), ensemble,
                                              seed, jobs)))
            for s in scales]


@dataclass
class TwinsResult:
    half: int
    factor: float
    summary: EnsembleSummary
    pair_diff: np.ndarray         # <u_i> - <u_{i+m}>
    pair_sd: np.ndarray           # pooled ensemble standard deviation per pair
    transient: list               # (time, u_watch_a, u_watch_b) from realization 0
    watch: tuple


def twin_overrides(pop: Population, factor: float, comm: DelayModel, evaluation: DelayModel):
    """Delay models for the lazy half: translation and scale multiplied by ``factor``."""
    if pop.n % 2:
        raise ValueError("twin experiments need an even number of buyers")
    m = pop.n // 2
    for i in range(1, m + 1):
        if pop[i] != pop[i + m]:
            raise ValueError(f"buyer {i + m} is not a twin of buyer {i}")
    lazy = (comm.scaled(factor), evaluation.scaled(factor))
    return {i: lazy for i in range(m + 1, pop.n + 1)}


def run_twins(cfg: SimConfig, factor: float, ensemble: int, seed: int,
              pair: Optional[int] = None, jobs: int = 1) -> TwinsResult:
    pop = cfg.population
    overrides = twin_overrides(pop, factor, cfg.comm.scaled(cfg.comm_scale, delta=False), cfg.eval)
    m = pop.n // 2
    base = replace(cfg, overrides=overrides, initial=cfg.initial_profile(seed))
    if pair is None:
        pair = _representative_pair(base.initial, pop)
    watch = (pair, pair + m)
    first = run_simulation(replace(base, watch=watch), seed, 0)
    runs = [first] + (run_ensemble(base, ensemble, seed, jobs, first=1) if ensemble > 1 else [])
    summary = summarize(runs)
    u = summary.utility_mean
    diff = u[:m] - u[m:]
    if summary.utility_var is None:
        sd = np.full(m, np.nan)
    else:
        sd = np.sqrt(0.5 * (summary.utility_var[:m] + summary.utility_var[m:]))
    return TwinsResult(m, factor, summary, diff, sd, first.watched, watch)


def _representative_pair(initial: BidProfile, pop: Population) -> int:
    """The industrious buyer with the largest top marginal value; it is sure to trade."""
    m = pop.n // 2
    return int(np.argmax(pop.pbar[:m])) + 1
