"""Ensemble experiments built on the drivers: reserve-price sweeps and single runs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .auction import BidProfile
from .stochastic import EnsembleStats, ensemble_stats, random_initial_bids, substream
from .strategy import (DriverResult, NashCheck, StrategyParams, run_alternating_driver,
                       run_best_reply_driver, verify_epsilon_nash)
from .valuation import Population

DRIVERS = {"alg1": run_best_reply_driver, "alg2": run_alternating_driver}


@dataclass
class DriverRun:
    realization: int
    result: DriverResult
    nash: Optional[NashCheck]


def initial_bids(pop: Population, seed: int, realization: int) -> BidProfile:
    """Random truthful start for one realization; independent of the reserve price."""
    return random_initial_bids(pop, substream(seed, "initial", realization))


def _drive(args) -> DriverRun:
    pop, seed, r, params, driver, verify = args
    res = DRIVERS[driver](pop, initial_bids(pop, seed, r), params)
    nash = verify_epsilon_nash(res.profile, pop, params.epsilon) if verify else None
    return DriverRun(r, res, nash)


def driver_ensemble(pop: Population, ensemble: int, seed: int, params: StrategyParams,
                    driver: str = "alg2", verify: bool = True, jobs: int = 1) -> list[DriverRun]:
    if driver not in DRIVERS:
        raise ValueError(f"unknown driver {driver!r}")
    if ensemble < 1:
        raise ValueError("ensemble must have at least one member")
    tasks = [(pop, seed, r, params, driver, verify) for r in range(ensemble)]
    if jobs <= 1:
        return [_drive(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_drive, tasks))


@dataclass
class ReservePoint:
    """Ensemble averages of one column of the reserve-price table."""

    reserve: float
    runs: list = field(repr=False)
    included: int
    converged: int
    nash_failures: int
    mean_price: EnsembleStats
    total_value: EnsembleStats
    total_utility: EnsembleStats
    revenue: EnsembleStats
    buyback: EnsembleStats


def _stats(xs) -> EnsembleStats:
    if not xs:
        return EnsembleStats(math.nan, None, 0)
    return ensemble_stats(xs)


def summarize_driver_runs(reserve: float, runs: list[DriverRun],
                          exclude_nonconverged: bool = False) -> ReservePoint:
    kept = [r for r in runs if r.result.converged or not exclude_nonconverged]
    outs = [r.result.outcome for r in kept]
    prices = [math.nan if o.mean_price is None else o.mean_price for o in outs]
    return ReservePoint(
        reserve=reserve, runs=runs, included=len(kept),
        converged=sum(r.result.converged for r in runs),
        nash_failures=sum(r.nash is not None and not r.nash.ok for r in runs),
        mean_price=_stats(prices),
        total_value=_stats([o.total_value for o in outs]),
        total_utility=_stats([o.total_utility for o in outs]),
        revenue=_stats([o.revenue for o in outs]),
        buyback=_stats([o.buyback for o in outs]))


def reserve_sweep(pop: Population, reserves, ensemble: int, seed: int,
                  params: StrategyParams = StrategyParams(), driver: str = "alg2",
                  verify: bool = True, jobs: int = 1,
                  exclude_nonconverged: bool = False) -> list[ReservePoint]:
    """One driver ensemble per reserve price, all sharing the same initial quantities."""
    if len(reserves) == 0:
        raise ValueError("need at least one reserve price")
    points = []
    for P in reserves:
        runs = driver_ensemble(pop.with_reserve(float(P)), ensemble, seed, params,
                               driver, verify, jobs)
        points.append(summarize_driver_runs(float(P), runs, exclude_nonconverged))
    return points


TABLE_ROWS = ("Reserve Price", "Bid Price", "Total Value", "Total Utility", "Total Revenue")


def reserve_table(points: list[ReservePoint]) -> tuple[list, list]:
    """Header and rows in the reserve-price table layout.

    The first five rows are the table itself (ensemble means). Standard
    deviations of the four outcome rows follow, then realization counts.
    """
    header = ["quantity"] + [f"P={p.reserve:g}" for p in points]
    fields = ("mean_price", "total_value", "total_utility", "revenue")
    rows = [[TABLE_ROWS[0]] + [p.reserve for p in points]]
    for label, name in zip(TABLE_ROWS[1:], fields):
        rows.append([label] + [getattr(p, name).mean for p in points])
    for label, name in zip(TABLE_ROWS[1:], fields):
        rows.append([label + " sd"] + [getattr(p, name).std for p in points])
    rows.append(["Buyback"] + [p.buyback.mean for p in points])
    rows.append(["Realizations"] + [len(p.runs) for p in points])
    rows.append(["Converged"] + [p.converged for p in points])
    rows.append(["Nash failures"] + [p.nash_failures for p in points])
    return header, rows


def realization_rows(points: list[ReservePoint]) -> tuple[list, list]:
    header = ["reserve", "realization", "converged", "rounds", "updates", "mean_price",
              "total_value", "total_utility", "revenue", "buyback", "nash_worst_gain"]
    rows = []
    for p in points:
        for r in p.runs:
            o = r.result.outcome
            rows.append([p.reserve, r.realization, r.result.converged, r.result.rounds,
                         r.result.updates, o.mean_price, o.total_value, o.total_utility,
                         o.revenue, o.buyback, None if r.nash is None else r.nash.worst_gain])
    return header, rows
