"""Truthful bidding rules and the deterministic round-robin drivers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .auction import Bid, BidProfile, MarketOutcome, OpposingBids, outcome
from .valuation import Population, Valuation


@dataclass(frozen=True)
class StrategyParams:
    epsilon: float = 5.0
    compromise_tolerance: float = 1e-10
    max_rounds: int = 10_000
    # "phases": all epsilon-best replies, then all compromise replies, per round.
    # "per-buyer": each buyer makes both replies back to back.
    interleave: str = "phases"

    def __post_init__(self):
        if self.epsilon <= 0 or self.compromise_tolerance <= 0 or self.max_rounds < 1:
            raise ValueError(f"invalid strategy parameters {self}")
        if self.interleave not in ("phases", "per-buyer"):
            raise ValueError(f"unknown interleave {self.interleave!r}")


def max_feasible_quantity(view: OpposingBids, v: Valuation) -> float:
    """Largest ``z <= qbar`` such that ``z`` is available at the marginal value of ``z``.

    Availability at the marginal price only drops where the falling
    marginal value crosses an opposing price, so the condition is checked
    exactly on each segment between those crossings.
    """
    qbar, pbar = v.qbar, v.pbar
    levels, level_q = view.levels, view.level_q
    # any positive quantity is bid below these prices
    base = level_q[levels >= pbar].sum()
    mid = (levels > 0) & (levels < pbar)
    prices = levels[mid][::-1]
    qty = level_q[mid][::-1]
    bounds = np.concatenate(([0.0], qbar * (1.0 - prices / pbar), [qbar]))
    demand = base + np.concatenate(([0.0], np.cumsum(qty)))
    room = np.maximum(view.supply - demand, 0.0)
    feasible = room > bounds[:-1]
    if not feasible.any():
        return 0.0
    return float(np.minimum(bounds[1:], room)[feasible].max())


def sup_G(buyer: int, view: OpposingBids, v: Valuation) -> float:
    """Supremum of the feasible quantities of ``buyer`` against ``view``."""
    return max_feasible_quantity(view, v)


def in_feasible_set(view: OpposingBids, v: Valuation, z: float) -> bool:
    return 0 <= z <= v.qbar and z <= view.available(v.theta_prime(z))


def epsilon_best_reply(buyer: int, view: OpposingBids, v: Valuation, epsilon: float) -> Bid:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = max(0.0, max_feasible_quantity(view, v) - epsilon / v.pbar)
    return Bid(buyer, x, v.theta_prime(x))


def compromise_reply(buyer: int, profile: BidProfile, v: Valuation) -> Bid:
    """Truthful bid halfway between what ``buyer`` asked for and what it got."""
    current = profile.bid(buyer)
    got = profile.opposing(buyer).allocation(current.quantity, current.price)
    x = 0.5 * (got + current.quantity)
    return Bid(buyer, x, v.theta_prime(x))


def estimated_utility(buyer: int, view: OpposingBids, candidate: Bid, v: Valuation) -> float:
    if candidate.buyer != buyer:
        raise ValueError("candidate bid belongs to another buyer")
    return float(view.utility(v, candidate.quantity, candidate.price))


@dataclass
class DriverResult:
    profile: BidProfile
    outcome: MarketOutcome
    rounds: int
    converged: bool
    updates: int
    trace: Optional[list] = field(default=None, repr=False)


class _Book:
    """Mutable bid arrays owned by one driver."""

    def __init__(self, profile: BidProfile):
        self.supply = profile.supply
        self.reserve = profile.reserve_price
        self.q = profile.quantities.copy()
        self.p = profile.prices.copy()

    def view(self, i: int) -> OpposingBids:
        return OpposingBids(np.delete(self.q, i), np.delete(self.p, i), self.supply)

    def reply(self, i: int, v: Valuation, eps: float, ref_q: float, ref_p: float):
        """Epsilon-best reply ``(x, w)`` of buyer ``i`` and its gain over a reference bid."""
        return _kernels.reply_gain(self.q, self.p, self.supply, i, v.qbar, v.pbar, eps,
                                   ref_q, ref_p)

    def allocation(self, i: int) -> float:
        return _kernels.own_allocation(self.q, self.p, self.supply, i)

    def utility(self, i: int, v: Valuation) -> float:
        return float(_kernels.utilities(self.q, self.p, self.supply, i, v.qbar, v.pbar,
                                        self.q[i:i + 1], self.p[i:i + 1])[0])

    def set(self, i: int, x: float, w: float):
        self.q[i], self.p[i] = x, w

    def snapshot(self) -> BidProfile:
        return BidProfile(self.supply, self.reserve, self.q, self.p)


def _best_reply_step(book: _Book, i: int, v: Valuation, eps: float, rnd: int, trace):
    x, w, gain = book.reply(i, v, eps, book.q[i], book.p[i])
    if gain >= eps:
        if trace is not None:
            trace.append({"round": rnd, "phase": "best", "buyer": i,
                          "old": [float(book.q[i]), float(book.p[i])],
                          "new": [x, w], "gain": gain})
        book.set(i, x, w)
        return True
    return False


def _compromise_step(book: _Book, i: int, v: Valuation, rnd: int, trace) -> float:
    got = book.allocation(i)
    x = 0.5 * (got + book.q[i])
    change = abs(x - book.q[i])
    if trace is not None and change > 0:
        trace.append({"round": rnd, "phase": "compromise", "buyer": i,
                      "old": [float(book.q[i]), float(book.p[i])],
                      "new": [float(x), v.theta_prime(x)], "gain": None})
    book.set(i, x, v.theta_prime(x))
    return change


def run_best_reply_driver(pop: Population, initial: BidProfile, params: StrategyParams,
                          trace: Optional[list] = None) -> DriverResult:
    """Round-robin truthful epsilon-best replies until a full round changes nothing.

    A buyer switches to its epsilon-best reply only when that raises its
    utility, against the current bids of everyone else, by at least epsilon.
    """
    book = _Book(initial)
    updates = 0
    for rnd in range(1, params.max_rounds + 1):
        changed = 0
        for i in pop.ids:
            changed += _best_reply_step(book, i, pop[i], params.epsilon, rnd, trace)
        updates += changed
        if not changed:
            final = book.snapshot()
            return DriverResult(final, outcome(final, pop), rnd, True, updates, trace)
    final = book.snapshot()
    return DriverResult(final, outcome(final, pop), params.max_rounds, False, updates, trace)


def run_alternating_driver(pop: Population, initial: BidProfile, params: StrategyParams,
                           trace: Optional[list] = None) -> DriverResult:
    """Alternate gated epsilon-best replies with unconditional compromise replies.

    Stops once a round has no epsilon-best update and every compromise
    moved its quantity by less than ``params.compromise_tolerance``.
    """
    book = _Book(initial)
    eps, tol = params.epsilon, params.compromise_tolerance
    updates = 0
    for rnd in range(1, params.max_rounds + 1):
        best_updates = 0
        biggest_move = 0.0
        if params.interleave == "phases":
            for i in pop.ids:
                best_updates += _best_reply_step(book, i, pop[i], eps, rnd, trace)
            for i in pop.ids:
                biggest_move = max(biggest_move, _compromise_step(book, i, pop[i], rnd, trace))
        else:
            for i in pop.ids:
                best_updates += _best_reply_step(book, i, pop[i], eps, rnd, trace)
                biggest_move = max(biggest_move, _compromise_step(book, i, pop[i], rnd, trace))
        updates += best_updates
        if best_updates == 0 and biggest_move < tol:
            final = book.snapshot()
            return DriverResult(final, outcome(final, pop), rnd, True, updates, trace)
    final = book.snapshot()
    return DriverResult(final, outcome(final, pop), params.max_rounds, False, updates, trace)


@dataclass(frozen=True)
class NashCheck:
    ok: bool
    worst_gain: float
    worst_buyer: int
    gains: np.ndarray


def best_truthful_gain(profile: BidProfile, buyer: int, v: Valuation, epsilon: float,
                       grid: int = 10_000) -> float:
    """Largest utility increase over truthful bids ``(z, theta'(z))`` for one buyer.

    Scans ``grid`` evenly spaced quantities plus the exact special points:
    the feasible supremum, the epsilon-best reply and every crossing of the
    marginal value with an opposing price.
    """
    q, p = profile.quantities, profile.prices
    top = max_feasible_quantity(profile.opposing(buyer), v)
    others = np.delete(p, buyer)
    others = others[(others > 0) & (others < v.pbar)]
    crossings = v.qbar * (1.0 - others / v.pbar)
    special = np.concatenate(([top, max(0.0, top - epsilon / v.pbar)], crossings))
    zs = np.concatenate((np.linspace(0.0, v.qbar, grid + 1), special))
    ws = np.asarray(v.theta_prime(zs), dtype=float)
    cand = _kernels.utilities(q, p, profile.supply, buyer, v.qbar, v.pbar, zs, ws)
    now = _kernels.utilities(q, p, profile.supply, buyer, v.qbar, v.pbar,
                             q[buyer:buyer + 1], p[buyer:buyer + 1])[0]
    return float(cand.max() - now)


def verify_epsilon_nash(profile: BidProfile, pop: Population, epsilon: float,
                        grid: int = 10_000, slack: float = 1e-6) -> NashCheck:
    """Check that no buyer can gain more than ``epsilon`` with a truthful bid."""
    gains = np.empty(pop.n)
    for i in pop.ids:
        gains[i - 1] = best_truthful_gain(profile, i, pop[i], epsilon, grid)
    worst = int(np.argmax(gains))
    return NashCheck(bool(gains[worst] <= epsilon + slack), float(gains[worst]), worst + 1, gains)
