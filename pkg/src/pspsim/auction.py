"""Progressive second-price market mechanics.

Bids are ``(buyer, quantity, unit price)``. The seller takes part as buyer
``0`` with the static reserve bid ``(0, Q, P)``. Allocation follows the
strict-inequality availability rule; bids tied at one price split the
supply reaching that price in proportion to their quantities, each capped
at its own request. Every bidder pays the externality it imposes on the
others.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .valuation import SELLER, Population, Valuation

log = logging.getLogger(__name__)

NEGATIVE_COST_SLACK = 1e-9


@dataclass(frozen=True)
class Bid:
    buyer: int
    quantity: float
    price: float

    def __post_init__(self):
        if self.quantity < 0 or self.price < 0:
            raise ValueError(f"bid quantity and price must be nonnegative: {self}")


class BidProfile:
    """Immutable snapshot of every active bid, indexed by buyer id.

    Position 0 always holds the seller's reserve bid ``(Q, P)``.
    """

    __slots__ = ("supply", "reserve_price", "quantities", "prices")

    def __init__(self, supply: float, reserve_price: float, quantities, prices):
        q = np.array(quantities, dtype=float)
        p = np.array(prices, dtype=float)
        if q.shape != p.shape or q.ndim != 1 or q.size < 1:
            raise ValueError("quantities and prices must be equal-length vectors")
        if q[0] != supply or p[0] != reserve_price:
            raise ValueError("slot 0 must hold the seller bid (Q, P)")
        if np.any(q < 0) or np.any(p < 0):
            raise ValueError("bids must be nonnegative")
        q.flags.writeable = False
        p.flags.writeable = False
        self.supply = float(supply)
        self.reserve_price = float(reserve_price)
        self.quantities = q
        self.prices = p

    @classmethod
    def from_arrays(cls, supply, reserve_price, buyer_quantities, buyer_prices) -> "BidProfile":
        q = np.concatenate(([supply], np.asarray(buyer_quantities, dtype=float)))
        p = np.concatenate(([reserve_price], np.asarray(buyer_prices, dtype=float)))
        return cls(supply, reserve_price, q, p)

    @classmethod
    def from_bids(cls, supply, reserve_price, bids) -> "BidProfile":
        """Build from ``Bid`` objects for buyers ``1..n`` (any order, one each)."""
        by_id = {b.buyer: b for b in bids if b.buyer != SELLER}
        n = max(by_id, default=0)
        if sorted(by_id) != list(range(1, n + 1)):
            raise ValueError("need exactly one bid for each buyer id 1..n")
        return cls.from_arrays(supply, reserve_price,
                               [by_id[i].quantity for i in range(1, n + 1)],
                               [by_id[i].price for i in range(1, n + 1)])

    @property
    def n(self) -> int:
        return self.quantities.size - 1

    def bid(self, buyer: int) -> Bid:
        return Bid(buyer, float(self.quantities[buyer]), float(self.prices[buyer]))

    @property
    def bids(self) -> dict[int, Bid]:
        return {i: self.bid(i) for i in range(self.n + 1)}

    def replace(self, bid: Bid) -> "BidProfile":
        if bid.buyer == SELLER:
            raise ValueError("the seller's reserve bid is never updated")
        if not 1 <= bid.buyer <= self.n:
            raise KeyError(bid.buyer)
        q, p = self.quantities.copy(), self.prices.copy()
        q[bid.buyer], p[bid.buyer] = bid.quantity, bid.price
        return BidProfile(self.supply, self.reserve_price, q, p)

    def opposing(self, buyer: int) -> "OpposingBids":
        """The market as seen by ``buyer``: every other bid, seller included."""
        return OpposingBids(np.delete(self.quantities, buyer), np.delete(self.prices, buyer),
                            self.supply)

    def __eq__(self, other):
        return (isinstance(other, BidProfile) and self.supply == other.supply
                and self.reserve_price == other.reserve_price
                and np.array_equal(self.quantities, other.quantities)
                and np.array_equal(self.prices, other.prices))

    def __repr__(self):
        return f"BidProfile(n={self.n}, Q={self.supply}, P={self.reserve_price})"


class OpposingBids:
    """The bids a single buyer competes against, preprocessed for fast queries.

    Supports availability and market price at any price level, plus the
    allocation and externality a hypothetical bid ``(x, w)`` from the absent
    buyer would receive and impose. The latter two are vectorized over
    candidate bids.
    """

    def __init__(self, quantities, prices, supply: float):
        q = np.asarray(quantities, dtype=float)
        p = np.asarray(prices, dtype=float)
        self.supply = float(supply)
        self.q, self.p = q, p
        levels, inv = np.unique(p, return_inverse=True)
        level_q = np.bincount(inv, weights=q, minlength=levels.size)
        # suffix[j] = total quantity bid at levels[j:], suffix[-1] = 0
        suffix = np.zeros(levels.size + 1)
        suffix[:-1] = np.cumsum(level_q[::-1])[::-1]
        self.levels, self.level_q, self.suffix = levels, level_q, suffix
        # supply reaching each price level, and how much of it the level takes
        self.level_room = np.maximum(self.supply - suffix[1:], 0.0)
        self.level_alloc = np.minimum(level_q, self.level_room)
        share = np.divide(self.level_alloc, level_q, out=np.zeros_like(level_q),
                          where=level_q > 0)
        # allocation of each opponent with the absent buyer left out
        self.allocations = q * share[inv]
        self._cum_loss = np.concatenate(([0.0], np.cumsum(levels * self.level_alloc)))

    def available(self, y):
        """Supply left after every opposing bid priced strictly above ``y``."""
        idx = np.searchsorted(self.levels, y, side="right")
        out = np.maximum(self.supply - self.suffix[idx], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def market_price(self, z: float) -> float:
        """Lowest price ``y >= 0`` at which at least ``z`` is available."""
        if z > self.supply:
            raise ValueError(f"quantity {z} exceeds supply {self.supply}")
        if z <= 0 or self.available(0.0) >= z:
            return 0.0
        ok = (self.level_room >= z) & (self.levels > 0)
        return float(self.levels[np.argmax(ok)])

    def _level_index(self, w):
        idx = np.searchsorted(self.levels, w, side="left")
        safe = np.minimum(idx, self.levels.size - 1)
        hit = (idx < self.levels.size) & (self.levels[safe] == w)
        return idx, safe, hit

    def tied_quantity(self, w):
        _, safe, hit = self._level_index(w)
        out = np.where(hit, self.level_q[safe], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def allocation(self, x, w):
        """Quantity a bid ``(x, w)`` would receive against these bids."""
        x = np.asarray(x, dtype=float)
        avail = self.available(w)
        tie = self.tied_quantity(w)
        denom = np.where(x > 0, x + tie, 1.0)
        out = np.where(x > 0, np.minimum(x, x / denom * avail), 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def externality(self, x, w):
        """Cost of a bid ``(x, w)``: the value the opponents lose to it.

        Opponents priced above ``w`` are untouched. Those priced below see
        the supply reaching them shrink by ``x``; those tied at ``w`` share
        the same supply with ``x`` added to the tie.
        """
        scalar = np.ndim(x) == 0 and np.ndim(w) == 0
        x, w = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)),
                                   np.atleast_1d(np.asarray(w, dtype=float)))
        below, safe, hit = self._level_index(w)
        kept = np.minimum(self.level_q[None, :],
                          np.maximum(self.level_room[None, :] - x[:, None], 0.0))
        kept *= self.levels[None, :]
        kept[np.arange(self.levels.size)[None, :] >= below[:, None]] = 0.0
        lost = self._cum_loss[below] - kept.sum(axis=1)
        tie, room = self.level_q[safe], self.level_room[safe]
        denom = tie + x
        kept_tied = tie * np.minimum(1.0, np.divide(room, denom, out=np.ones_like(denom),
                                                    where=denom > 0))
        lost += np.where(hit, w * (self.level_alloc[safe] - kept_tied), 0.0)
        return float(lost[0]) if scalar else lost

    def utility(self, valuation: Valuation, x, w):
        """Value minus externality for hypothetical bids ``(x, w)``."""
        return valuation.theta(self.allocation(x, w)) - self.externality(x, w)


def available_quantity(view: OpposingBids, y: float) -> float:
    if y < 0:
        raise ValueError("price must be nonnegative")
    return view.available(y)


def market_price(view: OpposingBids, z: float) -> float:
    if z < 0:
        raise ValueError("quantity must be nonnegative")
    return view.market_price(z)


def _allocation(q: np.ndarray, p: np.ndarray, supply: float) -> np.ndarray:
    levels, inv = np.unique(p, return_inverse=True)
    level_q = np.bincount(inv, weights=q, minlength=levels.size)
    suffix = np.zeros(levels.size + 1)
    suffix[:-1] = np.cumsum(level_q[::-1])[::-1]
    room = np.maximum(supply - suffix[1:], 0.0)
    share = np.divide(room, level_q, out=np.ones_like(room), where=level_q > 0)
    return q * np.minimum(1.0, share)[inv]


def allocate(profile: BidProfile) -> np.ndarray:
    """Allocation for every id in the profile; entry 0 is the seller's buyback."""
    return _allocation(profile.quantities, profile.prices, profile.supply)


def _costs(profile: BidProfile, buyers) -> np.ndarray:
    q, p, supply = profile.quantities, profile.prices, profile.supply
    with_all = _allocation(q, p, supply)
    out = np.empty(len(buyers))
    for n, i in enumerate(buyers):
        q_wo = q.copy()
        q_wo[i] = 0.0  # a zero-quantity bid is the same as no bid
        diff = _allocation(q_wo, p, supply) - with_all
        diff[i] = 0.0
        out[n] = float(p @ diff)
    return out


def cost(profile: BidProfile, buyer: int) -> float:
    """Externality of ``buyer``: sum over the others of price times allocation lost."""
    if not 0 <= buyer <= profile.n:
        raise KeyError(buyer)
    return float(_costs(profile, [buyer])[0])


@dataclass(frozen=True)
class MarketOutcome:
    """Per-buyer results (arrays indexed by buyer id - 1) and the market aggregates."""

    bid_quantity: np.ndarray
    bid_price: np.ndarray
    allocation: np.ndarray
    cost: np.ndarray
    value: np.ndarray
    utility: np.ndarray
    buyback: float
    revenue: float
    total_value: float
    total_utility: float
    total_allocation: float
    mean_price: Optional[float]

    @property
    def n(self) -> int:
        return self.allocation.size

    def aggregates(self) -> dict:
        return {"mean_price": self.mean_price, "total_value": self.total_value,
                "total_utility": self.total_utility, "revenue": self.revenue,
                "total_allocation": self.total_allocation, "buyback": self.buyback}


def outcome(profile: BidProfile, pop: Population) -> MarketOutcome:
    if profile.n != pop.n or profile.supply != pop.quantity:
        raise ValueError("profile and population disagree on buyers or supply")
    alloc_all = allocate(profile)
    alloc = alloc_all[1:]
    costs = _costs(profile, range(1, profile.n + 1))
    if np.any(costs < -NEGATIVE_COST_SLACK):
        worst = int(np.argmin(costs)) + 1
        log.warning("negative externality %.3g for buyer %d", costs[worst - 1], worst)
    value = pop.values(alloc)
    prices = profile.prices[1:]
    total_alloc = float(alloc.sum())
    revenue = float(costs.sum())
    total_value = float(value.sum())
    mean_price = float(alloc @ prices / total_alloc) if total_alloc > 0 else None
    return MarketOutcome(
        bid_quantity=profile.quantities[1:].copy(), bid_price=prices.copy(),
        allocation=alloc, cost=costs, value=value, utility=value - costs,
        buyback=float(alloc_all[0]), revenue=revenue, total_value=total_value,
        total_utility=total_value - revenue, total_allocation=total_alloc,
        mean_price=mean_price)


OUTCOME_COLUMNS = ("row", "buyer", "quantity", "price", "allocation", "cost", "value", "utility")


def outcome_rows(out: MarketOutcome, reserve_price: float, supply: float) -> list[list]:
    """Flat rows: one ``buyer`` row per buyer, one ``seller`` row, one ``total`` row.

    The seller row carries the reserve bid and buyback quantity. The total
    row carries the bid-price average in ``price`` and the sums of
    allocation, cost, value and utility.
    """
    rows = []
    for i in range(out.n):
        rows.append(["buyer", i + 1, out.bid_quantity[i], out.bid_price[i], out.allocation[i],
                     out.cost[i], out.value[i], out.utility[i]])
    rows.append(["seller", 0, supply, reserve_price, out.buyback, "", "", ""])
    rows.append(["total", "", "", "" if out.mean_price is None else out.mean_price,
                 out.total_allocation, out.revenue, out.total_value, out.total_utility])
    return rows


def outcome_csv(out: MarketOutcome, reserve_price: float, supply: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_COLUMNS)
    for row in outcome_rows(out, reserve_price, supply):
        w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])
    return buf.getvalue()
