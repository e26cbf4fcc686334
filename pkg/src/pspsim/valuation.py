"""Quadratic buyer valuations, buyer populations and the welfare oracle."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SELLER = 0


@dataclass(frozen=True)
class Valuation:
    """Concave quadratic value curve that saturates at ``qbar``.

    ``pbar`` is the marginal value of the first unit; the marginal value
    falls linearly to zero at ``qbar`` and stays there.
    """

    qbar: float
    pbar: float

    def __post_init__(self):
        if not (self.qbar > 0 and self.pbar > 0):
            raise ValueError(f"qbar and pbar must be positive, got {self.qbar}, {self.pbar}")

    def theta(self, z):
        z = _nonneg(z, "quantity")
        zc = np.minimum(z, self.qbar)
        out = (1.0 - 0.5 * zc / self.qbar) * zc * self.pbar
        return float(out) if np.ndim(out) == 0 else out

    def theta_prime(self, z):
        z = _nonneg(z, "quantity")
        out = np.where(z < self.qbar, self.pbar * (1.0 - z / self.qbar), 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def theta_prime_inverse(self, y):
        """Quantity at which the marginal value equals ``y``; 0 above ``pbar``."""
        y = _nonneg(y, "price")
        out = np.where(y <= self.pbar, self.qbar * (1.0 - y / self.pbar), 0.0)
        out = np.clip(out, 0.0, self.qbar)
        return float(out) if np.ndim(out) == 0 else out


def _nonneg(x, what):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError(f"{what} must be nonnegative, got {x}")
    return x


@dataclass(frozen=True)
class Population:
    """Buyers ``1..n`` plus the seller's reserve bid ``(0, quantity, reserve_price)``."""

    buyers: tuple[Valuation, ...]
    quantity: float = 1000.0
    reserve_price: float = 0.0

    def __post_init__(self):
        if not self.buyers:
            raise ValueError("population needs at least one buyer")
        if self.quantity <= 0:
            raise ValueError("auctioned quantity must be positive")
        if self.reserve_price < 0:
            raise ValueError("reserve price must be nonnegative")
        object.__setattr__(self, "buyers", tuple(self.buyers))

    @property
    def n(self) -> int:
        return len(self.buyers)

    @property
    def ids(self) -> range:
        return range(1, self.n + 1)

    def __getitem__(self, buyer: int) -> Valuation:
        if buyer < 1 or buyer > self.n:
            raise KeyError(buyer)
        return self.buyers[buyer - 1]

    @property
    def qbar(self) -> np.ndarray:
        return np.array([v.qbar for v in self.buyers])

    @property
    def pbar(self) -> np.ndarray:
        return np.array([v.pbar for v in self.buyers])

    def with_reserve(self, reserve_price: float) -> "Population":
        return Population(self.buyers, self.quantity, reserve_price)

    def values(self, allocations: np.ndarray) -> np.ndarray:
        """Vectorized theta over buyers for an allocation array indexed by buyer id - 1."""
        qb, pb = self.qbar, self.pbar
        z = np.minimum(np.asarray(allocations, dtype=float), qb)
        return (1.0 - 0.5 * z / qb) * z * pb


def sample_population(n: int, seed: int, qbar_range=(50.0, 100.0), pbar_range=(10.0, 20.0),
                      quantity: float = 1000.0, reserve_price: float = 0.0) -> Population:
    if n < 1:
        raise ValueError("n must be at least 1")
    for lo, hi in (qbar_range, pbar_range):
        if not (0 < lo <= hi):
            raise ValueError(f"invalid interval [{lo}, {hi}]")
    from .stochastic import substream

    rng = substream(seed, "population")
    qb = rng.uniform(qbar_range[0], qbar_range[1], size=n)
    pb = rng.uniform(pbar_range[0], pbar_range[1], size=n)
    return Population(tuple(Valuation(float(q), float(p)) for q, p in zip(qb, pb)),
                      quantity, reserve_price)


def twin_population(base: Population) -> Population:
    """Append an identical copy of every buyer, so buyer ``i + n`` mirrors buyer ``i``."""
    return Population(base.buyers + base.buyers, base.quantity, base.reserve_price)


def optimal_welfare(pop: Population) -> tuple[np.ndarray, float]:
    """Welfare-maximizing split of the supply among buyers (water-filling).

    Finds the common marginal value ``mu`` with ``sum_i f_i(mu) = Q``, where
    ``f_i`` is the inverse marginal value. The demand curve is piecewise
    linear in ``mu`` with kinks at the ``pbar`` values, so each segment is
    solved in closed form. Returns allocations indexed by buyer id - 1 and
    their total value.
    """
    qb, pb = pop.qbar, pop.pbar
    Q = pop.quantity
    if qb.sum() <= Q:
        alloc = qb.copy()
        return alloc, float(pop.values(alloc).sum())
    # Walk the kinks from the highest price down. On (kink_{k+1}, kink_k] only the
    # buyers with pbar >= kink_k demand a positive amount: sum qb*(1 - mu/pb).
    order = np.argsort(-pb, kind="stable")
    kinks = pb[order]
    slope = np.cumsum(qb[order] / pb[order])   # d(demand)/d(-mu) for active set
    level = np.cumsum(qb[order])               # demand at mu = 0 for active set
    mu = 0.0
    for k in range(len(kinks)):
        lower = kinks[k + 1] if k + 1 < len(kinks) else 0.0
        demand_at_lower = level[k] - slope[k] * lower
        if demand_at_lower >= Q:
            mu = (level[k] - Q) / slope[k]
            break
    alloc = np.clip(qb * (1.0 - mu / pb), 0.0, qb)
    return alloc, float(pop.values(alloc).sum())


def buyback_guaranteed(pop: Population, price: float) -> bool:
    """True when total demand at ``price`` falls short of the supply."""
    if price < 0:
        raise ValueError("price must be nonnegative")
    demand = sum(v.theta_prime_inverse(price) for v in pop.buyers)
    return bool(demand < pop.quantity)


# -- plain-text population files ---------------------------------------------

_HEADER = "# pspsim population v1"


def write_population(pop: Population, path, comments=()) -> None:
    """Write ``pop`` as whitespace-separated ``id qbar pbar`` rows.

    Supply and reserve price ride in ``#`` header lines; floats use ``repr``
    so a round trip is exact. Extra ``comments`` become ``#`` lines too.
    """
    lines = [_HEADER, *(f"# {c}" for c in comments),
             f"# quantity {pop.quantity!r}",
             f"# reserve_price {pop.reserve_price!r}",
             "id qbar pbar"]
    lines += [f"{i} {v.qbar!r} {v.pbar!r}" for i, v in zip(pop.ids, pop.buyers)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_population(path) -> Population:
    quantity, reserve = 1000.0, 0.0
    rows: list[tuple[int, float, float]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "quantity":
                quantity = float(parts[1])
            elif len(parts) == 2 and parts[0] == "reserve_price":
                reserve = float(parts[1])
            continue
        if line.split()[0] == "id":
            continue
        i, q, p = line.split()
        rows.append((int(i), float(q), float(p)))
    ids = [r[0] for r in rows]
    if ids != list(range(1, len(rows) + 1)):
        raise ValueError(f"buyer ids must run 1..n in order, got {ids[:5]}...")
    return Population(tuple(Valuation(q, p) for _, q, p in rows), quantity, reserve)


def population_from_pairs(pairs: Iterable[Sequence[float]], quantity=1000.0,
                          reserve_price=0.0) -> Population:
    return Population(tuple(Valuation(float(q), float(p)) for q, p in pairs),
                      quantity, reserve_price)
