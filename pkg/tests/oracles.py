"""Slow, independent re-implementations used as test oracles.

Nothing here imports the market code under test; bids are plain
``{id: (quantity, price)}`` dicts with the seller at id 0.
"""
import math

import numpy as np


def walk_allocation(bids: dict, supply: float) -> dict:
    """Sort bids by price, highest first, and hand out supply level by level.

    A price level sees whatever the bids priced strictly above it did not
    request. Bids tied on a level split that in proportion to their
    quantities, each capped at its own request.
    """
    out = {}
    prices = sorted({p for _, p in bids.values()}, reverse=True)
    requested_above = 0.0
    for level in prices:
        group = [k for k, (q, p) in bids.items() if p == level]
        z = sum(bids[k][0] for k in group)
        room = max(supply - requested_above, 0.0)
        for k in group:
            q = bids[k][0]
            out[k] = 0.0 if q == 0 else min(q, q / z * room)
        requested_above += z
    return out


def walk_cost(bids: dict, supply: float, buyer: int) -> float:
    with_i = walk_allocation(bids, supply)
    without = walk_allocation({k: b for k, b in bids.items() if k != buyer}, supply)
    return sum(bids[k][1] * (without[k] - with_i[k]) for k in without)


def theta(z, qbar, pbar):
    return (1 - z / (2 * qbar)) * z * pbar if z < qbar else 0.5 * qbar * pbar


def theta_prime(z, qbar, pbar):
    return pbar * (1 - z / qbar) if z < qbar else 0.0


def walk_utility(bids, supply, buyer, qbar, pbar):
    return theta(walk_allocation(bids, supply)[buyer], qbar, pbar) - walk_cost(bids, supply, buyer)


def brute_available(opponents: dict, supply: float, y: float) -> float:
    return max(supply - sum(q for q, p in opponents.values() if p > y), 0.0)


def bisect_sup_g(opponents: dict, supply: float, qbar: float, pbar: float,
                 iters: int = 200) -> float:
    """Supremum of ``{z <= qbar : z <= available(theta'(z))}`` by bisection."""
    ok = lambda z: z <= brute_available(opponents, supply, theta_prime(z, qbar, pbar))
    if ok(qbar):
        return qbar
    lo, hi = 0.0, qbar
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def grid_welfare(pairs, supply, step=0.01) -> float:
    """Best total value of three buyers over a quantity grid.

    The first two quantities range over the grid; the third takes whatever
    is left, up to its saturation point, since value never decreases.
    """
    (q1, p1), (q2, p2), (q3, p3) = pairs
    a1 = np.arange(0.0, q1 + step / 2, step)[:, None]
    a2 = np.arange(0.0, q2 + step / 2, step)[None, :]
    rest = supply - a1 - a2
    a3 = np.clip(rest, 0.0, q3)
    th = lambda a, q, p: np.where(a < q, (1 - a / (2 * q)) * a * p, 0.5 * q * p)
    total = th(a1, q1, p1) + th(a2, q2, p2) + th(a3, q3, p3)
    return float(np.where(rest >= 0, total, -np.inf).max())


def grid_best_gain(bids, supply, buyer, qbar, pbar, points=10_000) -> float:
    """Best utility increase over truthful bids on an even grid of ``points + 1`` quantities."""
    now = walk_utility(bids, supply, buyer, qbar, pbar)
    best = -math.inf
    for z in np.linspace(0.0, qbar, points + 1):
        trial = dict(bids)
        trial[buyer] = (float(z), theta_prime(float(z), qbar, pbar))
        best = max(best, walk_utility(trial, supply, buyer, qbar, pbar))
    return best - now


def two_pass_stats(xs):
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var
