"""Compiled single-buyer market queries used in the hot loops.

Same quantities as ``OpposingBids`` (the reference implementation), computed
on the full bid arrays with the evaluating buyer skipped, without building
intermediate numpy objects.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _theta(z, qbar, pbar):
    if z < qbar:
        return (1.0 - 0.5 * z / qbar) * z * pbar
    return 0.5 * qbar * pbar


@njit(cache=True)
def theta_prime(z, qbar, pbar):
    if z < qbar:
        return pbar * (1.0 - z / qbar)
    return 0.0


@njit(cache=True)
def _opposing_sorted(q, p, skip):
    """Opposing bids sorted by price (descending) with, per bid, the demand
    priced strictly above it and the total demand tied with it."""
    m = q.size - 1
    sq = np.empty(m)
    sp = np.empty(m)
    j = 0
    for k in range(q.size):
        if k != skip:
            sq[j] = q[k]
            sp[j] = p[k]
            j += 1
    order = np.argsort(-sp, kind="mergesort")
    sq = sq[order]
    sp = sp[order]
    above = np.empty(m)
    tie = np.empty(m)
    pos = 0
    run = 0.0
    while pos < m:
        end = pos
        tot = 0.0
        while end < m and sp[end] == sp[pos]:
            tot += sq[end]
            end += 1
        for k in range(pos, end):
            above[k] = run
            tie[k] = tot
        run += tot
        pos = end
    return sq, sp, above, tie


@njit(cache=True)
def _sup_feasible(sq, sp, above, tie, supply, qbar, pbar):
    m = sq.size
    demand = 0.0
    k = 0
    while k < m and sp[k] >= pbar:
        demand += sq[k]
        k += 1
    best = 0.0
    left = 0.0
    while k < m and sp[k] > 0.0:
        right = qbar * (1.0 - sp[k] / pbar)
        room = max(supply - demand, 0.0)
        if room > left:
            best = max(best, min(right, room))
        demand += tie[k]
        level = sp[k]
        while k < m and sp[k] == level:
            k += 1
        left = right
    room = max(supply - demand, 0.0)
    if room > left:
        best = max(best, min(qbar, room))
    return best


@njit(cache=True)
def _utility(sq, sp, above, tie, supply, qbar, pbar, x, w):
    m = sq.size
    avail = supply
    tied = 0.0
    first = m
    for k in range(m):
        if sp[k] > w:
            avail -= sq[k]
        else:
            if first == m:
                first = k
            if sp[k] == w:
                tied += sq[k]
    avail = max(avail, 0.0)
    got = 0.0
    loss = 0.0
    if x > 0.0:
        got = min(x, x / (x + tied) * avail)
        # one term per opposing price level at or below w
        for k in range(first, m):
            if k > first and sp[k] == sp[k - 1]:
                continue
            total = tie[k]
            room = max(supply - above[k], 0.0)
            taken = min(total, room)
            if taken <= 0.0:
                continue
            if sp[k] < w:
                kept = min(total, max(room - x, 0.0))
            else:
                kept = total * min(1.0, room / (total + x))
            loss += sp[k] * (taken - kept)
    return _theta(got, qbar, pbar) - loss


@njit(cache=True)
def reply_gain(q, p, supply, i, qbar, pbar, eps, ref_q, ref_p):
    """Epsilon-best reply of buyer ``i`` and its utility gain over ``(ref_q, ref_p)``."""
    sq, sp, above, tie = _opposing_sorted(q, p, i)
    x = max(0.0, _sup_feasible(sq, sp, above, tie, supply, qbar, pbar) - eps / pbar)
    w = theta_prime(x, qbar, pbar)
    gain = (_utility(sq, sp, above, tie, supply, qbar, pbar, x, w)
            - _utility(sq, sp, above, tie, supply, qbar, pbar, ref_q, ref_p))
    return x, w, gain


@njit(cache=True)
def utilities(q, p, supply, i, qbar, pbar, xs, ws):
    """Utility of buyer ``i`` for each hypothetical bid ``(xs[k], ws[k])``."""
    sq, sp, above, tie = _opposing_sorted(q, p, i)
    out = np.empty(xs.size)
    for k in range(xs.size):
        out[k] = _utility(sq, sp, above, tie, supply, qbar, pbar, xs[k], ws[k])
    return out


@njit(cache=True)
def own_allocation(q, p, supply, i):
    """Allocation of buyer ``i``'s current bid."""
    if q[i] <= 0.0:
        return 0.0
    avail = supply
    tied = 0.0
    for k in range(q.size):
        if k == i:
            continue
        if p[k] > p[i]:
            avail -= q[k]
        elif p[k] == p[i]:
            tied += q[k]
    return q[i] * min(1.0, max(avail, 0.0) / (q[i] + tied))
