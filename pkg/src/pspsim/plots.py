"""Figures for the experiment reports, drawn from the same data as the CSVs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.labelsize": 9, "legend.fontsize": 8,
                     "xtick.labelsize": 8, "ytick.labelsize": 8, "figure.dpi": 120})

# PNG text chunks are left empty so reruns give identical files
_SAVE = {"metadata": {"Software": None}}


def _sd(stats):
    return np.nan if stats.std is None else stats.std


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def reserve_figure(points, path) -> Path:
    P = np.array([p.reserve for p in points])
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.2))
    for name, label in (("total_value", "total value"), ("total_utility", "total utility"),
                        ("revenue", "revenue")):
        m = np.array([getattr(p, name).mean for p in points])
        s = np.array([_sd(getattr(p, name)) for p in points])
        left.errorbar(P, m, yerr=s, marker="o", ms=3, capsize=2, label=label)
    left.set_xlabel("reserve price P")
    left.legend(frameon=False)
    m = np.array([p.mean_price.mean for p in points])
    s = np.array([_sd(p.mean_price) for p in points])
    right.errorbar(P, m, yerr=s, marker="o", ms=3, capsize=2, color="k")
    right.plot(P, P, ls=":", color="0.5", label="P")
    right.set_xlabel("reserve price P")
    right.set_ylabel("mean bid price E[p]")
    right.legend(frameon=False)
    return _save(fig, path)


def latency_figure(results, path) -> Path:
    """Aggregates against the latency scale, and per-buyer outcomes at the first scale."""
    scales = np.array([s for s, _ in results])
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, name, label in ((axes[0], "mean_price", "E[p]"), (axes[1], "total_utility", "S[u]")):
        m = np.array([getattr(S, name).mean for _, S in results])
        s = np.array([_sd(getattr(S, name)) for _, S in results])
        ax.plot(scales, m, marker="o", ms=3, color="C0")
        ax.fill_between(scales, m - s, m + s, alpha=0.3, color="C0", lw=0)
        ax.set_xlabel("latency scale")
        ax.set_ylabel(label)
    scale, S = results[0]
    ids = np.arange(1, S.value_mean.size + 1)
    for name, label, color in (("value", "value", "C2"), ("cost", "cost", "C3"),
                               ("utility", "utility", "C0")):
        m = getattr(S, f"{name}_mean")
        var = getattr(S, f"{name}_var")
        err = None if var is None else np.sqrt(var)
        axes[2].errorbar(ids, m, yerr=err, fmt=".", ms=3, capsize=1.5, color=color, label=label)
    axes[2].set_xlabel("buyer")
    axes[2].set_title(f"latency scale {scale:g}", fontsize=9)
    axes[2].legend(frameon=False)
    return _save(fig, path)


def twins_figure(result, path) -> Path:
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.2))
    if result.transient:
        tr = np.array(result.transient, dtype=float)
        a, b = result.watch
        left.step(tr[:, 0], tr[:, 1], where="post", label=f"buyer {a} (industrious)")
        left.step(tr[:, 0], tr[:, 2], where="post", label=f"buyer {b} (lazy)")
        left.set_xscale("log")
        left.legend(frameon=False)
    left.set_xlabel("time (s)")
    left.set_ylabel("utility")
    m = result.half
    u = result.summary.utility_mean
    var = result.summary.utility_var
    err = None if var is None else np.sqrt(var)
    right.errorbar(u[:m], u[m:], xerr=None if err is None else err[:m],
                   yerr=None if err is None else err[m:], fmt=".", ms=4, capsize=1.5)
    top = max(float(u.max()), 1.0)
    right.plot([0, top], [0, top], ls=":", color="0.5")
    right.set_xlabel("industrious <u_i>")
    right.set_ylabel("lazy <u_i+m>")
    return _save(fig, path)


def outcome_figure(out, path) -> Path:
    ids = np.arange(1, out.n + 1)
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.2))
    left.bar(ids, out.bid_quantity, color="0.75", label="bid quantity")
    left.bar(ids, out.allocation, width=0.4, color="C0", label="allocation")
    left.set_xlabel("buyer")
    left.legend(frameon=False)
    right.bar(ids, out.value, color="C2", label="value")
    right.bar(ids, out.cost, width=0.4, color="C3", label="cost")
    right.set_xlabel("buyer")
    right.legend(frameon=False)
    return _save(fig, path)
