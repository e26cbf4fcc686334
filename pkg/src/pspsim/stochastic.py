"""Seeded substreams, translated-Weibull delays and ensemble statistics."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RNG_ID = "numpy.random.PCG64 via SeedSequence(master_seed, spawn_key=(crc32(purpose), *keys))"


def substream(master_seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(purpose, *keys)`` derived from one master seed.

    Each distinct key tuple gets its own SeedSequence spawn key, so drawing
    more from one stream never shifts another. The same inputs always give
    the same sequence.
    """
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(tag, *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class DelayModel:
    """``delta + Weibull(scale=lam, shape=beta)`` in seconds."""

    delta: float
    lam: float
    beta: float

    def __post_init__(self):
        if self.delta < 0 or self.lam <= 0 or self.beta <= 0:
            raise ValueError(f"invalid delay model {self}")

    @property
    def mean(self) -> float:
        return self.delta + self.lam * math.gamma(1.0 + 1.0 / self.beta)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.delta, 0.0) / self.lam
        return 1.0 - np.exp(-(t ** self.beta))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.delta, 0.0) / self.lam
        with np.errstate(divide="ignore"):
            out = (self.beta / self.lam) * t ** (self.beta - 1.0) * np.exp(-(t ** self.beta))
        return np.where(x > self.delta, out, 0.0)

    def scaled(self, factor: float, *, delta: bool = True) -> "DelayModel":
        """Stretch the scale (and, by default, the translation) by ``factor``."""
        return DelayModel(self.delta * factor if delta else self.delta, self.lam * factor, self.beta)

    def from_uniform(self, u):
        """Inverse transform of a uniform draw on [0, 1)."""
        return self.delta + self.lam * (-np.log1p(-np.asarray(u, dtype=float))) ** (1.0 / self.beta)


def sample_delay(model: DelayModel, stream: np.random.Generator) -> float:
    # Generator.random() is on [0, 1), so log1p(-u) stays finite
    return float(model.from_uniform(stream.random()))


def default_delay_models() -> tuple[DelayModel, DelayModel]:
    """Communication latency and evaluation interval used by the experiments."""
    comm = DelayModel(delta=0.1, lam=1.0, beta=0.75)
    evaluation = DelayModel(delta=1.0, lam=0.25, beta=1.5)
    return comm, evaluation


def random_initial_bids(pop, stream: np.random.Generator):
    """Truthful bids at quantities drawn uniformly on ``[0, qbar_i]``."""
    from .auction import BidProfile

    qb = pop.qbar
    q = stream.uniform(0.0, 1.0, size=pop.n) * qb
    p = pop.pbar * (1.0 - q / qb)
    return BidProfile.from_arrays(pop.quantity, pop.reserve_price, q, p)


@dataclass(frozen=True)
class EnsembleStats:
    """Ensemble mean, unbiased sample variance (``None`` below two samples) and count."""

    mean: float
    variance: Optional[float]
    count: int

    @property
    def std(self) -> Optional[float]:
        return None if self.variance is None else math.sqrt(self.variance)


def ensemble_stats(samples: Sequence[float]) -> EnsembleStats:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise ValueError("ensemble_stats needs at least one sample")
    mean = float(x.sum() / x.size)
    if x.size < 2:
        return EnsembleStats(mean, None, 1)
    var = float(((x - mean) ** 2).sum() / (x.size - 1))
    return EnsembleStats(mean, var, int(x.size))


def ensemble_arrays(samples) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Column-wise mean and unbiased variance of an ``(ensemble, k)`` array."""
    x = np.asarray(samples, dtype=float)
    mean = x.sum(axis=0) / x.shape[0]
    if x.shape[0] < 2:
        return mean, None
    return mean, ((x - mean) ** 2).sum(axis=0) / (x.shape[0] - 1)
