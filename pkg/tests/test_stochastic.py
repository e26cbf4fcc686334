import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import two_pass_stats
from pspsim.stochastic import (DelayModel, default_delay_models, ensemble_arrays,
                               ensemble_stats, random_initial_bids, sample_delay, substream)
from pspsim.valuation import sample_population


def draws(model, n=100_000, seed=0):
    return model.from_uniform(substream(seed, "test").random(n))


def test_substreams_reproducible_and_distinct():
    a = substream(5, "comm", 0, 3).random(8)
    assert np.array_equal(a, substream(5, "comm", 0, 3).random(8))
    assert not np.array_equal(a, substream(5, "comm", 0, 4).random(8))
    assert not np.array_equal(a, substream(5, "eval", 0, 3).random(8))
    assert not np.array_equal(a, substream(6, "comm", 0, 3).random(8))


def test_substreams_uncorrelated():
    a = substream(1, "comm", 0, 1).random(20_000)
    b = substream(1, "comm", 0, 2).random(20_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_exponential_special_case():
    x = draws(DelayModel(0.0, 1.0, 1.0))
    assert x.mean() == pytest.approx(1.0, abs=0.02)


def test_default_comm_mean():
    comm, _ = default_delay_models()
    assert comm.mean == pytest.approx(0.1 + math.gamma(1 + 1 / 0.75))
    assert comm.mean == pytest.approx(1.2905, abs=1e-3)
    assert draws(comm).mean() == pytest.approx(comm.mean, rel=0.02)


def test_uniform_zero_gives_translation():
    m = DelayModel(0.7, 2.0, 0.5)
    assert m.from_uniform(0.0) == 0.7


@pytest.mark.parametrize("model", default_delay_models())
def test_ks_against_cdf(model):
    x = draws(model, seed=3)
    assert stats.kstest(x, model.cdf).statistic < 0.01
    assert x.min() >= model.delta


def test_defaults_and_tails():
    comm, ev = default_delay_models()
    assert (comm.delta, comm.lam, comm.beta) == (0.1, 1.0, 0.75)
    assert (ev.delta, ev.lam, ev.beta) == (1.0, 0.25, 1.5)
    assert comm.beta < 1 < ev.beta
    # the means are close (1.29 vs 1.23) but a typical latency is far shorter
    median = lambda m: m.delta + m.lam * math.log(2) ** (1 / m.beta)
    assert float(comm.cdf(median(comm))) == pytest.approx(0.5)
    assert median(comm) < 0.75 * median(ev)


def test_pdf_integrates_to_cdf():
    m = DelayModel(0.5, 1.5, 1.3)
    xs = np.linspace(0.0, 6.0, 60_001)
    area = np.trapezoid(m.pdf(xs), xs) if hasattr(np, "trapezoid") else np.trapz(m.pdf(xs), xs)
    assert area == pytest.approx(float(m.cdf(6.0)), abs=1e-4)


def test_scaled_model():
    m = DelayModel(0.1, 1.0, 0.75)
    assert m.scaled(17) == DelayModel(0.1 * 17, 17.0, 0.75)
    assert m.scaled(20, delta=False) == DelayModel(0.1, 20.0, 0.75)


@pytest.mark.parametrize("args", [(-1, 1, 1), (0, 0, 1), (0, 1, 0)])
def test_invalid_model(args):
    with pytest.raises(ValueError):
        DelayModel(*args)


def test_sample_delay_is_scalar():
    x = sample_delay(DelayModel(0.1, 1.0, 0.75), substream(0, "x"))
    assert isinstance(x, float) and x >= 0.1


def test_random_initial_bids():
    pop = sample_population(30, 8, reserve_price=12.0)
    prof = random_initial_bids(pop, substream(1, "initial"))
    assert prof.bid(0).quantity == pop.quantity and prof.bid(0).price == 12.0
    q, p = prof.quantities[1:], prof.prices[1:]
    assert np.all((q >= 0) & (q <= pop.qbar))
    assert np.allclose(p, pop.pbar * (1 - q / pop.qbar), atol=1e-12)
    assert random_initial_bids(pop, substream(1, "initial")) == prof


def test_ensemble_stats_examples():
    s = ensemble_stats([5, 5, 5])
    assert (s.mean, s.variance, s.count) == (5.0, 0.0, 3)
    s = ensemble_stats([0, 2])
    assert (s.mean, s.variance) == (1.0, 2.0)
    one = ensemble_stats([3.5])
    assert one.mean == 3.5 and one.variance is None and one.std is None
    with pytest.raises(ValueError):
        ensemble_stats([])


def test_ensemble_stats_two_pass_oracle():
    xs = list(np.random.default_rng(2).normal(1e3, 7.0, 1000))
    mean, var = two_pass_stats(xs)
    s = ensemble_stats(xs)
    assert abs(s.mean - mean) <= 1e-10 * abs(mean)
    assert abs(s.variance - var) <= 1e-10 * var


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
def test_variance_nonnegative(xs):
    assert ensemble_stats(xs).variance >= 0


def test_ensemble_arrays_columnwise():
    x = np.random.default_rng(0).normal(size=(20, 4))
    mean, var = ensemble_arrays(x)
    assert np.allclose(mean, x.mean(axis=0))
    assert np.allclose(var, x.var(axis=0, ddof=1))
    assert ensemble_arrays(x[:1])[1] is None
