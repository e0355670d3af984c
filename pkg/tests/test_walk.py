import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst

from critwin import analytics as an
from critwin.rng import Stream
from critwin.stats import RunningStats, t_half_width, z_score
from critwin.walk import (f_ab_check, laplace_steps, laplace_walk_mc, many_to_one_rw,
                          resolvent_mc_and_bound)

Z = 3.0


def test_laplace_increment_moments_and_law():
    x = laplace_steps(400_000, Stream(11))
    assert abs(x.mean()) < 4 * math.sqrt(2 / x.size)
    assert x.var() == pytest.approx(2.0, rel=0.02)
    assert sst.kstest(x[:50_000], sst.laplace.cdf).pvalue > 1e-3


def test_overshoot_is_exponential():
    s = laplace_walk_mc(5.0, 10.0, 0.0, 20_000, Stream(12), keep_overshoot=True)
    assert s.capped == 0
    assert sst.kstest(s.overshoots, sst.expon.cdf).pvalue > 1e-3
    assert s.mean("overshoot") == pytest.approx(1.0, abs=Z * s.se("overshoot"))


def test_exit_side_symmetry_from_midpoint():
    s = laplace_walk_mc(7.5, 15.0, 0.0, 50_000, Stream(13))
    assert z_score(s.mean("exit_right"), s.se("exit_right"), 0.5) < Z


@pytest.mark.parametrize("L", [15.0, 20.0])
@pytest.mark.parametrize("rho", [-0.5, -0.05, "half_star"])
def test_hitting_pgf_against_mc(L, rho):
    rho = 0.5 * an.rho_star(L) if rho == "half_star" else rho
    s = laplace_walk_mc(L / 2, L, rho, 100_000, Stream(14).spawn(int(L)))
    assert z_score(s.mean("pgf"), s.se("pgf"), an.hitting_pgf(rho, L)) < Z


def test_mean_exit_time_is_pgf_derivative():
    L = 15.0
    h = 1e-6
    dpgf = (an.hitting_pgf(h, L) - an.hitting_pgf(-h, L)) / (2 * h)
    s = laplace_walk_mc(L / 2, L, 0.0, 50_000, Stream(15))
    assert z_score(s.mean("tau"), s.se("tau"), dpgf) < Z


@pytest.mark.parametrize("x", [0.0, 5.0, 15.0])
@pytest.mark.parametrize("rho", [-0.5, -0.1, "third_star"])
def test_h_plus_minus_against_mc(x, rho):
    L = 15.0
    rho = an.rho_star(L) / 3 if rho == "third_star" else rho
    bs = (0.5, 1.0, 2.0)
    s = laplace_walk_mc(x, L, rho, 60_000, Stream(16).spawn(int(x), int(100 * abs(rho))), bs=bs)
    for b in bs:
        for side, fn in (("plus", an.h_plus), ("minus", an.h_minus)):
            nm = f"h_{side}[{b:g}]"
            assert z_score(s.mean(nm), s.se(nm), fn(b, x, rho, L)) < Z, nm


def test_rho_minus_one_kills_after_first_term():
    s = laplace_walk_mc(3.0, 10.0, -1.0, 1000, Stream(17), bs=(0.5,))
    assert s.mean("pgf") == 0.0
    assert s.mean("h_plus[0.5]") == pytest.approx(math.exp(1.5), rel=1e-12)
    assert s.mean("h_minus[0.5]") == pytest.approx(math.exp(-1.5), rel=1e-12)


def test_walk_determinism_and_contracts():
    a = laplace_walk_mc(2.0, 8.0, -0.1, 500, Stream(18), bs=(1.0,))
    b = laplace_walk_mc(2.0, 8.0, -0.1, 500, Stream(18), bs=(1.0,))
    assert a.mean("h_plus[1]") == b.mean("h_plus[1]")
    with pytest.raises(ValueError):
        laplace_walk_mc(9.0, 8.0, 0.0, 10, Stream(1))
    with pytest.raises(ValueError):
        laplace_walk_mc(1.0, 8.0, 0.0, 0, Stream(1))


def test_horizon_truncation():
    # horizon 0 keeps only the k = 0 term e^{bx}
    s = laplace_walk_mc(2.0, 8.0, 0.0, 100, Stream(19), bs=(1.0,), horizon=0)
    assert s.mean("h_plus[1]") == pytest.approx(math.exp(2.0))


@pytest.mark.parametrize("x,rho,K,cell", [(10.0, 0.0, 60.0, (20.0, 20.5)),
                                          (5.0, -0.1, 40.0, (4.0, 5.0)),
                                          (2.0, "half_star", 30.0, (10.0, 11.0)),
                                          (0.0, 0.0, 20.0, (0.0, 1.0))])
def test_resolvent_bound(x, rho, K, cell):
    rho = 0.5 * an.rho_star(K) if rho == "half_star" else rho
    bc = resolvent_mc_and_bound(x, rho, K, cell, 20_000, Stream(20).spawn(int(x)))
    assert bc.passed and bc.estimate > 0
    assert bc.bound == an.resolvent_bound(*cell, x)


def test_resolvent_degenerate_cell():
    bc = resolvent_mc_and_bound(1.0, 0.0, 10.0, (3.0, 3.0), 10, Stream(1))
    assert bc.estimate == 0.0 and bc.passed
    with pytest.raises(ValueError):
        resolvent_mc_and_bound(1.0, 0.0, 10.0, (3.0, 5.0), 10, Stream(1))


@pytest.mark.parametrize("a,b,x,rho,L", [(5.0, 6.0, 8.0, 0.0, 40.0),
                                         (2.0, 2.5, 2.2, -0.2, 20.0),
                                         (10.0, 11.0, 3.0, "half_star", 30.0)])
def test_f_ab_bound(a, b, x, rho, L):
    rho = 0.5 * an.rho_star(L) if rho == "half_star" else rho
    fc = f_ab_check(a, b, x, rho, L, 20_000, Stream(21).spawn(int(a)))
    assert fc.passed and fc.estimate > 0


@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_many_to_one_rw_first_generations_exact(gamma):
    # generation 0 only: the root itself
    bc = 0.25 if gamma == 0 else 0.1
    est, se = many_to_one_rw(gamma, bc, 8.0, 3.0, 0, 100, Stream(22))
    assert est == pytest.approx(1.0, rel=1e-12)
    # all generations: converges to the exact expected progeny
    est, se = many_to_one_rw(gamma, bc, 8.0, 3.0, 10_000, 100_000, Stream(23))
    assert z_score(est, se, an.expected_progeny(gamma, bc, 8.0, 3.0)) < Z


# ---------------------------------------------------------------- stats helpers

@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
@settings(max_examples=100)
def test_running_stats_merge_equals_pooled(xs, ys):
    a = RunningStats()
    for v in xs:
        a.push(v)
    b = RunningStats()
    b.push_array(ys)
    a.merge(b)
    allv = np.array(xs + ys)
    assert a.n == allv.size
    assert a.mean == pytest.approx(allv.mean(), abs=1e-9)
    assert a.variance == pytest.approx(allv.var(ddof=1), rel=1e-7, abs=1e-7)
    c = RunningStats.from_moments(allv.size, allv.sum(), (allv ** 2).sum())
    assert c.mean == pytest.approx(allv.mean(), abs=1e-9)


def test_half_width_and_z():
    assert math.isnan(t_half_width([1.0]))
    v = [1.0, 2.0, 3.0, 4.0]
    assert t_half_width(v) == pytest.approx(sst.t.ppf(0.975, 3) * np.std(v, ddof=1) / 2)
    assert z_score(1.0, 0.0, 1.0) == 0.0
    assert z_score(1.0, 0.0, 2.0) == math.inf
    assert z_score(1.0, 0.3, 2.0, 0.4) == pytest.approx(2.0)
