import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst
from scipy.integrate import quad

from critwin import analytics as an
from critwin.brw import (COLLIDING, FAKE, REAL, Embedding, OffspringIntensity, TreeCaps,
                         collision_census, grow_tree, intensity_mass, local_limit_batch,
                         local_limit_progeny, many_to_one_brw, mass_array, progeny_sample,
                         relabel, sample_offspring)
from critwin.model import critical_beta
from critwin.rng import Stream
from critwin.stats import z_score
from critwin.walk import many_to_one_rw

DATA = Path(__file__).parent / "data"
Z = 3.0


def _density(y, gamma, beta):
    return beta * (math.exp((1 - gamma) * y) if y < 0 else math.exp(gamma * y))


@pytest.mark.parametrize("gamma,beta", [(0.0, 0.25), (0.3, 0.1), (0.45, 0.7)])
@pytest.mark.parametrize("a,b", [(-3.0, -1.0), (-2.0, 2.5), (0.5, 4.0), (-math.inf, 1.0)])
def test_intensity_mass_against_quadrature(gamma, beta, a, b):
    mu = OffspringIntensity(gamma, beta)
    lo = max(a, -60.0)
    ref = quad(_density, lo, min(b, 0.0), args=(gamma, beta))[0] if lo < 0 else 0.0
    ref += quad(_density, max(lo, 0.0), b, args=(gamma, beta))[0] if b > 0 else 0.0
    assert intensity_mass(mu, a, b) == pytest.approx(ref, rel=1e-10)
    if a > -math.inf:
        assert mass_array(mu, [a], [b])[0] == pytest.approx(ref, rel=1e-12)


def test_intensity_examples_and_contracts():
    mu = OffspringIntensity(0.0, 0.25)
    assert mu.mass(-math.inf, 0.0) == pytest.approx(0.25)
    assert mu.mass(0.0, 2.0) == pytest.approx(0.5)
    assert mu.mass(1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        mu.mass(2.0, 1.0)
    with pytest.raises(ValueError):
        OffspringIntensity(0.0, 0.0)


@given(st.floats(0.0, 0.49), st.floats(0.01, 2.0), st.floats(-30, 30))
def test_antiderivative_inverse_round_trip(gamma, beta, y):
    mu = OffspringIntensity(gamma, beta)
    assert mu.inverse(mu.antiderivative(y)) == pytest.approx(y, abs=1e-9, rel=1e-9)


@pytest.mark.parametrize("gamma,beta,x,kill", [(0.0, 0.25, 2.0, (0.0, 6.0)),
                                               (0.3, 0.4, 1.0, (0.0, 3.0)),
                                               (0.2, 1.5, 0.0, (-math.inf, 2.0))])
def test_offspring_count_and_positions(gamma, beta, x, kill):
    mu = OffspringIntensity(gamma, beta)
    root = Stream(31)
    counts, pos = [], []
    for r in range(6000):
        c = sample_offspring(mu, x, kill, root.spawn(r))
        assert np.all(np.diff(c) >= 0)
        assert np.all((c >= kill[0]) & (c <= kill[1]))
        counts.append(len(c))
        pos.extend(c)
    lam = mu.mass(kill[0] - x, kill[1] - x)
    counts = np.array(counts)
    assert abs(counts.mean() - lam) < 4 * math.sqrt(lam / counts.size)
    assert counts.var(ddof=1) == pytest.approx(lam, rel=0.1)
    # positions follow the normalised intensity
    lo = kill[0] - x

    def cdf(z):
        return mu.mass(lo, np.clip(z - x, lo, kill[1] - x)) / lam
    assert sst.kstest(np.array(pos), np.vectorize(cdf)).pvalue > 1e-3


def test_offspring_is_deterministic_per_stream():
    mu = OffspringIntensity(0.0, 2.0)
    a = sample_offspring(mu, 1.0, (0.0, 50.0), Stream(5))
    b = sample_offspring(mu, 1.0, (0.0, 50.0), Stream(5))
    assert len(a) > 64  # exercises the buffer regrowth path
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_offspring(mu, 60.0, (0.0, 50.0), Stream(5))


# ---------------------------------------------------------------- embeddings

@pytest.mark.parametrize("kind", ["lower", "upper"])
def test_embedding_round_trip_and_cells(kind):
    emb = Embedding(kind, 1, 5000)
    for i in list(range(1, 200)) + [999, 1000, 4999, 5000]:
        assert emb.label(emb.position(i)) == i
        lo, hi = emb.cell_bounds(i)
        if kind == "lower":
            assert emb.label(lo) == i and emb.label(np.nextafter(hi, 0)) == i
            assert emb.label(hi) == min(i + 1, 5000)
        elif i > 1:
            assert emb.label(np.nextafter(lo, 10)) == i and emb.label(hi) == i
            assert emb.label(lo) == i - 1
    # cells tile the kill interval without gaps
    a, b = emb.kill_interval()
    xs = np.linspace(a, b, 20_001)
    labs = np.array([emb.label(x) for x in xs])
    assert np.all(np.diff(labs) >= 0) and labs[0] == 1 and labs[-1] == 5000


def test_embedding_examples_and_clamp():
    low = Embedding("lower", 3, 10)
    assert low.kill_interval() == (math.log(3), math.log(11))
    assert low.label(0.0) == 3 and low.label(100.0) == 10
    assert low.unclamped_label(0.0) == 1 and low.unclamped_label(math.log(20.5)) == 20
    up = Embedding("upper", 1, 10)
    assert up.position(1) == 0.0 and up.cell_bounds(1) == (0.0, 0.0)
    assert up.kill_interval() == (0.0, math.log(19))
    assert Embedding("upper", 4, 10).kill_interval() == (math.log(5), math.log(19))
    with pytest.raises(ValueError):
        Embedding("middle", 1, 2)
    with pytest.raises(ValueError):
        Embedding("lower", 5, 4)


# ---------------------------------------------------------------- trees and labels

def _grow(kind, m, n, v, gamma, beta, seed, **kw):
    emb = Embedding(kind, m, n)
    return grow_tree(OffspringIntensity(gamma, beta), emb.position(v), emb.kill_interval(),
                     emb, rng=seed, **kw), emb


@pytest.mark.parametrize("kind", ["lower", "upper"])
@pytest.mark.parametrize("seed", [s for s in range(40) if s % 5 == 0] + [101, 202, 303])
def test_tree_invariants(kind, seed):
    tree, emb = _grow(kind, 2, 400, 5, 0.1, 0.2, seed)
    assert not tree.censored
    n = len(tree)
    assert tree.parent[0] == -1 and tree.generation[0] == 0 and tree.label[0] == REAL
    assert np.all(tree.parent[1:] < np.arange(1, n))
    assert np.all(tree.generation[1:] == tree.generation[tree.parent[1:]] + 1)
    assert np.all(np.diff(tree.generation) >= 0)  # breadth first
    a, b = tree.kill_interval
    assert np.all((tree.position >= a) & (tree.position <= b))
    # ≺ order: within a generation parents ascend, siblings ascend by position
    for g in range(1, int(tree.generation.max()) + 1):
        ids = np.flatnonzero(tree.generation == g)
        par = tree.parent[ids]
        assert np.all(np.diff(tree.position[par]) >= 0)
        same = np.diff(par) == 0
        assert np.all(np.diff(tree.position[ids])[same] >= 0)
    # labels: online labels equal the offline recomputation
    assert np.array_equal(relabel(tree, emb), tree.label)
    real = tree.label == REAL
    assert len(set(tree.cell[real])) == int(real.sum())  # one real particle per cell
    kids = np.arange(1, n)
    bad_par = tree.label[tree.parent[kids]] != REAL
    assert np.all(tree.label[kids][bad_par] == FAKE)
    assert np.all(tree.cell == [emb.label(x) for x in tree.position])


def test_census_counts():
    tree, _ = _grow("lower", 1, 60, 3, 0.0, 0.45, 7)
    c = collision_census(tree)
    assert c["real"] + c["fake"] == len(tree)
    assert c["fake"] == c["colliding"] + c["fake_descendant"]
    assert sum(c["colliding_per_cell"].values()) == c["colliding"]
    with pytest.raises(ValueError):
        collision_census(grow_tree(OffspringIntensity(0.0, 0.2), 1.0, (0.0, 3.0), rng=1))


def test_golden_tree_dump():
    tree, _ = _grow("lower", 1, 60, 3, 0.0, 0.45, 7)
    assert tree.dump() == (DATA / "golden_tree_lower.txt").read_text()


def test_caps():
    tree, _ = _grow("lower", 1, 10**6, 1, 0.0, 0.5, 3, caps=TreeCaps(max_particles=50))
    assert tree.censored and len(tree) <= 50
    tree, _ = _grow("lower", 1, 10**6, 1, 0.0, 0.5, 3, caps=TreeCaps(max_generation=2))
    assert not tree.censored and tree.generation.max() <= 2
    with pytest.raises(ValueError):
        grow_tree(OffspringIntensity(0.0, 0.2), 5.0, (0.0, 3.0))


def test_fake_fraction_decreases_with_m():
    # cells at height ln m have width ~1/m, so collisions become rarer as m grows
    fr = []
    for m in (2, 50, 2000):
        fake = tot = 0
        for s in range(300):
            tree, _ = _grow("lower", m, 20 * m, m, 0.0, 0.25, Stream(41).spawn(m, s))
            fake += int(np.sum(tree.label != REAL))
            tot += len(tree)
        fr.append(fake / tot)
    assert fr[0] > fr[1] > fr[2]
    assert fr[2] < 0.05


# ---------------------------------------------------------------- progeny

@pytest.mark.parametrize("gamma", [0.0, 0.3])
@pytest.mark.parametrize("frac,x", [(1.0, 0.0), (1.0, 6.0), (0.7, 3.0)])
def test_progeny_mean_against_exact(gamma, frac, x):
    beta = frac * critical_beta(gamma)
    t, c = progeny_sample(gamma, beta, 8.0, x, 40_000, Stream(42).spawn(int(10 * gamma), int(x)))
    assert not c.any()
    t = t.astype(float)
    assert z_score(t.mean(), t.std(ddof=1) / math.sqrt(t.size),
                   an.expected_progeny(gamma, beta, 8.0, x)) < Z


@pytest.mark.parametrize("gamma", [0.0, 0.3])
@pytest.mark.parametrize("left", [3.0, 6.0])
def test_local_limit_with_left_barrier_against_exact(gamma, left):
    bar, prog, cens = local_limit_batch(gamma, 200_000, Stream(43).spawn(int(10 * gamma), int(left)),
                                        left=-left)
    assert not cens.any()
    assert sst.kstest(bar[:20_000], sst.expon.cdf).pvalue > 1e-3
    p = prog.astype(float)
    exact = an.killed_local_limit_mean(gamma, critical_beta(gamma), left)
    assert z_score(p.mean(), p.std(ddof=1) / math.sqrt(p.size), exact) < Z


def test_local_limit_single_draw():
    s = local_limit_progeny(0.2, rng=Stream(44))
    assert s.progeny >= 1 and s.barrier >= 0 and not s.censored
    bar, prog, _ = local_limit_batch(0.2, 1, Stream(44))
    assert (bar[0], prog[0]) == (s.barrier, s.progeny)


@pytest.mark.parametrize("gamma", [0.0, 0.3])
@pytest.mark.parametrize("g", [0, 1, 4])
def test_many_to_one(gamma, g):
    bc = critical_beta(gamma)
    b, sb = many_to_one_brw(gamma, bc, 6.0, 2.0, g, 40_000, Stream(45).spawn(g, 0))
    w, sw = many_to_one_rw(gamma, bc, 6.0, 2.0, g, 40_000, Stream(45).spawn(g, 1))
    if g == 0:
        assert b == w == 1.0
    else:
        assert z_score(b, sb, w, sw) < Z
    if g == 1:
        exact = 1.0 + OffspringIntensity(gamma, bc).mass(-2.0, 4.0)
        assert z_score(b, sb, exact) < Z
