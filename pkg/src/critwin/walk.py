"""Monte Carlo for the Laplace(1) random walk killed outside [0, L].

This is the independent oracle for every closed form in :mod:`analytics`.
One pass over ``reps`` paths accumulates all requested functionals at once,
so the estimates for different ``b`` or cells share paths (and are
correlated, which is harmless for per-point comparisons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import analytics
from .model import critical_beta
from .rng import Stream, as_stream, laplace
from .stats import RunningStats

# fixed slots at the front of the accumulator vector
_PGF, _TAU, _RIGHT, _OVER = 0, 1, 2, 3
_NFIXED = 4
DEFAULT_STEP_CAP = 10_000_000


@njit(cache=True)
def _walk_kernel(state, x, L, rho, bs, cells, fcells, horizon, reps, step_cap,
                 keep_over, over_out):
    nb = bs.shape[0]
    nc = cells.shape[0]
    nf = fcells.shape[0]
    nt = _NFIXED + 2 * nb + nc + nf
    mean = np.zeros(nt)
    m2 = np.zeros(nt)
    vals = np.zeros(nt)
    capped = 0
    twopi = 2.0 * np.pi
    for r in range(reps):
        for t in range(nt):
            vals[t] = 0.0
        s = x
        disc = 1.0
        k = 0
        while True:
            # S_k is inside [0, L]: accumulate the k-th term
            for t in range(nb):
                vals[_NFIXED + t] += disc * np.exp(bs[t] * s)
                vals[_NFIXED + nb + t] += disc * np.exp(-bs[t] * s)
            base = _NFIXED + 2 * nb
            if k >= 1:
                for t in range(nc):
                    if cells[t, 0] <= s <= cells[t, 1]:
                        vals[base + t] += disc
            base += nc
            for t in range(nf):
                a = fcells[t, 0]
                b = fcells[t, 1]
                if a <= s <= b and b > a:
                    vals[base + t] += disc * (1.0 - np.cos(twopi * (s - a) / (b - a)))
            if k == horizon:
                break
            s += laplace(state)
            k += 1
            disc *= 1.0 + rho
            if s < 0.0 or s > L:
                vals[_PGF] = disc
                vals[_TAU] = k
                if s > L:
                    vals[_RIGHT] = 1.0
                    vals[_OVER] = s - L
                else:
                    vals[_OVER] = -s
                break
            if k >= step_cap:
                capped += 1
                break
        if keep_over:
            over_out[r] = vals[_OVER]
        inv = 1.0 / (r + 1)
        for t in range(nt):
            d = vals[t] - mean[t]
            mean[t] += d * inv
            m2[t] += d * (vals[t] - mean[t])
    return mean, m2, capped


@dataclass
class RwPathStats:
    """Accumulators of one Laplace-walk Monte Carlo run.

    ``stats`` maps target names to :class:`RunningStats`. Names are
    ``pgf``, ``tau``, ``exit_right``, ``overshoot``, ``h_plus[b]``,
    ``h_minus[b]``, ``resolvent[a,b]`` and ``f_ab[a,b]``.
    """

    x: float
    L: float
    rho: float
    reps: int
    stats: dict[str, RunningStats]
    capped: int = 0
    overshoots: np.ndarray | None = field(default=None, repr=False)

    def mean(self, name: str) -> float:
        return self.stats[name].mean

    def se(self, name: str) -> float:
        return self.stats[name].se


def _key_b(b: float) -> str:
    return f"{b:g}"


def _key_cell(c) -> str:
    return f"{c[0]:g},{c[1]:g}"


def laplace_walk_mc(x: float, L: float, rho: float, reps: int, rng,
                    bs=(), cells=(), fab_cells=(), horizon: int | None = None,
                    keep_overshoot: bool = False,
                    step_cap: int = DEFAULT_STEP_CAP) -> RwPathStats:
    """Simulate ``reps`` Laplace(1) walks from ``x`` killed on leaving [0, L].

    ``bs`` selects the exponents of the H^± sums, ``cells`` the resolvent
    intervals (terms ℓ >= 1) and ``fab_cells`` the smoothed-occupation cells
    (terms n >= 0). ``horizon`` truncates all sums at step ``horizon``
    (the walk is then stopped; ``pgf``/``tau`` are meaningless). Paths that hit
    ``step_cap`` are counted in ``capped``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not (0.0 <= x <= L):
        raise ValueError(f"need 0 <= x <= L, got x={x}, L={L}")
    stream = as_stream(rng)
    bs_a = np.asarray(bs, dtype=float).reshape(-1)
    cells_a = np.asarray(cells, dtype=float).reshape(-1, 2)
    f_a = np.asarray(fab_cells, dtype=float).reshape(-1, 2)
    over = np.empty(reps if keep_overshoot else 1)
    mean, m2, capped = _walk_kernel(
        stream.state, float(x), float(L), float(rho), bs_a, cells_a, f_a,
        -1 if horizon is None else int(horizon), int(reps), int(step_cap),
        keep_overshoot, over)
    names = ["pgf", "tau", "exit_right", "overshoot"]
    names += [f"h_plus[{_key_b(b)}]" for b in bs_a]
    names += [f"h_minus[{_key_b(b)}]" for b in bs_a]
    names += [f"resolvent[{_key_cell(c)}]" for c in cells_a]
    names += [f"f_ab[{_key_cell(c)}]" for c in f_a]
    stats = {nm: RunningStats(int(reps), float(mean[i]), float(m2[i]))
             for i, nm in enumerate(names)}
    return RwPathStats(x=float(x), L=float(L), rho=float(rho), reps=int(reps),
                       stats=stats, capped=int(capped),
                       overshoots=over if keep_overshoot else None)


@njit(cache=True)
def _laplace_draws(state, count):
    out = np.empty(count)
    for i in range(count):
        out[i] = laplace(state)
    return out


def laplace_steps(count: int, rng) -> np.ndarray:
    """Raw Laplace(1) increments (for moment checks)."""
    return _laplace_draws(as_stream(rng).state, int(count))


@dataclass(frozen=True)
class BoundCheck:
    """MC estimate against a closed-form upper bound, with 3 SE slack."""

    estimate: float
    se: float
    bound: float
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def resolvent_mc_and_bound(x: float, rho: float, K: float, cell, reps: int, rng,
                           slack_se: float = 3.0) -> BoundCheck:
    """Estimate R_[a,b](x, ρ, K) and compare with 3(b-a)(b+2)(x+2)."""
    a, b = float(cell[0]), float(cell[1])
    if not (0.0 <= b - a <= 1.0):
        raise ValueError("cell length must lie in [0, 1]")
    bound = analytics.resolvent_bound(a, b, x)
    if a == b:
        return BoundCheck(0.0, 0.0, bound, True)
    st = laplace_walk_mc(x, K, rho, reps, rng, cells=[(a, b)])
    r = st.stats[f"resolvent[{_key_cell((a, b))}]"]
    se = 0.0 if math.isnan(r.se) else r.se
    return BoundCheck(r.mean, se, bound, r.mean <= bound + slack_se * se)


def f_ab_check(a: float, b: float, x: float, rho: float, L: float, reps: int, rng,
               slack_se: float = 3.0) -> BoundCheck:
    """Estimate F_{a,b}(x, ρ, L) and compare with its closed-form upper bound."""
    bound = analytics.f_ab_bound(a, b, x, rho, L)
    st = laplace_walk_mc(x, L, rho, reps, rng, fab_cells=[(a, b)])
    f = st.stats[f"f_ab[{_key_cell((a, b))}]"]
    se = 0.0 if math.isnan(f.se) else f.se
    return BoundCheck(f.mean, se, bound, f.mean <= bound + slack_se * se)


def many_to_one_rw(gamma: float, beta: float, K: float, x: float, generations: int,
                   reps: int, rng) -> tuple[float, float]:
    """Walk-side estimate of E_x[#particles of generation <= g that stayed in [0, K]].

    Uses the spine representation: a Laplace walk from 2β_c x, killed outside
    [0, 2β_c K], weighting step n by (β/β_c)^n e^{S_n/(4β_c)}, times e^{-x/2}.
    Returns (estimate, standard error).
    """
    bc = critical_beta(gamma)
    b = 1.0 / (4.0 * bc)
    st = laplace_walk_mc(2.0 * bc * x, 2.0 * bc * K, beta / bc - 1.0, reps, rng,
                         bs=[b], horizon=int(generations))
    h = st.stats[f"h_plus[{_key_b(b)}]"]
    f = math.exp(-x / 2.0)
    return f * h.mean, f * h.se


__all__ = [
    "RwPathStats", "BoundCheck", "laplace_walk_mc", "laplace_steps",
    "resolvent_mc_and_bound", "f_ab_check", "many_to_one_rw", "Stream",
]
