"""Killed γ-branching random walk, logarithmic embeddings and particle labels.

A particle at ``x`` has children at the atoms of a Poisson process with
intensity ``μ_β(dy) = β (e^{(1-γ)y} 1{y<0} + e^{γy} 1{y>=0}) dy`` shifted by
``x``. Killing is hereditary, so only children inside the kill interval are
ever generated: with ``A`` the antiderivative of ``μ_β``, the children of a
particle are ``x + A^{-1}(A(a - x) + E_1 + ... + E_k)`` for unit-rate
exponential arrivals ``E_i`` while the argument stays below ``A(b - x)``.
That is the restricted Poisson process, already in ascending order.

Generations are built breadth first. Within a generation, parents are taken
in ascending position and each parent's children in ascending position,
which is the exploration order ≺. When an embedding is supplied every
particle gets a label online: the root is real; a child of a real parent is
real if its cell holds no earlier real particle and colliding otherwise; all
descendants of colliding (or fake) particles are fake.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .model import critical_beta
from .rng import as_stream, exponential

REAL, COLLIDING, FAKE, UNLABELED = 0, 1, 2, 3


class Label(IntEnum):
    REAL = REAL
    COLLIDING = COLLIDING
    FAKE = FAKE
    UNLABELED = UNLABELED


_LABEL_NAMES = {REAL: "real", COLLIDING: "colliding", FAKE: "fake", UNLABELED: "unlabeled"}
KIND_NONE, KIND_LOWER, KIND_UPPER = -1, 0, 1


# ------------------------------------------------------------------ intensity

@njit(cache=True, inline="always")
def _antider(y, gamma, beta):
    c0 = beta / (1.0 - gamma)
    if y < 0.0:
        return c0 * math.exp((1.0 - gamma) * y)
    if gamma > 0.0:
        return c0 + beta * math.expm1(gamma * y) / gamma
    return c0 + beta * y


@njit(cache=True, inline="always")
def _antider_inv(t, gamma, beta):
    c0 = beta / (1.0 - gamma)
    if t < c0:
        return math.log(t / c0) / (1.0 - gamma)
    s = t - c0
    if gamma > 0.0:
        return math.log1p(gamma * s / beta) / gamma
    return s / beta


@dataclass(frozen=True)
class OffspringIntensity:
    gamma: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0) or not self.beta > 0:
            raise ValueError("need gamma in [0, 1) and beta > 0")

    def antiderivative(self, y: float) -> float:
        if y == -math.inf:
            return 0.0
        return _antider(float(y), self.gamma, self.beta)

    def inverse(self, t: float) -> float:
        return _antider_inv(float(t), self.gamma, self.beta)

    def mass(self, a: float, b: float) -> float:
        """μ_β([a, b]) in closed form."""
        if a > b:
            raise ValueError("need a <= b")
        return max(self.antiderivative(b) - self.antiderivative(a), 0.0)


def intensity_mass(mu: OffspringIntensity, a: float, b: float) -> float:
    return mu.mass(a, b)


@njit(cache=True)
def _mass_vec(lo, hi, gamma, beta):
    out = np.empty(lo.shape[0])
    for k in range(lo.shape[0]):
        out[k] = max(_antider(hi[k], gamma, beta) - _antider(lo[k], gamma, beta), 0.0)
    return out


def mass_array(mu: OffspringIntensity, lo, hi) -> np.ndarray:
    """Vectorised μ_β([lo_k, hi_k])."""
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    return _mass_vec(lo, hi, float(mu.gamma), float(mu.beta))


@njit(cache=True)
def _offspring(state, x, a, b, gamma, beta, out):
    """Children of a particle at x inside [a, b]; returns their count (<= out size)."""
    lo = a - x
    hi = b - x
    t = 0.0 if lo == -np.inf else _antider(lo, gamma, beta)
    tb = _antider(hi, gamma, beta)
    k = 0
    while True:
        t += exponential(state)
        if t >= tb:
            break
        y = _antider_inv(t, gamma, beta)
        if y < lo:
            y = lo
        elif y > hi:
            y = hi
        if k < out.shape[0]:
            out[k] = x + y
        k += 1
    return k


def sample_offspring(mu: OffspringIntensity, parent_pos: float, kill: tuple[float, float],
                     rng) -> np.ndarray:
    """Ascending positions of the children of ``parent_pos`` that land in ``kill``."""
    a, b = float(kill[0]), float(kill[1])
    if not (a <= parent_pos <= b):
        raise ValueError("parent must lie inside the kill interval")
    stream = as_stream(rng)
    buf = np.empty(64)
    while True:
        snap = stream.state.copy()
        k = _offspring(stream.state, float(parent_pos), a, b, mu.gamma, mu.beta, buf)
        if k <= buf.shape[0]:
            return buf[:k].copy()
        stream.state[:] = snap
        buf = np.empty(2 * k)


# ------------------------------------------------------------------ embeddings

@njit(cache=True, inline="always")
def _cell_lower(x, m, n):
    if x >= math.log(n + 1.0):
        return n
    if x <= 0.0:
        i = 1
    else:
        i = np.int64(math.floor(math.exp(x)))
    if i < 1:
        i = 1
    while math.log(i + 1.0) <= x:
        i += 1
    while i > 1 and math.log(float(i)) > x:
        i -= 1
    return min(max(i, m), n)


@njit(cache=True, inline="always")
def _cell_upper(x, m, n):
    if x <= 0.0:
        return min(max(1, m), n)
    if x > math.log(2.0 * n - 1.0):
        return n
    i = np.int64(math.ceil((math.exp(x) + 1.0) / 2.0))
    if i < 2:
        i = 2
    while x > math.log(2.0 * i - 1.0):
        i += 1
    while i > 2 and x <= math.log(2.0 * i - 3.0):
        i -= 1
    return min(max(i, m), n)


@njit(cache=True, inline="always")
def _cell(x, kind, m, n):
    if kind == KIND_LOWER:
        return _cell_lower(x, m, n)
    return _cell_upper(x, m, n)


@dataclass(frozen=True)
class Embedding:
    """Vertex <-> position dictionary on the range ``[m, n]``.

    lower: ``x_i = ln i``, cell ``[ln i, ln(i+1))``.
    upper: ``x_i = ln(2i-1)``, cells ``{0}`` for i = 1 and ``(ln(2i-3), ln(2i-1)]``.
    """

    kind: str
    m: int
    n: int

    def __post_init__(self):
        if self.kind not in ("lower", "upper"):
            raise ValueError("kind must be 'lower' or 'upper'")
        if not (1 <= self.m <= self.n):
            raise ValueError("need 1 <= m <= n")

    @property
    def code(self) -> int:
        return KIND_LOWER if self.kind == "lower" else KIND_UPPER

    def position(self, i: int) -> float:
        return math.log(i) if self.kind == "lower" else math.log(2 * i - 1)

    def cell_bounds(self, i: int) -> tuple[float, float]:
        """(left, right) end points of the cell of vertex i."""
        if self.kind == "lower":
            return math.log(i), math.log(i + 1)
        if i == 1:
            return 0.0, 0.0
        return math.log(2 * i - 3), math.log(2 * i - 1)

    def kill_interval(self) -> tuple[float, float]:
        if self.kind == "lower":
            return math.log(self.m), math.log(self.n + 1)
        lo = 0.0 if self.m == 1 else math.log(2 * self.m - 3)
        return lo, math.log(2 * self.n - 1)

    def label(self, x: float) -> int:
        """ℓ(x): the vertex whose cell contains x (clamped into [m, n])."""
        return int(_cell(float(x), self.code, self.m, self.n))

    def unclamped_label(self, x: float) -> int:
        return int(_cell(float(x), self.code, 1, np.iinfo(np.int64).max))


# ------------------------------------------------------------------ tree growth

@njit(cache=True)
def _grow_kernel(state, gamma, beta, root, a, b, kind, m, n, max_particles, max_gen,
                 pos, par, gen, lab, cell):
    buf = np.empty(256)
    pos[0] = root
    par[0] = -1
    gen[0] = 0
    occ = np.zeros(n - m + 1 if kind >= 0 else 1, dtype=np.int8)
    if kind >= 0:
        c = _cell(root, kind, m, n)
        cell[0] = c
        lab[0] = REAL
        occ[c - m] = 1
    else:
        cell[0] = -1
        lab[0] = UNLABELED
    count = 1
    g0 = 0
    g1 = 1
    g = 0
    censored = False
    while g0 < g1 and (max_gen < 0 or g < max_gen) and not censored:
        order = np.argsort(pos[g0:g1], kind="mergesort")
        for oi in range(order.shape[0]):
            p = g0 + order[oi]
            s0 = state[0]
            k = _offspring(state, pos[p], a, b, gamma, beta, buf)
            if k > buf.shape[0]:
                # replay the same arrivals into a larger buffer
                buf = np.empty(2 * k)
                state[0] = s0
                k = _offspring(state, pos[p], a, b, gamma, beta, buf)
            for q in range(k):
                if count >= max_particles:
                    censored = True
                    break
                pos[count] = buf[q]
                par[count] = p
                gen[count] = g + 1
                if kind >= 0:
                    c = _cell(buf[q], kind, m, n)
                    cell[count] = c
                    if lab[p] != REAL:
                        lab[count] = FAKE
                    elif occ[c - m] != 0:
                        lab[count] = COLLIDING
                    else:
                        lab[count] = REAL
                        occ[c - m] = 1
                else:
                    cell[count] = -1
                    lab[count] = UNLABELED
                count += 1
            if censored:
                break
        g0 = g1
        g1 = count
        g += 1
    return count, censored


@dataclass(frozen=True)
class TreeCaps:
    max_particles: int = 10_000_000
    max_generation: int | None = None


@dataclass
class BrwTree:
    """A realised killed branching random walk (arrays indexed by particle id).

    Particle ids follow the exploration order ≺, so ``id`` 0 is the root and
    generation blocks are contiguous.
    """

    position: np.ndarray
    parent: np.ndarray
    generation: np.ndarray
    label: np.ndarray
    cell: np.ndarray
    kill_interval: tuple[float, float]
    root_position: float
    censored: bool
    embedding: Embedding | None = None

    def __len__(self) -> int:
        return int(self.position.shape[0])

    @property
    def progeny(self) -> int:
        return len(self)

    def records(self):
        for t in range(len(self)):
            yield (t, int(self.parent[t]), int(self.generation[t]),
                   float(self.position[t]), _LABEL_NAMES[int(self.label[t])])

    def dump(self) -> str:
        """Text lines ``id parent gen position label`` (parent -1 for the root)."""
        return "".join(f"{t} {p} {g} {x!r} {lab}\n" for t, p, g, x, lab in self.records())


def grow_tree(mu: OffspringIntensity, root_pos: float, kill: tuple[float, float],
              embedding: Embedding | None = None, caps: TreeCaps = TreeCaps(),
              rng=0) -> BrwTree:
    """Grow the branching walk from ``root_pos``, killed outside ``kill``."""
    a, b = float(kill[0]), float(kill[1])
    if not (a <= root_pos <= b):
        raise ValueError("root must lie inside the kill interval")
    stream = as_stream(rng)
    cap = int(caps.max_particles)
    size = min(cap, 4096)
    kind = KIND_NONE if embedding is None else embedding.code
    m, n = (1, 1) if embedding is None else (embedding.m, embedding.n)
    max_gen = -1 if caps.max_generation is None else int(caps.max_generation)
    while True:
        snap = stream.state.copy()
        pos = np.empty(size)
        par = np.empty(size, dtype=np.int64)
        gen = np.empty(size, dtype=np.int32)
        lab = np.empty(size, dtype=np.int8)
        cell = np.empty(size, dtype=np.int64)
        count, censored = _grow_kernel(stream.state, float(mu.gamma), float(mu.beta),
                                       float(root_pos), a, b, kind, m, n, size, max_gen,
                                       pos, par, gen, lab, cell)
        if censored and size < cap:
            # buffer was the binding limit, not the cap: replay with more room
            stream.state[:] = snap
            size = min(cap, 4 * size)
            continue
        break
    return BrwTree(position=pos[:count].copy(), parent=par[:count].copy(),
                   generation=gen[:count].copy(), label=lab[:count].copy(),
                   cell=cell[:count].copy(), kill_interval=(a, b),
                   root_position=float(root_pos), censored=bool(censored),
                   embedding=embedding)


def relabel(tree: BrwTree, embedding: Embedding) -> np.ndarray:
    """Recompute labels from positions and parent links (order = particle id)."""
    lab = np.empty(len(tree), dtype=np.int8)
    occ = set()
    for t in range(len(tree)):
        c = embedding.label(tree.position[t])
        p = tree.parent[t]
        if p < 0:
            lab[t] = REAL
            occ.add(c)
        elif lab[p] != REAL:
            lab[t] = FAKE
        elif c in occ:
            lab[t] = COLLIDING
        else:
            lab[t] = REAL
            occ.add(c)
    return lab


def collision_census(tree: BrwTree) -> dict:
    """Counts by label, and colliding counts per cell."""
    if tree.embedding is None:
        raise ValueError("tree was grown without an embedding")
    lab = tree.label
    coll = tree.cell[lab == COLLIDING]
    cells, counts = np.unique(coll, return_counts=True)
    return {
        "real": int(np.sum(lab == REAL)),
        "colliding": int(np.sum(lab == COLLIDING)),
        "fake": int(np.sum(lab != REAL)),
        "fake_descendant": int(np.sum(lab == FAKE)),
        "colliding_per_cell": {int(c): int(k) for c, k in zip(cells, counts)},
    }


# ------------------------------------------------------------------ progeny counting

@njit(cache=True)
def _count_kernel(state, gamma, beta, root, a, b, max_gen, cap, spos, sgen, buf, by_gen):
    """Total progeny by depth-first traversal (order irrelevant for counts)."""
    for g in range(by_gen.shape[0]):
        by_gen[g] = 0
    spos[0] = root
    sgen[0] = 0
    top = 1
    count = 0
    while top > 0:
        top -= 1
        x = spos[top]
        g = sgen[top]
        count += 1
        if g < by_gen.shape[0]:
            by_gen[g] += 1
        if count >= cap:
            return count, True
        if max_gen >= 0 and g >= max_gen:
            continue
        s0 = state[0]
        k = _offspring(state, x, a, b, gamma, beta, buf)
        if k > buf.shape[0]:
            buf = np.empty(2 * k)
            state[0] = s0
            k = _offspring(state, x, a, b, gamma, beta, buf)
        if top + k > spos.shape[0]:
            return count, True
        for q in range(k):
            spos[top] = buf[q]
            sgen[top] = g + 1
            top += 1
    return count, False


@njit(cache=True)
def _local_limit_batch(state, gamma, beta, reps, cap, left, barrier_out, progeny_out, cens_out):
    spos = np.empty(cap + 1)
    sgen = np.empty(cap + 1, dtype=np.int64)
    buf = np.empty(4096)
    by_gen = np.zeros(0, dtype=np.int64)
    for r in range(reps):
        X = exponential(state)
        c, cens = _count_kernel(state, gamma, beta, 0.0, left, X, -1, cap,
                                spos, sgen, buf, by_gen)
        barrier_out[r] = X
        progeny_out[r] = c
        cens_out[r] = cens


@njit(cache=True)
def _generation_batch(state, gamma, beta, root, a, b, max_gen, reps, cap, totals, cens):
    spos = np.empty(cap + 1)
    sgen = np.empty(cap + 1, dtype=np.int64)
    buf = np.empty(4096)
    by_gen = np.zeros(max_gen + 1, dtype=np.int64)
    for r in range(reps):
        c, cs = _count_kernel(state, gamma, beta, root, a, b, max_gen, cap,
                              spos, sgen, buf, by_gen)
        totals[r] = c
        cens[r] = cs


@dataclass(frozen=True)
class LocalLimitSample:
    barrier: float
    progeny: int
    censored: bool


def local_limit_progeny(gamma: float, caps: TreeCaps = TreeCaps(max_particles=10**6),
                        rng=0) -> LocalLimitSample:
    """One draw of the critical local-limit progeny T_(-inf, X], X ~ Exp(1)."""
    b, p, c = local_limit_batch(gamma, 1, rng, cap=caps.max_particles)
    return LocalLimitSample(float(b[0]), int(p[0]), bool(c[0]))


def local_limit_batch(gamma: float, reps: int, rng, cap: int = 10**6,
                      left: float = -math.inf):
    """Arrays (barriers, progenies, censored flags) of ``reps`` local-limit draws.

    ``left`` adds an optional lower kill barrier (kill set (-inf, left) ∪ (X, inf));
    the default has none. A finite barrier gives a light-tailed variant with an
    exact mean, useful for validating the sampler.
    """
    bc = critical_beta(gamma)
    if not (0.0 <= gamma < 0.5):
        raise ValueError("need gamma in [0, 1/2)")
    stream = as_stream(rng)
    bar = np.empty(reps)
    prog = np.empty(reps, dtype=np.int64)
    cens = np.empty(reps, dtype=np.bool_)
    _local_limit_batch(stream.state, float(gamma), bc, int(reps), int(cap), float(left),
                       bar, prog, cens)
    return bar, prog, cens


def killed_generation_counts(gamma: float, beta: float, K: float, x: float,
                             generations: int, reps: int, rng,
                             cap: int = 10**6) -> tuple[np.ndarray, np.ndarray]:
    """Per-replication number of particles of generation <= g in the walk
    killed outside [0, K] and started at x; also returns censored flags."""
    stream = as_stream(rng)
    tot = np.empty(reps, dtype=np.int64)
    cens = np.empty(reps, dtype=np.bool_)
    _generation_batch(stream.state, float(gamma), float(beta), float(x), 0.0, float(K),
                      int(generations), int(reps), int(cap), tot, cens)
    return tot, cens


def many_to_one_brw(gamma: float, beta: float, K: float, x: float, generations: int,
                    reps: int, rng) -> tuple[float, float]:
    """Branching-side estimate (mean, SE) of E_x[#{t: |t| <= g, path in [0, K]}]."""
    tot, cens = killed_generation_counts(gamma, beta, K, x, generations, reps, rng)
    if cens.any():
        raise RuntimeError("particle cap hit in a many-to-one replication")
    t = tot.astype(float)
    return float(t.mean()), float(t.std(ddof=1) / math.sqrt(reps))


def progeny_sample(gamma: float, beta: float, K: float, x: float, reps: int, rng,
                   cap: int = 10**7) -> tuple[np.ndarray, np.ndarray]:
    """Total progeny T_[0,K] of ``reps`` independent trees started at x."""
    return killed_generation_counts(gamma, beta, K, x, -1, reps, rng, cap=cap)
