"""Path-wise coupling of a killed branching walk with a graph component.

The tree is grown first and labelled. For a real particle ``s`` and a vertex
``j`` the uniform ``U_{s,j}`` is then reconstructed from the offspring
indicator ``1{s has a child in cell j}``: given the indicator it is uniform on
``[0, q_{s,j}]`` (child present) or ``(q_{s,j}, 1]`` (absent), where
``q_{s,j} = 1 - exp(-μ_β(cell_j - X_s))``. This has the correct joint law
because ``U_{s,j}`` enters the tree only through its indicator.

An edge ``{i, j}`` is decided by the ≺-smallest real particle ``s`` among the
cells of ``i`` and ``j`` (``U_{s,other} <= p_ij``); if neither cell holds a
real particle a fresh uniform ``R_ij`` decides. The component of ``v`` in
the graph induced on ``[m, n]`` is explored breadth first with these lazily
evaluated edges, and the inclusions between projected real particles and
BFS balls are checked at every depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .brw import REAL, BrwTree, Embedding, OffspringIntensity, TreeCaps, grow_tree, mass_array
from .model import ContractError, ModelParams, kernel_value, resolve_beta
from .rng import as_stream, derive, to_unit

_SLACK = 1e-12


@njit(cache=True)
def _pair_uniforms(key, a, b):
    out = np.empty(a.shape[0])
    for k in range(a.shape[0]):
        out[k] = to_unit(derive(derive(key, a[k]), b[k]))
    return out


@dataclass
class CoupledRealization:
    """Joint sample of a component and a labelled tree.

    ``distance`` maps component vertices to BFS distance from ``v``;
    ``projection`` is the set of cells holding real particles and
    ``real_generation`` the generation of that particle.
    """

    v: int
    m: int
    n: int
    mode: str
    component: np.ndarray
    distance: dict[int, int]
    tree: BrwTree
    projection: set[int]
    real_generation: dict[int, int]
    inclusion_violations: int = 0
    kernel_checks: int = 0
    kernel_violations: int = 0
    details: list = field(default_factory=list, repr=False)


class _Coupler:
    def __init__(self, params: ModelParams, beta: float, emb: Embedding, tree: BrwTree,
                 key_u: int, key_r: int):
        self.gamma = params.gamma
        self.beta = beta
        self.kernel = params.kernel
        self.emb = emb
        self.tree = tree
        self.mu = OffspringIntensity(params.gamma, beta)
        m, n = emb.m, emb.n
        self.m, self.n = m, n
        self.key_u = np.uint64(key_u)
        self.key_r = np.uint64(key_r)
        self.verts = np.arange(m, n + 1, dtype=np.int64)
        lo = np.empty(n - m + 1)
        hi = np.empty(n - m + 1)
        for k, j in enumerate(self.verts):
            lo[k], hi[k] = emb.cell_bounds(int(j))
        self.cell_lo, self.cell_hi = lo, hi
        real = np.flatnonzero(tree.label == REAL)
        self.real_of = np.full(n - m + 1, -1, dtype=np.int64)
        self.real_of[tree.cell[real] - m] = real
        # (parent id, cell) pairs of children of real particles
        child = np.flatnonzero(tree.parent >= 0)
        child = child[tree.label[tree.parent[child]] == REAL]
        self.child_keys = np.unique(tree.parent[child] * (n + 1) + tree.cell[child])

    def q(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Probability that particle s has at least one child in the cell of t."""
        x = self.tree.position[s]
        lo = self.cell_lo[t - self.m] - x
        hi = self.cell_hi[t - self.m] - x
        return -np.expm1(-mass_array(self.mu, lo, hi))

    def neighbours(self, u: int) -> np.ndarray:
        w = self.verts[self.verts != u]
        su = self.real_of[u - self.m]
        sw = self.real_of[w - self.m]
        use_u = (su >= 0) & ((sw < 0) | (su < sw))
        dec = np.where(use_u, su, sw)
        tgt = np.where(use_u, w, u)
        lo = np.minimum(u, w)
        hi = np.maximum(u, w)
        p = np.asarray(kernel_value(lo, hi, self.gamma, self.beta, self.kernel), dtype=float)
        edge = np.zeros(w.shape[0], dtype=bool)
        has = dec >= 0
        if has.any():
            d, t = dec[has], tgt[has]
            q = self.q(d, t)
            born = np.isin(d * (self.n + 1) + t, self.child_keys)
            z = _pair_uniforms(self.key_u, d.astype(np.uint64), t.astype(np.uint64))
            U = np.where(born, z * q, q + z * (1.0 - q))
            edge[has] = U <= p[has]
        free = ~has
        if free.any():
            R = _pair_uniforms(self.key_r, lo[free].astype(np.uint64),
                               hi[free].astype(np.uint64))
            edge[free] = R <= p[free]
        return w[edge]

    def bfs(self, v: int) -> dict[int, int]:
        dist = {v: 0}
        frontier = [v]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for w in self.neighbours(u):
                    w = int(w)
                    if w not in dist:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
        return dist

    def kernel_inequality(self, mode: str) -> tuple[int, int, list]:
        """Count one-step inequality checks and violations over real particles."""
        tree = self.tree
        real = np.flatnonzero(tree.label == REAL)
        checks = viol = 0
        bad = []
        for s in real:
            i = int(tree.cell[s])
            js = self.verts[self.verts != i]
            if mode == "upper":
                js = js[js >= 2]
            if js.size == 0:
                continue
            q = self.q(np.full(js.shape[0], s), js)
            p = np.asarray(kernel_value(np.minimum(i, js), np.maximum(i, js), self.gamma,
                                        self.beta, self.kernel), dtype=float)
            if mode == "lower":
                ok = q <= p * (1.0 + _SLACK)
            else:
                ok = q >= p * (1.0 - _SLACK)
            checks += int(js.size)
            nb = int(np.count_nonzero(~ok))
            if nb:
                viol += nb
                k = int(np.flatnonzero(~ok)[0])
                bad.append(("kernel", int(s), i, int(js[k]), float(q[k]), float(p[k])))
        return checks, viol, bad


def coupled_realization(params: ModelParams, v: int, range_: tuple[int, int], mode: str,
                        rng, caps: TreeCaps = TreeCaps(max_particles=10**6),
                        check_kernel: bool = True) -> CoupledRealization:
    """Build the coupled (component, tree) pair and audit the inclusions."""
    m, n = int(range_[0]), int(range_[1])
    beta = resolve_beta(params).beta
    if not (0.0 < beta <= 0.5):
        raise ContractError(f"coupling needs beta in (0, 1/2], got {beta}")
    if mode == "lower":
        if not (m <= v <= n):
            raise ValueError("lower mode needs m <= v <= n")
    elif mode == "upper":
        if not (v <= n and 1 + (v >= 2) <= m <= v):
            raise ValueError("upper mode needs v <= n and 1 + 1{v>=2} <= m <= v")
    else:
        raise ValueError("mode must be 'lower' or 'upper'")
    stream = as_stream(rng)
    emb = Embedding(mode, m, n)
    mu = OffspringIntensity(params.gamma, beta)
    tree = grow_tree(mu, emb.position(v), emb.kill_interval(), emb, caps, stream.spawn(1))
    if tree.censored:
        raise RuntimeError("particle cap hit while growing a coupled tree")
    cp = _Coupler(params, beta, emb, tree, stream.spawn(2).key, stream.spawn(3).key)
    dist = cp.bfs(v)

    real = np.flatnonzero(tree.label == REAL)
    real_gen = {int(tree.cell[s]): int(tree.generation[s]) for s in real}
    details = []
    viol = 0
    if mode == "lower":
        # every projected real particle is in the component no deeper than its generation
        for c, g in real_gen.items():
            if dist.get(c, math.inf) > g:
                viol += 1
                details.append(("lower-inclusion", c, g, dist.get(c)))
    else:
        # every component vertex is hit by a real particle no later than its distance
        for j, d in dist.items():
            if real_gen.get(j, math.inf) > d:
                viol += 1
                details.append(("upper-inclusion", j, d, real_gen.get(j)))
    checks = kviol = 0
    if check_kernel:
        checks, kviol, bad = cp.kernel_inequality(mode)
        details += bad
    comp = np.array(sorted(dist), dtype=np.int64)
    return CoupledRealization(v=v, m=m, n=n, mode=mode, component=comp, distance=dist,
                              tree=tree, projection=set(real_gen), real_generation=real_gen,
                              inclusion_violations=viol, kernel_checks=checks,
                              kernel_violations=kviol, details=details)
