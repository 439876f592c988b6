"""Random d-regular multigraphs from the pairing model, planted sampling, and
graph/configuration statistics.

Colours are 0-based throughout (``0..q-1``).  A graph is stored as a perfect
matching on half-edges; vertex ``v`` owns the half-edges
``offsets[v]:offsets[v+1]`` (for a d-regular graph, ``v*d .. v*d+d-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from ._seeding import as_rng

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MultiGraph:
    n: int
    pairing: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        pairing = np.ascontiguousarray(self.pairing, dtype=np.int64)
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        h = len(pairing)
        if offsets.shape != (self.n + 1,) or offsets[0] != 0 or offsets[-1] != h:
            raise ValueError("offsets do not describe the half-edge array")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("negative degree")
        if h % 2:
            raise ValueError("odd number of half-edges")
        idx = np.arange(h)
        if h and (pairing.min() < 0 or pairing.max() >= h):
            raise ValueError("pairing index out of range")
        if np.any(pairing[pairing] != idx) or np.any(pairing == idx):
            raise ValueError("pairing must be a fixed-point-free involution")
        pairing.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "pairing", pairing)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_pairing(cls, n: int, d: int, pairing) -> "MultiGraph":
        return cls(n, np.asarray(pairing), np.arange(n + 1, dtype=np.int64) * d)

    @classmethod
    def from_edges(cls, n: int, edges) -> "MultiGraph":
        """Build from an edge list; a self-loop ``(u, u)`` is listed once."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        deg = np.bincount(edges.ravel(), minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=offsets[1:])
        cursor = offsets[:-1].copy()
        pairing = np.empty(offsets[-1], dtype=np.int64)
        for u, v in edges:
            a = cursor[u]
            cursor[u] += 1
            b = cursor[v]
            cursor[v] += 1
            pairing[a] = b
            pairing[b] = a
        return cls(n, pairing, offsets)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def d(self) -> int | None:
        """Common degree, or None for an irregular graph."""
        if self.n == 0:
            return 0
        deg = self.degrees
        return int(deg[0]) if np.all(deg == deg[0]) else None

    @cached_property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)

    @cached_property
    def neighbours(self) -> np.ndarray:
        """Vertex at the far end of every half-edge (CSR-aligned with ``offsets``)."""
        return self.owner[self.pairing]

    @cached_property
    def edge_halves(self) -> np.ndarray:
        """Smaller half-edge of each edge, in canonical edge order."""
        h = np.arange(len(self.pairing))
        return h[h < self.pairing]

    @cached_property
    def edges(self) -> np.ndarray:
        h = self.edge_halves
        return np.stack([self.owner[h], self.owner[self.pairing[h]]], axis=1)

    @property
    def m(self) -> int:
        return len(self.pairing) // 2

    def to_text(self) -> str:
        lines = [f"{self.n} {self.d if self.d is not None else 0}"]
        lines.extend(f"{u} {v}" for u, v in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MultiGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 2 or any(len(r) != 2 for r in rows[1:]):
            raise ValueError("graph text must be an 'n d' header followed by 'u v' edge lines")
        n, d = int(rows[0][0]), int(rows[0][1])
        g = cls.from_edges(n, [(int(a), int(b)) for a, b in rows[1:]])
        if d and g.d != d:
            raise ValueError(f"header declares degree {d} but graph is not {d}-regular")
        return g


def write_graph(g: MultiGraph, path) -> None:
    Path(path).write_text(g.to_text(), newline="\n")


def read_graph(path) -> MultiGraph:
    return MultiGraph.from_text(Path(path).read_text())


def sample_regular(n: int, d: int, seed=None) -> MultiGraph:
    """Uniform perfect matching on the ``n*d`` half-edges."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if (n * d) % 2:
        raise ValueError("d*n must be even")
    rng = as_rng(seed)
    perm = rng.permutation(n * d)
    pairing = np.empty(n * d, dtype=np.int64)
    pairing[perm[0::2]] = perm[1::2]
    pairing[perm[1::2]] = perm[0::2]
    return MultiGraph.from_pairing(n, d, pairing)


# ----------------------------------------------------------------------------
# statistics


@dataclass(frozen=True, eq=False)
class IntegerStatistics:
    """Colour-class sizes and edge counts between classes.

    ``edge_counts[s, t]`` for ``s != t`` is the number of edges joining the two
    classes (stored symmetrically); ``edge_counts[s, s]`` is the number of
    edges inside class ``s``.
    """

    n: int
    d: int
    vertex_counts: np.ndarray
    edge_counts: np.ndarray

    @property
    def q(self) -> int:
        return len(self.vertex_counts)

    def violations(self) -> list[str]:
        out = []
        vc, ec = self.vertex_counts, self.edge_counts
        if vc.sum() != self.n:
            out.append("vertex counts do not sum to n")
        if np.any(vc < 0) or np.any(ec < 0):
            out.append("negative count")
        if not np.array_equal(ec, ec.T):
            out.append("edge counts not symmetric")
        if np.triu(ec).sum() * 2 != self.n * self.d:
            out.append("edge total differs from d*n/2")
        ends = 2 * np.diag(ec) + ec.sum(axis=1) - np.diag(ec)
        if not np.array_equal(ends, self.d * vc):
            out.append("degree identity 2e(s,s)+sum_t e(s,t) = d*n_s violated")
        return out

    def __eq__(self, other):
        return (
            isinstance(other, IntegerStatistics)
            and (self.n, self.d) == (other.n, other.d)
            and np.array_equal(self.vertex_counts, other.vertex_counts)
            and np.array_equal(self.edge_counts, other.edge_counts)
        )

    def as_distributions(self) -> tuple[np.ndarray, np.ndarray]:
        nu = self.vertex_counts / self.n
        ends = self.edge_counts.astype(float)
        ends[np.diag_indices(self.q)] *= 2
        return nu, ends / (self.n * self.d)


@dataclass(frozen=True)
class ComponentStats:
    sizes: np.ndarray
    edges: np.ndarray = field(repr=False)

    @property
    def sum_squares_rest(self) -> int:
        return int(np.sum(self.sizes[1:].astype(np.int64) ** 2))

    @property
    def largest(self) -> int:
        return int(self.sizes[0]) if len(self.sizes) else 0


def empirical_stats(g: MultiGraph, sigma, q: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Colour frequencies and oriented edge-end statistics of ``(g, sigma)``.

    Every edge is counted in both orientations and the total is normalised by
    ``2|E|``; a self-loop at a vertex of colour ``s`` adds 2 to the ``(s, s)``
    count.
    """
    sigma = np.asarray(sigma)
    if len(sigma) != g.n:
        raise ValueError("configuration length differs from vertex count")
    q = int(sigma.max()) + 1 if q is None else q
    nu = np.bincount(sigma, minlength=q) / g.n
    cu = sigma[g.edges[:, 0]]
    cv = sigma[g.edges[:, 1]]
    counts = np.zeros((q, q))
    np.add.at(counts, (cu, cv), 1)
    counts = counts + counts.T
    return nu, counts / (2 * g.m)


def integer_stats(g: MultiGraph, sigma, q: int) -> IntegerStatistics:
    sigma = np.asarray(sigma)
    vc = np.bincount(sigma, minlength=q).astype(np.int64)
    ec = np.zeros((q, q), dtype=np.int64)
    np.add.at(ec, (sigma[g.edges[:, 0]], sigma[g.edges[:, 1]]), 1)
    ec = ec + ec.T
    ec[np.diag_indices(q)] //= 2
    return IntegerStatistics(g.n, g.d, vc, ec)


def overlap(sigma, sigma2, q: int | None = None) -> np.ndarray:
    sigma, sigma2 = np.asarray(sigma), np.asarray(sigma2)
    if sigma.shape != sigma2.shape:
        raise ValueError("configurations have different lengths")
    if q is None:
        q = int(max(sigma.max(), sigma2.max())) + 1
    out = np.bincount(sigma * q + sigma2, minlength=q * q).reshape(q, q)
    return out / len(sigma)


def log_pairing_rate(nu, rho, d: int) -> float:
    """Per-vertex exponent of Pr[rho^{G,sigma} = rho] in the pairing model."""
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    mask = rho > 0
    prod = np.outer(nu, nu)
    return 0.5 * d * float(np.sum(rho[mask] * np.log(prod[mask] / rho[mask])))


# ----------------------------------------------------------------------------
# integerization and planted sampling


def largest_remainder(target: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(target).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # stable sort keeps ties in index order
        order = np.argsort(-(target - base), kind="stable")
        base[order[:short]] += 1
    return base


def round_statistics(nu, rho, n: int, d: int) -> IntegerStatistics:
    """Integer colour/edge counts close to ``(n*nu, d*n*rho)``.

    Vertex counts use largest-remainder rounding; cross-class edge counts are
    rounded to nearest, then a deterministic pass fixes the parity of every
    class's leftover half-edges and any negative inner-edge count.
    """
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    q = len(nu)
    if (n * d) % 2:
        raise ValueError("d*n must be even")
    if rho.shape != (q, q) or not np.allclose(rho, rho.T, atol=1e-12):
        raise ValueError("rho must be a symmetric q x q matrix")
    if not np.allclose(rho.sum(axis=1), nu, atol=1e-9):
        raise ValueError("rows of rho must sum to nu")

    vc = largest_remainder(n * nu, n)
    target = d * n * rho
    ec = np.floor(target + 0.5).astype(np.int64)
    np.fill_diagonal(ec, 0)
    ec[vc == 0, :] = 0
    ec[:, vc == 0] = 0

    def leftover():
        return d * vc - ec.sum(axis=1)

    odd = [s for s in range(q) if leftover()[s] % 2]
    for a, b in zip(odd[0::2], odd[1::2]):
        step = 1 if (ec[a, b] < target[a, b] or ec[a, b] == 0) else -1
        ec[a, b] += step
        ec[b, a] += step

    for s in range(q):
        while leftover()[s] < 0:
            t = max((t for t in range(q) if t != s), key=lambda t: ec[s, t])
            if ec[s, t] < 2:
                raise ValueError("statistics cannot be realised at this n")
            ec[s, t] -= 2
            ec[t, s] -= 2

    left = leftover()
    if np.any(left % 2) or np.any(left < 0):
        raise ValueError("statistics cannot be realised at this n")
    ec[np.diag_indices(q)] = left // 2
    stats = IntegerStatistics(n, d, vc, ec)
    bad = stats.violations()
    if bad:
        raise ValueError("; ".join(bad))
    return stats


def sample_planted(stats: IntegerStatistics, seed=None) -> tuple[MultiGraph, np.ndarray]:
    """Uniform (graph, colouring) pair realising ``stats`` exactly."""
    bad = stats.violations()
    if bad:
        raise ValueError("infeasible statistics: " + "; ".join(bad))
    rng = as_rng(seed)
    n, d, q = stats.n, stats.d, stats.q
    vc, ec = stats.vertex_counts, stats.edge_counts
    starts = np.concatenate([[0], np.cumsum(vc)])
    halves = [rng.permutation(np.arange(starts[s] * d, starts[s + 1] * d)) for s in range(q)]
    cursor = [0] * q
    pairing = np.empty(n * d, dtype=np.int64)

    def take(s, k):
        out = halves[s][cursor[s]:cursor[s] + k]
        cursor[s] += k
        return out

    for s in range(q):
        for t in range(s + 1, q):
            a, b = take(s, ec[s, t]), take(t, ec[s, t])
            pairing[a] = b
            pairing[b] = a
    for s in range(q):
        inner = take(s, 2 * ec[s, s])
        pairing[inner[0::2]] = inner[1::2]
        pairing[inner[1::2]] = inner[0::2]

    perm = rng.permutation(n)
    slot_colour = np.repeat(np.arange(q), vc)
    sigma = np.empty(n, dtype=np.int64)
    sigma[perm] = slot_colour
    h = np.arange(n * d)
    relabel = perm[h // d] * d + h % d
    new_pairing = np.empty_like(pairing)
    new_pairing[relabel] = relabel[pairing]
    return MultiGraph.from_pairing(n, d, new_pairing), sigma


# ----------------------------------------------------------------------------
# components


@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


@numba.njit(cache=True)
def component_roots(n, eu, ev, active):
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    for e in range(len(eu)):
        if active[e]:
            _union(parent, size, eu[e], ev[e])
    roots = np.empty(n, dtype=np.int64)
    for v in range(n):
        roots[v] = _find(parent, v)
    return roots


def components(g: MultiGraph, active=None, vertices=None) -> ComponentStats:
    """Connected components of ``(V, active edges)``; isolated vertices count.

    ``active`` is a boolean mask over the canonical edge order.  With a
    ``vertices`` mask, only that vertex subset is reported and every active
    edge must lie inside it.
    """
    eu, ev = g.edges[:, 0], g.edges[:, 1]
    if active is None:
        active = np.zeros(g.m, dtype=bool)
    active = np.asarray(active, dtype=bool)
    if active.shape != (g.m,):
        raise ValueError("active mask must have one entry per edge")
    if vertices is not None:
        vertices = np.asarray(vertices, dtype=bool)
        if np.any(active & ~(vertices[eu] & vertices[ev])):
            raise ValueError("active edge leaves the vertex subset")
    roots = component_roots(g.n, eu, ev, active)
    keep = np.ones(g.n, dtype=bool) if vertices is None else vertices
    sizes = np.bincount(roots[keep], minlength=g.n)
    edges = np.bincount(roots[eu[active]], minlength=g.n)
    present = np.flatnonzero(sizes)
    order = present[np.lexsort((present, -sizes[present]))]
    return ComponentStats(sizes[order], edges[order])
