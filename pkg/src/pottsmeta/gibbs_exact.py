"""Exact Boltzmann computations on tiny graphs by full enumeration.

States are indexed in mixed radix with vertex 0 fastest:
``index = sum_v sigma_v * q**v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .meanfield import PottsParams
from .phases import PhaseSpec, membership_mask
from .rgraph import MultiGraph

DEFAULT_STATE_CAP = 2**24


def hamiltonian(g: MultiGraph, sigma) -> int:
    """Number of monochromatic edges, with multiplicity; a self-loop counts once."""
    sigma = np.asarray(sigma)
    e = g.edges
    return int(np.count_nonzero(sigma[e[:, 0]] == sigma[e[:, 1]]))


def state_index(sigma, q: int) -> int:
    return int(np.dot(np.asarray(sigma, dtype=np.int64), q ** np.arange(len(sigma), dtype=np.int64)))


def index_state(i: int, n: int, q: int) -> np.ndarray:
    return (i // q ** np.arange(n, dtype=np.int64)) % q


@dataclass(frozen=True, eq=False)
class ExactContext:
    g: MultiGraph
    p: PottsParams
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        if self.p.q ** self.g.n > self.state_cap:
            raise ValueError(f"q^n = {self.p.q}^{self.g.n} exceeds the state cap {self.state_cap}")

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def q(self) -> int:
        return self.p.q

    @property
    def size(self) -> int:
        return self.q**self.n

    @cached_property
    def radix(self) -> np.ndarray:
        return self.q ** np.arange(self.n, dtype=np.int64)

    @cached_property
    def states(self) -> np.ndarray:
        """``(n, q^n)`` table of colours, vertex-major."""
        idx = np.arange(self.size, dtype=np.int64)
        return ((idx[None, :] // self.radix[:, None]) % self.q).astype(np.int8)

    @cached_property
    def energies(self) -> np.ndarray:
        s = self.states
        h = np.zeros(self.size, dtype=np.int64)
        for u, v in self.g.edges:
            h += s[u] == s[v]
        return h

    @cached_property
    def counts(self) -> np.ndarray:
        out = np.empty((self.size, self.q), dtype=np.int64)
        for c in range(self.q):
            out[:, c] = np.count_nonzero(self.states == c, axis=0)
        return out

    @cached_property
    def log_weights(self) -> np.ndarray:
        return self.p.beta * self.energies

    @cached_property
    def probs(self) -> np.ndarray:
        lw = self.log_weights
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def mask(self, restriction) -> np.ndarray:
        """Boolean state mask from None, a PhaseSpec, a mask, or a predicate."""
        if restriction is None:
            return np.ones(self.size, dtype=bool)
        if isinstance(restriction, PhaseSpec):
            return membership_mask(self.counts, restriction, self.p)
        if callable(restriction):
            return np.asarray(restriction(self.states), dtype=bool)
        m = np.asarray(restriction, dtype=bool)
        if m.shape != (self.size,):
            raise ValueError("state mask has the wrong length")
        return m


def energy_histogram(ctx: ExactContext, restriction=None) -> np.ndarray:
    """``a[k] = #{sigma in S : H(sigma) = k}``, so that ``Z = sum_k a[k] e^{beta k}``."""
    m = ctx.mask(restriction)
    return np.bincount(ctx.energies[m], minlength=ctx.g.m + 1)


def partition_function(ctx: ExactContext, restriction=None) -> float:
    """``log sum_{sigma in S} exp(beta H(sigma))``."""
    m = ctx.mask(restriction)
    if not m.any():
        return -math.inf
    return float(logsumexp(ctx.log_weights[m]))


def marginal(ctx: ExactContext, v: int, boundary: dict | None = None, restriction=None) -> np.ndarray:
    """Exact law of ``sigma_v`` given colours on ``boundary`` and the restriction."""
    m = ctx.mask(restriction).copy()
    for u, c in (boundary or {}).items():
        m &= ctx.states[u] == c
    if not m.any():
        raise ValueError("conditioning event has zero mass")
    lw = ctx.log_weights[m]
    w = np.exp(lw - lw.max())
    out = np.bincount(ctx.states[v][m], weights=w, minlength=ctx.q)
    return out / out.sum()


def _local_fields(g: MultiGraph, states: np.ndarray, v: int, q: int) -> np.ndarray:
    """``(q^n, q)`` counts of non-loop neighbours of ``v`` carrying each colour."""
    lo, hi = g.offsets[v], g.offsets[v + 1]
    nb = g.neighbours[lo:hi]
    nb = nb[nb != v]
    out = np.zeros((states.shape[1], q), dtype=np.int64)
    for u in nb:
        np.add.at(out, (np.arange(states.shape[1]), states[u]), 1)
    return out


def glauber_kernel(ctx: ExactContext) -> sparse.csr_matrix:
    """Heat-bath transition matrix: uniform vertex, resampled from its conditional."""
    n, q, N = ctx.n, ctx.q, ctx.size
    rows, cols, vals = [], [], []
    idx = np.arange(N, dtype=np.int64)
    for v in range(n):
        f = _local_fields(ctx.g, ctx.states, v, q)
        logits = ctx.p.beta * f
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        base = idx - ctx.states[v].astype(np.int64) * ctx.radix[v]
        for c in range(q):
            rows.append(idx)
            cols.append(base + c * ctx.radix[v])
            vals.append(w[:, c] / n)
    P = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return P.tocsr()


def sw_kernel(ctx: ExactContext) -> np.ndarray:
    """Dense Swendsen-Wang transition matrix (tiny graphs only).

    For each state, every subset ``A`` of its monochromatic non-loop edges is
    kept with probability ``p^|A| (1-p)^(M-|A|)``; each component of
    ``(V, A)`` then receives a uniform colour.
    """
    from .rgraph import component_roots

    n, q, N = ctx.n, ctx.q, ctx.size
    keep = -math.expm1(-ctx.p.beta)
    e = ctx.g.edges
    proper = e[e[:, 0] != e[:, 1]]
    eu, ev = proper[:, 0].copy(), proper[:, 1].copy()
    if len(proper) > 20:
        raise ValueError("too many edges for subset enumeration")
    states = ctx.states.astype(np.int64)
    P = np.zeros((N, N))
    for i in range(N):
        mono = np.flatnonzero(states[eu, i] == states[ev, i])
        M = len(mono)
        for bits in range(1 << M):
            active = np.zeros(len(eu), dtype=bool)
            chosen = [mono[j] for j in range(M) if bits >> j & 1]
            active[chosen] = True
            k = len(chosen)
            w = keep**k * (1.0 - keep) ** (M - k)
            roots = component_roots(n, eu, ev, active)
            labels, comp = np.unique(roots, return_inverse=True)
            ncomp = len(labels)
            # every assignment of colours to components is equally likely
            assign = (np.arange(q**ncomp)[:, None] // q ** np.arange(ncomp)[None, :]) % q
            targets = assign[:, comp] @ ctx.radix
            np.add.at(P[i], targets, w / q**ncomp)
    return P


def bottleneck(ctx: ExactContext, S, P=None) -> float:
    """``Phi(S) = sum_{s in S, t not in S} mu(s) P(s, t) / mu(S)``."""
    m = ctx.mask(S)
    if not m.any():
        raise ValueError("S is empty")
    P = glauber_kernel(ctx) if P is None else P
    mu = ctx.probs
    mass = mu[m].sum()
    if mass <= 0:
        raise ValueError("S has zero stationary mass")
    sub = P[m][:, ~m]
    return float(mu[m] @ np.asarray(sub.sum(axis=1)).ravel() / mass)


def conditional_law(ctx: ExactContext, S) -> np.ndarray:
    m = ctx.mask(S)
    out = np.where(m, ctx.probs, 0.0)
    total = out.sum()
    if total <= 0:
        raise ValueError("S has zero stationary mass")
    return out / total


def tv_evolution(ctx: ExactContext, S, t_max: int, P=None) -> np.ndarray:
    """``|| mu_S P^t - mu_S ||_TV`` for ``t = 0..t_max``."""
    P = glauber_kernel(ctx) if P is None else P
    start = conditional_law(ctx, S)
    x = start.copy()
    PT = P.T.tocsr()
    out = np.empty(t_max + 1)
    out[0] = 0.0
    for t in range(1, t_max + 1):
        x = PT @ x
        out[t] = 0.5 * np.abs(x - start).sum()
    return out


# ----------------------------------------------------------------------------
# Nishimori identity


def all_pairings(h: int):
    """Yield every perfect matching of ``range(h)`` as an involution array."""
    if h % 2:
        raise ValueError("odd number of half-edges")
    pairing = np.full(h, -1, dtype=np.int64)

    def rec():
        free = np.flatnonzero(pairing < 0)
        if len(free) == 0:
            yield pairing.copy()
            return
        a = free[0]
        for b in free[1:]:
            pairing[a], pairing[b] = b, a
            yield from rec()
            pairing[a] = pairing[b] = -1

    yield from rec()


def double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def nishimori_laws(n: int, d: int, p: PottsParams, phase: PhaseSpec, max_pairings: int = 2_000_000):
    """The two joint laws of (pairing, configuration), as ``(pairings, q^n)`` arrays.

    (i) planted graph drawn with weight ``Z_S(G) Pr[G]``, then a configuration
    from ``mu_G(.|S)``; (ii) configuration drawn with weight
    ``1{S} E[exp(beta H_G(sigma))]``, then the graph from ``G_hat(sigma)``.
    """
    if (n * d) % 2:
        raise ValueError("d*n must be even")
    if double_factorial(n * d - 1) > max_pairings:
        raise ValueError("too many pairings to enumerate")
    pairings = list(all_pairings(n * d))
    graphs = [MultiGraph.from_pairing(n, d, pr) for pr in pairings]
    ctxs = [ExactContext(g, p) for g in graphs]
    S = ctxs[0].mask(phase)
    if not S.any():
        raise ValueError("phase set is empty at this n")
    beta = p.beta
    H = np.stack([c.energies for c in ctxs]).astype(float)  # (G, sigma)
    log_pg = -math.log(len(graphs))

    # law (i)
    lw = np.where(S[None, :], beta * H, -np.inf)
    log_zs = logsumexp(lw, axis=1)  # log Z_S(G)
    log_ezs = logsumexp(log_zs + log_pg)  # log E[Z_S]
    law1 = np.exp((log_zs + log_pg - log_ezs)[:, None] + (lw - log_zs[:, None]))

    # law (ii)
    log_ew = logsumexp(beta * H + log_pg, axis=0)  # log E[exp(beta H(sigma))]
    log_sig = np.where(S, log_ew, -np.inf)
    log_sig = log_sig - logsumexp(log_sig)
    log_ghat = beta * H + log_pg - log_ew[None, :]
    law2 = np.exp(log_sig[None, :] + log_ghat)
    return law1, law2


def nishimori_check(n: int, d: int, p: PottsParams, phase: PhaseSpec) -> float:
    """Total-variation distance between the two Nishimori joint laws."""
    law1, law2 = nishimori_laws(n, d, p, phase)
    return float(0.5 * np.abs(law1 - law2).sum())
