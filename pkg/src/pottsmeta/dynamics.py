"""Glauber and Swendsen-Wang chains with phase-membership tracking, and
escape-time experiments started from the planted model.

The chain kernels are compiled with numba and draw from a
``numpy.random.Generator``, so a run is a deterministic function of the
generator's state.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from ._pool import map_ordered
from ._seeding import as_rng, derive_rng
from .gibbs_exact import hamiltonian
from .meanfield import PottsParams
from .phases import PhaseSpec, phase_membership
from .rgraph import MultiGraph, _find, _union, largest_remainder, round_statistics, sample_planted

GLAUBER = 0
SW = 1
CHAINS = {"glauber": GLAUBER, "sw": SW}


@dataclass
class ChainState:
    sigma: np.ndarray
    counts: np.ndarray
    hamiltonian: int
    step: int = 0

    @classmethod
    def from_config(cls, g: MultiGraph, sigma, q: int) -> "ChainState":
        sigma = np.array(sigma, dtype=np.int64)
        return cls(sigma, np.bincount(sigma, minlength=q).astype(np.int64), hamiltonian(g, sigma))

    def copy(self) -> "ChainState":
        return ChainState(self.sigma.copy(), self.counts.copy(), self.hamiltonian, self.step)

    def check(self, g: MultiGraph) -> bool:
        q = len(self.counts)
        return bool(
            np.array_equal(np.bincount(self.sigma, minlength=q), self.counts)
            and hamiltonian(g, self.sigma) == self.hamiltonian
        )


# ----------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _glauber_update(offsets, nbrs, sigma, q, expb, rng, field):
    """Resample one uniform vertex; returns ``(v, old, new, delta_H)``."""
    n = len(sigma)
    v = rng.integers(0, n)
    for c in range(q):
        field[c] = 0
    for h in range(offsets[v], offsets[v + 1]):
        u = nbrs[h]
        if u != v:
            field[sigma[u]] += 1
    total = 0.0
    for c in range(q):
        total += expb[field[c]]
    x = rng.random() * total
    c = 0
    acc = expb[field[0]]
    while acc <= x and c < q - 1:
        c += 1
        acc += expb[field[c]]
    old = sigma[v]
    sigma[v] = c
    return v, old, c, field[c] - field[old]


@numba.njit(cache=True)
def _exp_table(offsets, beta):
    mx = 0
    for v in range(len(offsets) - 1):
        if offsets[v + 1] - offsets[v] > mx:
            mx = offsets[v + 1] - offsets[v]
    return np.exp(beta * np.arange(mx + 1).astype(np.float64))


@numba.njit(cache=True)
def _sw_update(eu, ev, sigma, q, keep, rng, parent, size, colour):
    n = len(sigma)
    for i in range(n):
        parent[i] = i
        size[i] = 1
        colour[i] = -1
    for e in range(len(eu)):
        a = eu[e]
        b = ev[e]
        if sigma[a] == sigma[b]:
            # self-loops draw a variate too but never merge anything
            if rng.random() < keep and a != b:
                _union(parent, size, a, b)
    for v in range(n):
        r = _find(parent, v)
        if colour[r] < 0:
            colour[r] = rng.integers(0, q)
        sigma[v] = colour[r]


@numba.njit(cache=True)
def _recount(eu, ev, sigma, counts):
    counts[:] = 0
    for v in range(len(sigma)):
        counts[sigma[v]] += 1
    h = 0
    for e in range(len(eu)):
        if sigma[eu[e]] == sigma[ev[e]]:
            h += 1
    return h


@numba.njit(cache=True)
def _member(counts, ref, eps_n):
    for k in range(ref.shape[0]):
        dev = 0.0
        for c in range(ref.shape[1]):
            dev += abs(counts[c] - ref[k, c])
        if dev < eps_n:
            return True
    return False


@numba.njit(cache=True)
def _run_chain(
    kind, offsets, nbrs, eu, ev, sigma, counts, h0, q, beta, n_iter,
    ref, eps_n, stride, stop_on_escape, rng,
    rec_step, rec_counts, rec_h, rec_member,
):
    """Run ``n_iter`` updates; returns ``(records, escape_step, steps_done, H)``.

    Records are written at every multiple of ``stride`` and at the escape
    step.  ``escape_step`` is -1 if the chain never leaves the monitored set.
    """
    n = len(sigma)
    expb = _exp_table(offsets, beta)
    field = np.zeros(q, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.int64)
    keep = -math.expm1(-beta)
    h = h0
    member = _member(counts, ref, eps_n)
    escape = -1
    rec_step[0] = 0
    rec_counts[0, :] = counts
    rec_h[0] = h
    rec_member[0] = member
    nrec = 1
    if not member:
        escape = 0
        if stop_on_escape:
            return nrec, escape, 0, h
    t = 0
    for t in range(1, n_iter + 1):
        if kind == 0:
            _, old, new, dh = _glauber_update(offsets, nbrs, sigma, q, expb, rng, field)
            if old != new:
                counts[old] -= 1
                counts[new] += 1
                h += dh
                member = _member(counts, ref, eps_n)
        else:
            _sw_update(eu, ev, sigma, q, keep, rng, parent, size, colour)
            h = _recount(eu, ev, sigma, counts)
            member = _member(counts, ref, eps_n)
        first_exit = (not member) and escape < 0
        if first_exit:
            escape = t
        if t % stride == 0 or first_exit:
            rec_step[nrec] = t
            rec_counts[nrec, :] = counts
            rec_h[nrec] = h
            rec_member[nrec] = member
            nrec += 1
        if first_exit and stop_on_escape:
            return nrec, escape, t, h
    return nrec, escape, t, h


@numba.njit(cache=True)
def _glauber_moves(offsets, nbrs, sigma, q, beta, reps, rng, out_v, out_c):
    """``reps`` independent single updates from the same configuration."""
    expb = _exp_table(offsets, beta)
    field = np.zeros(q, dtype=np.int64)
    work = sigma.copy()
    for i in range(reps):
        v, old, new, _ = _glauber_update(offsets, nbrs, work, q, expb, rng, field)
        out_v[i] = v
        out_c[i] = new
        work[v] = old


@numba.njit(cache=True)
def _independent_chains(kind, offsets, nbrs, eu, ev, starts, q, beta, n_iter, rng, radix):
    """Final state index of one chain per start configuration."""
    n_chains, n = starts.shape
    expb = _exp_table(offsets, beta)
    field = np.zeros(q, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.int64)
    keep = -math.expm1(-beta)
    out = np.empty(n_chains, dtype=np.int64)
    sigma = np.empty(n, dtype=np.int64)
    for i in range(n_chains):
        sigma[:] = starts[i]
        for _ in range(n_iter):
            if kind == 0:
                _glauber_update(offsets, nbrs, sigma, q, expb, rng, field)
            else:
                _sw_update(eu, ev, sigma, q, keep, rng, parent, size, colour)
        idx = 0
        for v in range(n):
            idx += sigma[v] * radix[v]
        out[i] = idx
    return out


# ----------------------------------------------------------------------------
# public single-step API


def _graph_arrays(g: MultiGraph):
    e = g.edges
    return g.offsets, g.neighbours, np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1])


def glauber_step(g: MultiGraph, state: ChainState, p: PottsParams, rng) -> ChainState:
    """One heat-bath update of a uniform vertex; returns a new state."""
    rng = as_rng(rng)
    out = state.copy()
    expb = _exp_table(g.offsets, p.beta)
    field = np.zeros(p.q, dtype=np.int64)
    _, old, new, dh = _glauber_update(g.offsets, g.neighbours, out.sigma, p.q, expb, rng, field)
    out.counts[old] -= 1
    out.counts[new] += 1
    out.hamiltonian += int(dh)
    out.step += 1
    return out


def sw_step(g: MultiGraph, state: ChainState, p: PottsParams, rng) -> ChainState:
    """Percolate monochromatic edges w.p. ``1 - e^-beta``, recolour components."""
    rng = as_rng(rng)
    out = state.copy()
    _, _, eu, ev = _graph_arrays(g)
    n = g.n
    _sw_update(eu, ev, out.sigma, p.q, -math.expm1(-p.beta), rng,
               np.empty(n, np.int64), np.empty(n, np.int64), np.empty(n, np.int64))
    out.hamiltonian = int(_recount(eu, ev, out.sigma, out.counts))
    out.step += 1
    return out


def glauber_moves(g: MultiGraph, sigma, p: PottsParams, reps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and new colours of ``reps`` independent updates from ``sigma``."""
    out_v = np.empty(reps, dtype=np.int64)
    out_c = np.empty(reps, dtype=np.int64)
    _glauber_moves(g.offsets, g.neighbours, np.asarray(sigma, dtype=np.int64), p.q, p.beta,
                   reps, as_rng(rng), out_v, out_c)
    return out_v, out_c


def independent_chains(g: MultiGraph, p: PottsParams, chain: str, starts, n_iter: int, rng) -> np.ndarray:
    """Run one chain per row of ``starts`` for ``n_iter`` updates.

    Returns final states as mixed-radix indices (vertex 0 fastest).
    """
    offsets, nbrs, eu, ev = _graph_arrays(g)
    radix = p.q ** np.arange(g.n, dtype=np.int64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    return _independent_chains(CHAINS[chain], offsets, nbrs, eu, ev, starts, p.q, p.beta,
                               n_iter, as_rng(rng), radix)


# ----------------------------------------------------------------------------
# traces and escape experiments


@dataclass
class Trace:
    steps: np.ndarray
    counts: np.ndarray
    hamiltonian: np.ndarray
    member: np.ndarray
    escape_step: int | None

    def to_csv(self) -> str:
        q = self.counts.shape[1]
        head = ["step"] + [f"count_{c + 1}" for c in range(q)] + ["hamiltonian", "member", "escape"]
        lines = [",".join(head)]
        for i in range(len(self.steps)):
            esc = int(self.escape_step is not None and self.steps[i] == self.escape_step)
            row = [str(int(self.steps[i]))] + [str(int(x)) for x in self.counts[i]]
            row += [str(int(self.hamiltonian[i])), str(int(self.member[i])), str(esc)]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def run_chain(
    g: MultiGraph,
    state: ChainState,
    p: PottsParams,
    chain: str,
    n_iter: int,
    monitor: PhaseSpec,
    rng,
    stride: int | None = None,
    stop_on_escape: bool = True,
) -> tuple[ChainState, Trace]:
    """Run ``n_iter`` updates (single-site for Glauber, full sweeps for SW),
    checking membership in ``monitor`` after every update."""
    if chain not in CHAINS:
        raise ValueError("chain must be 'glauber' or 'sw'")
    if stride is None:
        stride = g.n if chain == "glauber" else 1
    if stride < 1:
        raise ValueError("stride must be >= 1")
    offsets, nbrs, eu, ev = _graph_arrays(g)
    ref = np.array([g.n * nu for _, nu in monitor.candidates(p)])
    out = state.copy()
    cap = n_iter // stride + 2
    rec_step = np.empty(cap, dtype=np.int64)
    rec_counts = np.empty((cap, p.q), dtype=np.int64)
    rec_h = np.empty(cap, dtype=np.int64)
    rec_member = np.empty(cap, dtype=np.bool_)
    nrec, escape, done, h = _run_chain(
        CHAINS[chain], offsets, nbrs, eu, ev, out.sigma, out.counts, out.hamiltonian,
        p.q, p.beta, n_iter, ref, monitor.eps * g.n, stride, stop_on_escape, as_rng(rng),
        rec_step, rec_counts, rec_h, rec_member,
    )
    out.hamiltonian = int(h)
    out.step += int(done)
    trace = Trace(rec_step[:nrec], rec_counts[:nrec], rec_h[:nrec], rec_member[:nrec],
                  None if escape < 0 else int(escape))
    return out, trace


@dataclass
class EscapeReport:
    chain: str
    q: int
    d: int
    beta: float
    n: int
    start: dict
    monitor: dict
    sweeps_budget: int
    trials: int
    escaped: int
    escape_steps: list
    escaped_trials: list
    master_seed: int
    step_unit: str = field(default="")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def check_escape_args(start: PhaseSpec, monitor: PhaseSpec) -> None:
    if not monitor.eps > start.eps:
        raise ValueError("monitor eps must exceed start eps")


def planted_start(n: int, p: PottsParams, start: PhaseSpec, rng) -> tuple[MultiGraph, np.ndarray]:
    """Planted ``(G, sigma)`` with the start phase's rounded statistics."""
    nu, rho = start.reference(p)
    stats = round_statistics(nu, rho, n, p.d)
    return sample_planted(stats, rng)


def _trial(args):
    graph, n, p, start, monitor, chain, sweeps, seed, trial = args
    rng = derive_rng(seed, trial)
    if graph is None:
        g, sigma = planted_start(n, p, start, rng)
    else:
        # fixed graph: random colouring with the start phase's class sizes
        g = graph
        nu = start.reference(p)[0]
        vc = largest_remainder(g.n * nu, g.n)
        sigma = rng.permutation(np.repeat(np.arange(p.q), vc))
    state = ChainState.from_config(g, sigma, p.q)
    n_iter = sweeps * g.n if chain == "glauber" else sweeps
    _, trace = run_chain(g, state, p, chain, n_iter, monitor, rng)
    return trace


def escape_trace(graph, n, p, start, monitor, chain, sweeps, seed, trial) -> Trace:
    """The trace of a single trial of :func:`escape_experiment`."""
    return _trial((graph, n, p, start, monitor, chain, sweeps, seed, trial))


def escape_experiment(
    p: PottsParams,
    start: PhaseSpec,
    monitor: PhaseSpec,
    chain: str,
    sweeps: int,
    trials: int,
    master_seed: int,
    n: int | None = None,
    graph: MultiGraph | None = None,
    workers: int = 1,
) -> EscapeReport:
    """Per trial: planted start, run the chain, record the first exit.

    Glauber runs ``sweeps * n`` single-site updates and reports escape steps
    in single-site updates; SW runs ``sweeps`` iterations.
    """
    check_escape_args(start, monitor)
    if chain not in CHAINS:
        raise ValueError("chain must be 'glauber' or 'sw'")
    if graph is None and n is None:
        raise ValueError("need a graph or a vertex count")
    if graph is not None:
        n = graph.n
    tasks = [(graph, n, p, start, monitor, chain, sweeps, master_seed, t) for t in range(trials)]
    traces = map_ordered(_trial, tasks, workers)
    esc = [(t, tr.escape_step) for t, tr in enumerate(traces) if tr.escape_step is not None]
    return EscapeReport(
        chain=chain, q=p.q, d=p.d, beta=p.beta, n=int(n),
        start=asdict(start), monitor=asdict(monitor),
        sweeps_budget=sweeps, trials=trials, escaped=len(esc),
        escape_steps=[s for _, s in esc], escaped_trials=[t for t, _ in esc],
        master_seed=int(master_seed),
        step_unit="single-site updates" if chain == "glauber" else "SW iterations",
    )


__all__ = [
    "ChainState", "Trace", "EscapeReport", "glauber_step", "sw_step", "glauber_moves",
    "independent_chains", "run_chain", "escape_experiment", "escape_trace",
    "phase_membership", "planted_start",
]
