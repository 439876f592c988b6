"""Potts broadcasting on the d-regular tree and Monte Carlo estimates of the
non-reconstruction distance via exact root posteriors.

The root has ``d`` children and every other vertex ``d - 1``.  Level ``k``
is stored breadth-first, so the children of node ``i`` on level ``k >= 1``
are ``i*(d-1) .. i*(d-1)+d-2`` on level ``k+1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._pool import map_ordered
from ._seeding import as_rng, derive_rng
from .meanfield import PottsParams, marginal_map


@dataclass(frozen=True)
class BroadcastSpec:
    p: PottsParams
    mu: tuple
    depth: int
    samples: int = 10_000
    max_leaves: int = 1 << 22

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if len(self.mu) != self.p.q:
            raise ValueError("mu has the wrong length")
        if level_width(self.p.d, self.depth) > self.max_leaves:
            raise ValueError("tree too deep for the leaf budget")

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def prior(self) -> np.ndarray:
        return marginal_map(self.mu_array, self.p)[0]

    @property
    def kernel(self) -> np.ndarray:
        """``K[a, c] = Pr[child = c | parent = a]``."""
        return broadcast_kernel(self.mu_array, self.p.beta)


def broadcast_kernel(mu, beta: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    k = np.tile(mu, (len(mu), 1))
    k[np.diag_indices(len(mu))] *= math.exp(beta)
    return k / k.sum(axis=1, keepdims=True)


def level_width(d: int, level: int) -> int:
    return 1 if level == 0 else d * (d - 1) ** (level - 1)


def _children(level: int, d: int) -> int:
    return d if level == 0 else d - 1


def _draw(rng, cdf: np.ndarray, parents: np.ndarray, reps: int) -> np.ndarray:
    par = np.repeat(parents, reps, axis=-1)
    u = rng.random(par.shape)
    out = np.zeros(par.shape, dtype=np.int8)
    for c in range(cdf.shape[1] - 1):
        out += u >= cdf[par, c]
    return out


def sample_levels(spec: BroadcastSpec, batch: int, rng) -> list[np.ndarray]:
    """All levels ``0..depth`` for ``batch`` independent trees."""
    d = spec.p.d
    cdf = np.cumsum(spec.kernel, axis=1)
    root = (rng.random((batch, 1))[..., None] >= np.cumsum(spec.prior)[:-1]).sum(-1).astype(np.int8)
    levels = [root]
    for k in range(spec.depth):
        levels.append(_draw(rng, cdf, levels[-1], _children(k, d)))
    return levels


def broadcast_sample(spec: BroadcastSpec, seed=None) -> tuple[int, np.ndarray]:
    """Root colour and the colours on level ``depth`` (breadth-first order)."""
    levels = sample_levels(spec, 1, as_rng(seed))
    return int(levels[0][0, 0]), levels[-1][0].astype(np.int64)


def root_posterior_batch(leaves: np.ndarray, spec: BroadcastSpec, depth: int | None = None) -> np.ndarray:
    """Exact ``Pr[root = . | level-depth colours]`` for a ``(batch, width)`` array."""
    depth = spec.depth if depth is None else depth
    q, d = spec.p.q, spec.p.d
    leaves = np.asarray(leaves)
    if leaves.ndim == 1:
        leaves = leaves[None, :]
    if leaves.shape[1] != level_width(d, depth):
        raise ValueError("leaf array does not match the tree shape")
    if depth == 0:
        return np.eye(q)[leaves[:, 0]]
    K = spec.kernel
    # message from each node to its parent, as a function of the parent colour
    msg = K.T[leaves]  # (batch, width, q): msg[.., a] = K[a, observed]
    for k in range(depth - 1, -1, -1):
        reps = _children(k, d)
        lam = msg.reshape(msg.shape[0], -1, reps, q).prod(axis=2)
        lam /= lam.sum(axis=-1, keepdims=True)
        if k == 0:
            post = spec.prior * lam[:, 0, :]
            return post / post.sum(axis=-1, keepdims=True)
        msg = lam @ K.T


def root_posterior(leaves, spec: BroadcastSpec) -> np.ndarray:
    return root_posterior_batch(np.asarray(leaves), spec)[0]


@dataclass
class DecayCurve:
    depths: np.ndarray
    distance: np.ndarray
    stderr: np.ndarray
    samples: int

    def to_csv(self) -> str:
        lines = ["depth,distance,stderr"]
        for k, v, e in zip(self.depths, self.distance, self.stderr):
            lines.append(f"{int(k)},{v:.17g},{e:.17g}")
        return "\n".join(lines) + "\n"


def _batch_distances(spec: BroadcastSpec, batch: int, rng) -> np.ndarray:
    levels = sample_levels(spec, batch, rng)
    prior = spec.prior
    out = np.empty((spec.depth + 1, batch))
    for k in range(spec.depth + 1):
        post = root_posterior_batch(levels[k], spec, k)
        out[k] = np.abs(post - prior).sum(axis=1)
    return out


def batch_sizes(samples: int, batch: int) -> list[int]:
    full, rest = divmod(samples, batch)
    return [batch] * full + ([rest] if rest else [])


def _run_batch(args):
    spec, size, seed, index = args
    return _batch_distances(spec, size, derive_rng(seed, index))


def nonrec_curve(spec: BroadcastSpec, seed: int, batch: int = 256, workers: int = 1) -> DecayCurve:
    """Mean of ``sum_c |Pr[root=c | level l] - Pr[root=c]|`` for ``l = 0..depth``.

    Samples are drawn in fixed-size batches, each with its own derived RNG
    stream, so the estimate does not depend on ``workers``.  Standard errors
    are the jackknife ones for a sample mean.
    """
    if spec.samples < 100:
        raise ValueError("need at least 100 samples")
    sizes = batch_sizes(spec.samples, batch)
    tasks = [(spec, s, seed, i) for i, s in enumerate(sizes)]
    parts = map_ordered(_run_batch, tasks, workers)
    vals = np.concatenate(parts, axis=1)
    n = vals.shape[1]
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n)
    return DecayCurve(np.arange(spec.depth + 1), mean, se, n)
