"""Edge percolation, branching-process predictions and the colour-class
criticality of Swendsen-Wang percolation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._seeding import as_rng
from .meanfield import PottsParams, ferro_mu, marginal_map
from .rgraph import ComponentStats, MultiGraph, components


@dataclass(frozen=True)
class BranchingQuantities:
    """Extinction probability ``phi`` of one branch, giant vertex fraction
    ``chi`` and giant edge density ``psi`` (edges per vertex)."""

    phi: float
    chi: float
    psi: float
    p: float
    d: int


def _phi_bracket_top(d: int, p: float) -> float:
    # maximiser of y - (p y + 1 - p)^(d-1); the interior root lies left of it
    return (((d - 1) * p) ** (-1.0 / (d - 2)) - 1.0 + p) / p


def branching_quantities(d: int, p: float) -> BranchingQuantities:
    if d < 3:
        raise ValueError("d must be >= 3")
    if not (1.0 / (d - 1) < p <= 1.0):
        raise ValueError("p must lie in (1/(d-1), 1]")
    f = lambda y: y - (p * y + 1.0 - p) ** (d - 1)
    if p == 1.0:
        phi = 0.0
    else:
        # relative tolerance: phi ~ (1-p)^(d-1) is tiny near p = 1
        phi = brentq(f, 0.0, min(1.0, _phi_bracket_top(d, p)), xtol=1e-300, rtol=4 * np.finfo(float).eps)
    base = p * phi + 1.0 - p
    return BranchingQuantities(
        phi=phi, chi=1.0 - base**d, psi=0.5 * d * p * (1.0 - phi**2), p=p, d=d
    )


def subcritical_inequality(d: int, p: float) -> float:
    """Positive iff the remainder after removing the giant is subcritical."""
    # 2(dp/2 - psi) / (d(1 - chi)) reduces to p phi / (p phi + 1 - p) using
    # (p phi + 1 - p)^(d-1) = phi; the reduced form avoids 0/0 near p = 1
    b = branching_quantities(d, p)
    return 1.0 / (d - 1) - p * b.phi / (p * b.phi + 1.0 - p)


@dataclass(frozen=True)
class PercolationMode:
    mode: str  # "binomial" or "exact"
    p: float | None = None
    m: int | None = None

    def __post_init__(self):
        if self.mode == "binomial":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError("binomial mode needs p in [0, 1]")
        elif self.mode == "exact":
            if self.m is None or self.m < 0:
                raise ValueError("exact mode needs an edge count m >= 0")
        else:
            raise ValueError("mode must be 'binomial' or 'exact'")


def induced_edges(g: MultiGraph, vertices=None) -> np.ndarray:
    """Mask of edges with both ends in the vertex subset (all edges if None)."""
    if vertices is None:
        return np.ones(g.m, dtype=bool)
    vertices = np.asarray(vertices, dtype=bool)
    return vertices[g.edges[:, 0]] & vertices[g.edges[:, 1]]


def percolate(g: MultiGraph, mode: PercolationMode, seed=None, vertices=None) -> ComponentStats:
    """Components after keeping each edge w.p. ``p``, or a uniform ``m``-subset.

    With ``vertices`` the experiment runs on the induced subgraph, with edges
    still indexed by the parent graph's canonical order.
    """
    rng = as_rng(seed)
    eligible = induced_edges(g, vertices)
    if mode.mode == "binomial":
        active = (rng.random(g.m) < mode.p) & eligible
    else:
        idx = np.flatnonzero(eligible)
        if mode.m > len(idx):
            raise ValueError(f"m = {mode.m} exceeds the {len(idx)} available edges")
        active = np.zeros(g.m, dtype=bool)
        active[rng.choice(idx, size=mode.m, replace=False)] = True
    return components(g, active, vertices)


def colour_class_parameter(nu, rho, s: int, p: PottsParams, tol: float = 1e-12) -> tuple[float, str]:
    """Effective percolation parameter ``(1 - e^-beta) rho(s,s) / nu(s)``.

    Returned with ``"sub"``, ``"super"`` or ``"critical"`` relative to
    ``1/(d-1)`` (``"critical"`` within ``tol``).
    """
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if nu[s] <= 0:
        raise ValueError("colour class is empty")
    r = -math.expm1(-p.beta) * rho[s, s] / nu[s]
    crit = 1.0 / (p.d - 1)
    if abs(r - crit) <= tol:
        label = "critical"
    else:
        label = "super" if r > crit else "sub"
    return float(r), label


def giant_identity_residual(q: int, d: int, beta: float) -> float:
    """Mismatch between the giant-component prediction for the dominant colour
    class and the closed forms in terms of the ferro fixed point."""
    p = PottsParams(q, d, beta)
    mu = ferro_mu(p)
    if mu is None:
        raise ValueError("no ferromagnetic fixed point at this beta")
    x = mu[0]
    nu, _ = marginal_map(mu, p)
    w = p.w
    rf = w * x / (1.0 + w * x)
    b = branching_quantities(d, rf)
    return abs(b.chi - (q * nu[0] - 1.0) / ((q - 1) * nu[0])) + abs(b.phi - (1.0 - x) / ((q - 1) * x))
