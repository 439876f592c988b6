"""Belief Propagation fixed points, the Bethe functional, moment rate
functions and the three critical inverse temperatures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rgraph import MultiGraph

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class PottsParams:
    q: int
    d: int
    beta: float

    def __post_init__(self):
        if self.q < 3:
            raise ValueError("q must be >= 3")
        if self.d < 3:
            raise ValueError("d must be >= 3")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")

    @property
    def w(self) -> float:
        return math.expm1(self.beta)


@dataclass(frozen=True)
class Thresholds:
    beta_u: float
    beta_c: float
    beta_h: float


@dataclass(frozen=True)
class FixedPointReport:
    mu: np.ndarray
    residual: float
    stable: bool
    jacobian_radius: float
    bethe_value: float
    kind: str  # "para", "ferro" or "other"


def _xlogx(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy(x) -> float:
    return -float(np.sum(_xlogx(x)))


# ----------------------------------------------------------------------------
# thresholds


def ferro_curve(t, q: int, d: int):
    """e^beta - 1 as a function of the ratio t of ferro-branch BP factors."""
    td = t ** (d - 1)
    return (t - 1) * (td + q - 1) / (td - t)


def golden_section(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a)):
            break
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + GOLDEN * (b - a)
            fe = f(e)
    return 0.5 * (a + b)


def ferro_curve_argmin(q: int, d: int) -> float:
    """Minimiser over t > 1 of :func:`ferro_curve` (assumed unimodal)."""
    lo = 1.0 + 1e-9
    f = lambda t: ferro_curve(t, q, d)
    hi = 2.0
    while f(hi) <= f(0.5 * (lo + hi)):
        hi *= 2.0
    return golden_section(f, lo, hi)


def thresholds(q: int, d: int) -> Thresholds:
    if q < 3 or d < 3:
        raise ValueError("thresholds need q >= 3 and d >= 3")
    t0 = ferro_curve_argmin(q, d)
    beta_u = math.log1p(ferro_curve(t0, q, d))
    beta_c = math.log((q - 2) / ((q - 1) ** (1 - 2 / d) - 1))
    beta_h = math.log1p(q / (d - 2))
    return Thresholds(beta_u, beta_c, beta_h)


# ----------------------------------------------------------------------------
# homogeneous BP


def bp_map(mu, p: PottsParams) -> np.ndarray:
    a = (1.0 + p.w * np.asarray(mu, dtype=float)) ** (p.d - 1)
    return a / a.sum()


def bp_residual(mu, p: PottsParams) -> float:
    mu = np.asarray(mu, dtype=float)
    return float(np.max(np.abs(mu - bp_map(mu, p))))


def bp_jacobian(mu, p: PottsParams) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    base = 1.0 + p.w * mu
    a = base ** (p.d - 1)
    da = (p.d - 1) * p.w * base ** (p.d - 2)
    s = a.sum()
    return np.diag(da / s) - np.outer(a, da) / s**2


def jacobian_radius(mu, p: PottsParams) -> float:
    # columns of the Jacobian sum to zero, so its nonzero spectrum is the
    # spectrum of the map restricted to the simplex tangent space
    return float(np.max(np.abs(np.linalg.eigvals(bp_jacobian(mu, p)))))


def bethe(mu, p: PottsParams) -> float:
    mu = np.asarray(mu, dtype=float)
    w = p.w
    return float(
        math.log(np.sum((1.0 + w * mu) ** p.d)) - 0.5 * p.d * math.log1p(w * np.sum(mu**2))
    )


def _symmetric_mu(x: float, q: int) -> np.ndarray:
    mu = np.full(q, (1.0 - x) / (q - 1))
    mu[0] = x
    return mu


def _bisect_increasing(f, target, lo, hi):
    """Largest-precision root of the increasing function ``f - target``."""
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ferro_ratio(p: PottsParams, branch: str = "upper") -> float | None:
    """Ratio ``t > 1`` on the requested branch, or None if there is no root."""
    q, d, w = p.q, p.d, p.w
    t0 = ferro_curve_argmin(q, d)
    f = lambda t: ferro_curve(t, q, d)
    if w <= f(t0):
        return None
    if branch == "upper":
        hi = 2.0 * t0
        while f(hi) < w:
            hi *= 2.0
        return _bisect_increasing(f, w, t0, hi)
    # lower branch: f decreases on (1, t0), bisect on -f
    if w >= q / (d - 2):
        return None
    g = lambda t: -f(t)
    return _bisect_increasing(g, -w, 1.0 + 1e-15, t0)


def _report(mu, p, kind) -> FixedPointReport:
    rad = jacobian_radius(mu, p)
    return FixedPointReport(
        mu=mu,
        residual=bp_residual(mu, p),
        stable=bool(rad < 1.0),
        jacobian_radius=rad,
        bethe_value=bethe(mu, p),
        kind=kind,
    )


def ferro_mu(p: PottsParams) -> np.ndarray | None:
    t = ferro_ratio(p)
    if t is None:
        return None
    td = t ** (p.d - 1)
    return _symmetric_mu(td / (td + p.q - 1), p.q)


def solve_fixed_points(p: PottsParams, include_unstable: bool = False) -> list[FixedPointReport]:
    """Paramagnetic fixed point, plus the ferromagnetic one when it exists.

    The ferromagnetic root is located through the ratio ``t`` of the two BP
    factors, on the increasing branch of ``e^beta - 1 = ferro_curve(t)``,
    which always yields the largest ``mu(0)``.
    """
    out = [_report(np.full(p.q, 1.0 / p.q), p, "para")]
    mu = ferro_mu(p)
    if mu is not None:
        out.append(_report(mu, p, "ferro"))
        if include_unstable:
            t = ferro_ratio(p, "lower")
            if t is not None:
                td = t ** (p.d - 1)
                out.append(_report(_symmetric_mu(td / (td + p.q - 1), p.q), p, "other"))
    return out


def marginal_map(mu, p: PottsParams) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(mu, dtype=float)
    w = p.w
    a = (1.0 + w * mu) ** p.d
    nu = a / a.sum()
    rho = np.outer(mu, mu)
    rho[np.diag_indices(p.q)] *= math.exp(p.beta)
    rho /= 1.0 + w * np.sum(mu**2)
    return nu, rho


def _check_pair(nu, rho, tol=1e-9):
    if rho.shape != (len(nu), len(nu)):
        raise ValueError("rho must be q x q")
    if np.any(rho < -tol) or np.any(nu < -tol):
        raise ValueError("negative probability")
    if not np.allclose(rho, rho.T, atol=tol):
        raise ValueError("rho is not symmetric")
    if np.max(np.abs(rho.sum(axis=1) - nu)) > tol:
        raise ValueError("row sums of rho differ from nu")


def first_moment_rate(nu, rho, p: PottsParams) -> float:
    """Exponential growth rate of the first moment restricted to ``(nu, rho)``.

    The edge entropy runs over ordered colour pairs with weight ``d/2``.
    """
    nu = np.asarray(nu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    _check_pair(nu, rho)
    d = p.d
    return float(
        (d - 1) * np.sum(_xlogx(nu))
        - 0.5 * d * np.sum(_xlogx(rho))
        + 0.5 * d * p.beta * np.trace(rho)
    )


def product_tensor(rho) -> np.ndarray:
    """``r(s, s', t, t') = rho(s, t) * rho(s', t')``."""
    rho = np.asarray(rho, dtype=float)
    return np.einsum("st,uv->sutv", rho, rho)


def second_moment_rate(rho, r, p: PottsParams) -> float:
    """Growth rate of the second moment at overlap tensor ``r``.

    ``r`` is indexed ``r[s, s', t, t']`` with ``(s, t)`` the colours of an
    edge's endpoints in the first replica and ``(s', t')`` in the second.
    """
    rho = np.asarray(rho, dtype=float)
    r = np.asarray(r, dtype=float)
    q = rho.shape[0]
    if r.shape != (q,) * 4:
        raise ValueError("r must have shape (q, q, q, q)")
    if np.any(r < -1e-12):
        raise ValueError("r has negative entries")
    if np.max(np.abs(r - r.transpose(2, 3, 0, 1))) > 1e-9:
        raise ValueError("r(s,s',t,t') != r(t,t',s,s')")
    if np.max(np.abs(r.sum(axis=(1, 3)) - rho)) > 1e-9:
        raise ValueError("first-replica marginal of r differs from rho")
    if np.max(np.abs(r.sum(axis=(0, 2)) - rho)) > 1e-9:
        raise ValueError("second-replica marginal of r differs from rho")
    d = p.d
    vertex_pairs = r.sum(axis=(2, 3))
    same = np.eye(q)
    mono = same[:, None, :, None] + same[None, :, None, :]
    return float(
        -(d - 1) * entropy(vertex_pairs)
        + 0.5 * d * entropy(r)
        + 0.5 * d * p.beta * np.sum(mono * r)
    )


# ----------------------------------------------------------------------------
# BP on a concrete graph


@dataclass
class GraphBPResult:
    messages: np.ndarray
    bethe_value: float
    converged: bool
    iterations: int


def uniform_messages(g: MultiGraph, q: int) -> np.ndarray:
    return np.full((len(g.pairing), q), 1.0 / q)


def random_messages(g: MultiGraph, q: int, rng) -> np.ndarray:
    m = rng.random((len(g.pairing), q)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)


def _vertex_sums(g: MultiGraph, x: np.ndarray) -> np.ndarray:
    out = np.zeros((g.n, x.shape[1]))
    np.add.at(out, g.owner, x)
    return out


def bethe_graph(g: MultiGraph, messages: np.ndarray, beta: float) -> float:
    """Bethe functional of a message set, normalised per vertex.

    ``messages[h]`` is the message sent from the owner of half-edge ``h``
    towards the vertex at the other end.
    """
    w = math.expm1(beta)
    incoming = messages[g.pairing]
    logs = _vertex_sums(g, np.log1p(w * incoming))
    lmax = logs.max(axis=1, keepdims=True)
    vertex = np.sum(lmax[:, 0] + np.log(np.exp(logs - lmax).sum(axis=1)))
    h = g.edge_halves
    edge = np.sum(np.log1p(w * np.sum(messages[h] * messages[g.pairing[h]], axis=1)))
    return float((vertex - edge) / g.n)


def graph_bp(
    g: MultiGraph,
    p: PottsParams,
    init: np.ndarray | None = None,
    damping: float = 0.5,
    max_iters: int = 10_000,
    tol: float = 1e-12,
) -> GraphBPResult:
    """Damped synchronous BP on ``g``; degrees are taken from ``g`` itself."""
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = p.w
    msg = uniform_messages(g, p.q) if init is None else np.array(init, dtype=float)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        lf = np.log1p(w * msg[g.pairing])
        cavity = _vertex_sums(g, lf)[g.owner] - lf
        cavity -= cavity.max(axis=1, keepdims=True)
        new = np.exp(cavity)
        new /= new.sum(axis=1, keepdims=True)
        new = (1.0 - damping) * new + damping * msg
        delta = float(np.max(np.abs(new - msg))) if len(msg) else 0.0
        msg = new
        if delta < tol:
            converged = True
            break
    return GraphBPResult(msg, bethe_graph(g, msg, p.beta), converged, it)
