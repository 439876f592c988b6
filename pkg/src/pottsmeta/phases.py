"""Paramagnetic and ferromagnetic configuration sets defined by colour counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meanfield import PottsParams, ferro_mu, marginal_map


@dataclass(frozen=True)
class PhaseSpec:
    """``S(eps) = {sigma : sum_c |#sigma^{-1}(c) - n nu(c)| < eps n}``.

    For ``kind="ferro"`` the reference ``nu`` is ``nu_ferro`` with colour
    ``dominant`` in first place; ``include_permutations`` closes the set
    under the ``q`` choices of dominant colour.  ``ref_beta``, if given,
    is the inverse temperature at which the reference fixed point is
    computed; this allows a ferro set below the ferro threshold of the
    model being studied.
    """

    kind: str
    eps: float
    dominant: int = 0
    include_permutations: bool = False
    ref_beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("para", "ferro"):
            raise ValueError("kind must be 'para' or 'ferro'")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    def ref_params(self, p: PottsParams) -> PottsParams:
        return p if self.ref_beta is None else PottsParams(p.q, p.d, self.ref_beta)

    def _base_mu(self, p: PottsParams) -> np.ndarray:
        if self.kind == "para":
            return np.full(p.q, 1.0 / p.q)
        mu = ferro_mu(p)
        if mu is None:
            raise ValueError(f"no ferromagnetic fixed point at beta={p.beta}")
        return mu

    def reference(self, p: PottsParams, dominant: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(nu, rho)`` of the phase, dominant colour moved to ``dominant``."""
        k = self.dominant if dominant is None else dominant
        perm = np.arange(p.q)
        perm[[0, k]] = perm[[k, 0]]
        rp = self.ref_params(p)
        nu, rho = marginal_map(self._base_mu(rp), rp)
        return nu[perm], rho[np.ix_(perm, perm)]

    def candidates(self, p: PottsParams) -> list[tuple[int, np.ndarray]]:
        if self.kind == "ferro" and self.include_permutations:
            ks = range(p.q)
        else:
            ks = [self.dominant]
        return [(k, self.reference(p, k)[0]) for k in ks]


def deviation(counts, nu, n: int) -> float:
    return float(np.sum(np.abs(np.asarray(counts) - n * np.asarray(nu))))


def phase_membership(counts, spec: PhaseSpec, n: int, p: PottsParams) -> tuple[bool, int | None]:
    """Membership of a colour-count vector and the matched dominant colour.

    The matched value is the colour playing the role of the dominant one
    (always ``None`` for the paramagnetic phase).
    """
    for k, nu in spec.candidates(p):
        if deviation(counts, nu, n) < spec.eps * n:
            return True, (k if spec.kind == "ferro" else None)
    return False, None


def membership_mask(count_table: np.ndarray, spec: PhaseSpec, p: PottsParams) -> np.ndarray:
    """Vectorised membership for a ``(states, q)`` table of colour counts."""
    n = int(count_table[0].sum())
    out = np.zeros(len(count_table), dtype=bool)
    for _, nu in spec.candidates(p):
        out |= np.abs(count_table - n * nu).sum(axis=1) < spec.eps * n
    return out
