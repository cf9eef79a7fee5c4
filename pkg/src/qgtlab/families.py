"""
State families on the (lambda_x, lambda_y) manifold of the orthogonal quench,
in the form expected by ``geometry.qgt_finite_difference``.
"""

from __future__ import annotations

import numpy as np

from . import freefermion as ff
from . import oracle
from .geometry import qgt_array
from .model import ChainParams


class FreeFermionFamily:
    """lambda -> pair amplitudes of e^{-i H(h=hq, lambda) t} |GS(H(h, lambda))>.

    ``times`` may be a scalar or a 1-D array; states then carry a leading time axis.
    """

    def __init__(self, n_sites: int, hq: float, times, h: float = 0.0):
        self.n_sites = n_sites
        self.hq = hq
        self.h = h
        self.times = np.asarray(times, dtype=float)

    def params(self, lam) -> ChainParams:
        return ChainParams(n_sites=self.n_sites, h=self.h, lambda_x=lam[0], lambda_y=lam[1])

    def __call__(self, lam):
        p = self.params(lam)
        return ff.pair_amplitudes(ff.spectrum(p), ff.spectrum(p.with_(h=self.hq)), self.times)

    @staticmethod
    def overlap(u, v):
        # the constant offset of the quench Hamiltonian vanishes identically for this family,
        # and any lambda-dependent global phase drops out of the geometry
        return np.prod(FreeFermionFamily.overlap_factors(u, v), axis=-1)

    @staticmethod
    def overlap_factors(u, v):
        return np.sum(np.conj(u) * v, axis=-1)

    @staticmethod
    def infidelity(u, v):
        return ff.infidelity_from_amplitudes(u, v)


class DenseFamily:
    """Dense-engine counterpart of FreeFermionFamily (full-space vectors)."""

    def __init__(self, n_sites: int, hq: float, times, h: float = 0.0):
        self.n_sites = n_sites
        self.hq = hq
        self.h = h
        self.times = np.asarray(times, dtype=float)

    def params(self, lam) -> ChainParams:
        return ChainParams(n_sites=self.n_sites, h=self.h, lambda_x=lam[0], lambda_y=lam[1])

    def __call__(self, lam):
        states = oracle.quenched_states(self.params(lam), self.hq, np.atleast_1d(self.times))
        return states if self.times.ndim else states[0]

    @staticmethod
    def overlap(u, v):
        return np.sum(np.conj(u) * v, axis=-1)

    @staticmethod
    def infidelity(u, v):
        return 1.0 - np.abs(np.sum(np.conj(u) * v, axis=-1)) ** 2


def family_qgt(family, lam, delta: float = 1e-3, richardson: bool = True) -> np.ndarray:
    return qgt_array(
        family,
        lam,
        delta,
        overlap=family.overlap,
        infidelity=family.infidelity,
        overlap_factors=getattr(family, "overlap_factors", None),
        richardson=richardson,
    )
