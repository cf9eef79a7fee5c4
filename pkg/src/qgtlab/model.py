"""
Cluster-XY Hamiltonian family and generic Pauli-string Hamiltonians.

The family on a periodic ring of N spins is

    H = -sum X_{i-1} Z_i X_{i+1} - h sum Z_i + lambda_y sum Y_i Y_{i+1} + lambda_x sum X_i X_{i+1}

Two representations are produced: a dense 2^N matrix (small N) and the
momentum-space quadratic form obtained through the Jordan-Wigner mapping,
valid in the even fermion-parity sector (antiperiodic fermion momenta).

Basis convention: site 0 is the most significant bit of the computational
index, |0> is spin up (Z = +1) and corresponds to an empty fermion mode.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DENSE_LIMIT = 14
SECTORS = ("even", "odd")
AXES = ("x", "y", "z")

# Coordinates of the parameter manifold and the field, in ChainParams names.
COUPLINGS = ("lambda_x", "lambda_y", "h")


@dataclass(frozen=True)
class ChainParams:
    """A point of the Cluster-XY family on a periodic ring."""

    n_sites: int
    h: float = 0.0
    lambda_x: float = 0.0
    lambda_y: float = 0.0
    parity_sector: str = "even"

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 3:
            raise ValueError(f"n_sites must be an integer >= 3, got {self.n_sites!r}")
        if self.parity_sector not in SECTORS:
            raise ValueError(f"parity_sector must be one of {SECTORS}, got {self.parity_sector!r}")
        for name in COUPLINGS:
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_(self, **changes) -> "ChainParams":
        return replace(self, **changes)

    @property
    def couplings(self) -> tuple[float, float]:
        return (self.lambda_x, self.lambda_y)


@dataclass(frozen=True)
class PauliTerm:
    """coefficient * prod_s sigma^{axis_s}_s, with factors sorted by site."""

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __init__(self, coefficient: float, factors: Iterable[tuple[int, str]]):
        facs = tuple(sorted((int(s), str(a)) for s, a in factors))
        sites = [s for s, _ in facs]
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate site in Pauli term {facs}")
        for _, a in facs:
            if a not in AXES:
                raise ValueError(f"unknown Pauli axis {a!r}")
        object.__setattr__(self, "coefficient", float(coefficient))
        object.__setattr__(self, "factors", facs)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    def shifted(self, shift: int, n_sites: int) -> "PauliTerm":
        return PauliTerm(self.coefficient, [((s + shift) % n_sites, a) for s, a in self.factors])


def _check_size(n_sites: int, dense_limit: int) -> None:
    if n_sites > dense_limit:
        raise ValueError(f"N={n_sites} exceeds the dense limit {dense_limit}")


def pauli_string_sparse(term: PauliTerm, n_sites: int) -> sp.csr_matrix:
    """Sparse matrix of one Pauli string (coefficient included)."""
    dim = 1 << n_sites
    idx = np.arange(dim, dtype=np.int64)
    flip = 0
    phase = np.full(dim, term.coefficient, dtype=complex)
    for site, axis in term.factors:
        if not 0 <= site < n_sites:
            raise ValueError(f"site {site} out of range for N={n_sites}")
        bit = (idx >> (n_sites - 1 - site)) & 1
        if axis == "z":
            phase *= 1 - 2 * bit
        elif axis == "x":
            flip |= 1 << (n_sites - 1 - site)
        else:
            # Y|0> = i|1>, Y|1> = -i|0>
            phase *= 1j * (1 - 2 * bit)
            flip |= 1 << (n_sites - 1 - site)
    rows = idx ^ flip
    return sp.csr_matrix((phase, (rows, idx)), shape=(dim, dim))


def build_pauli_hamiltonian(
    terms: Sequence[PauliTerm],
    n_sites: int,
    *,
    sparse: bool = False,
    dense_limit: int = DENSE_LIMIT,
):
    """Sum of Pauli strings as a 2^N x 2^N Hermitian matrix.

    Parameters
    ----------
    terms : sequence of PauliTerm
        Local terms; sites must lie in [0, n_sites).
    n_sites : int
        Number of spins.
    sparse : bool
        Return a CSR matrix instead of a dense ndarray.
    """
    _check_size(n_sites, dense_limit)
    dim = 1 << n_sites
    total = sp.csr_matrix((dim, dim), dtype=complex)
    for term in terms:
        total = total + pauli_string_sparse(term, n_sites)
    return total if sparse else total.toarray()


def cluster_xy_terms(params: ChainParams) -> list[PauliTerm]:
    """Pauli-string decomposition of the Cluster-XY Hamiltonian (periodic)."""
    n = params.n_sites
    terms = []
    for i in range(n):
        terms.append(PauliTerm(-1.0, [((i - 1) % n, "x"), (i, "z"), ((i + 1) % n, "x")]))
        if params.h != 0.0:
            terms.append(PauliTerm(-params.h, [(i, "z")]))
        if params.lambda_y != 0.0:
            terms.append(PauliTerm(params.lambda_y, [(i, "y"), ((i + 1) % n, "y")]))
        if params.lambda_x != 0.0:
            terms.append(PauliTerm(params.lambda_x, [(i, "x"), ((i + 1) % n, "x")]))
    return terms


def derivative_terms(n_sites: int, coordinate: str) -> list[PauliTerm]:
    """Local terms dH_j of the exact derivative dH/d(coordinate), one per site j.

    The family is linear in every coupling, so the derivative is the
    coupling's own term sum and does not depend on the parameter point.
    """
    n = n_sites
    if coordinate == "lambda_x":
        return [PauliTerm(1.0, [(j, "x"), ((j + 1) % n, "x")]) for j in range(n)]
    if coordinate == "lambda_y":
        return [PauliTerm(1.0, [(j, "y"), ((j + 1) % n, "y")]) for j in range(n)]
    if coordinate == "h":
        return [PauliTerm(-1.0, [(j, "z")]) for j in range(n)]
    raise ValueError(f"unknown coordinate {coordinate!r}; expected one of {COUPLINGS}")


def random_local_terms(n_sites: int, rng: np.random.Generator, *, periodic: bool = True) -> list[PauliTerm]:
    """Disordered nearest-neighbour Hamiltonian with Gaussian couplings.

    Every site carries a random field along x, y and z and every bond random
    XX, YY and ZZ couplings; without lattice symmetries the spectrum is
    generically non-resonant (distinct energies and gaps).
    """
    terms = []
    bonds = n_sites if periodic else n_sites - 1
    for i in range(n_sites):
        for a in AXES:
            terms.append(PauliTerm(rng.normal(), [(i, a)]))
    for i in range(bonds):
        for a in AXES:
            terms.append(PauliTerm(rng.normal(), [(i, a), ((i + 1) % n_sites, a)]))
    return terms


def build_dense_hamiltonian(
    params: ChainParams, *, sparse: bool = False, dense_limit: int = DENSE_LIMIT
):
    """Dense Cluster-XY Hamiltonian on the full 2^N space (periodic spins)."""
    _check_size(params.n_sites, dense_limit)
    H = build_pauli_hamiltonian(cluster_xy_terms(params), params.n_sites, sparse=True, dense_limit=dense_limit)
    # every term of the family is a real matrix in the Z basis
    H = H.real.tocsr()
    return H if sparse else H.toarray()


def build_dense_derivative(n_sites: int, coordinate: str, *, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    _check_size(n_sites, dense_limit)
    M = build_pauli_hamiltonian(derivative_terms(n_sites, coordinate), n_sites, sparse=True, dense_limit=dense_limit)
    return M.real.toarray()


def parity_indices(n_sites: int, sector: str = "even") -> np.ndarray:
    """Computational-basis indices with even (or odd) number of flipped spins.

    Fermion parity prod_i Z_i is +1 on states with an even number of |1>.
    """
    if sector not in SECTORS:
        raise ValueError(f"unknown sector {sector!r}")
    idx = np.arange(1 << n_sites)
    pop = np.array([bin(i).count("1") for i in idx]) % 2
    return idx[pop == (0 if sector == "even" else 1)]


# ---------------------------------------------------------------------
# Jordan-Wigner: momentum-space quadratic form
# ---------------------------------------------------------------------


def majorana_couplings(params: ChainParams) -> dict[int, float]:
    """Couplings J_r of H = i sum_j sum_r J_r b_j a_{j+r}.

    With a_j = (prod_{l<j} Z_l) X_j and b_j = (prod_{l<j} Z_l) Y_j one has
    Z_j = i b_j a_j, X_j X_{j+1} = -i b_j a_{j+1}, Y_j Y_{j+1} = -i b_{j+1} a_j
    and X_{j-1} Z_j X_{j+1} = -i b_{j-1} a_{j+1}.
    """
    return {0: -params.h, 1: -params.lambda_x, -1: -params.lambda_y, 2: 1.0}


def allowed_momenta(n_sites: int, sector: str = "even") -> np.ndarray:
    """Positive momenta of the (k, -k) pairs, ascending.

    The even sector uses antiperiodic fermions, k = (2m+1) pi / N.
    """
    if n_sites % 2:
        raise ValueError("the momentum-pair representation requires an even number of sites")
    m = np.arange(n_sites // 2)
    if sector == "even":
        return (2 * m + 1) * np.pi / n_sites
    raise ValueError("only the even (antiperiodic) sector is supported in momentum space")


@dataclass(frozen=True)
class QuadraticForm:
    """H = constant_offset + sum_{k>0} H_k with, on the pair (k, -k),

        H_k = 2 a_k (n_k + n_{-k} - 1) + 2 b_k * i (c_{-k} c_k - c_k^dag c_{-k}^dag).

    ``momenta`` holds the positive momenta; ``a`` and ``b`` the values there.
    The form extends to negative momenta by a_{-k} = a_k, b_{-k} = -b_k.
    """

    params: ChainParams
    momenta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    constant_offset: float

    @property
    def n_sites(self) -> int:
        return self.params.n_sites

    def coefficients(self, k) -> tuple[np.ndarray, np.ndarray]:
        """(a_k, b_k) at arbitrary (possibly negative or continuum) momenta."""
        return _ab(majorana_couplings(self.params), np.asarray(k, dtype=float))

    def sector_matrix(self) -> np.ndarray:
        """2x2 blocks of H_k on (|0>, |k,-k>), shape (n_pairs, 2, 2), offset excluded."""
        out = np.zeros((len(self.momenta), 2, 2), dtype=complex)
        out[:, 0, 1] = 2j * self.b
        out[:, 1, 0] = -2j * self.b
        out[:, 1, 1] = 4 * self.a
        return out


def _ab(J: dict[int, float], k: np.ndarray):
    a = -sum(c * np.cos(k * r) for r, c in J.items())
    b = sum(c * np.sin(k * r) for r, c in J.items())
    return a, b


def jordan_wigner_quadratic(params: ChainParams) -> QuadraticForm:
    """Quadratic fermion form of the Cluster-XY chain in the even-parity sector."""
    if params.parity_sector != "even":
        raise ValueError("the quadratic form is only built for the even sector")
    k = allowed_momenta(params.n_sites)
    a, b = _ab(majorana_couplings(params), k)
    offset = -params.h * params.n_sites + 2.0 * float(a.sum())
    return QuadraticForm(params=params, momenta=k, a=a, b=b, constant_offset=offset)


def coupling_derivative_ab(k, coordinate: str) -> tuple[np.ndarray, np.ndarray]:
    """(da_k, db_k) with respect to one coupling; exact, the family is linear."""
    k = np.asarray(k, dtype=float)
    if coordinate == "lambda_x":
        return np.cos(k), -np.sin(k)
    if coordinate == "lambda_y":
        return np.cos(k), np.sin(k)
    if coordinate == "h":
        return np.ones_like(k), np.zeros_like(k)
    raise ValueError(f"unknown coordinate {coordinate!r}")


# ---------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------


def load_config(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def params_from_config(cfg: dict) -> ChainParams:
    """ChainParams from a TOML mapping with keys n_sites, h, lambda_x, lambda_y, sector."""
    known = {"n_sites", "h", "lambda_x", "lambda_y", "sector"}
    extra = set(cfg) - known
    if extra:
        raise ValueError(f"unknown parameter keys: {sorted(extra)}")
    if "n_sites" not in cfg:
        raise ValueError("config is missing n_sites")
    return ChainParams(
        n_sites=int(cfg["n_sites"]),
        h=float(cfg.get("h", 0.0)),
        lambda_x=float(cfg.get("lambda_x", 0.0)),
        lambda_y=float(cfg.get("lambda_y", 0.0)),
        parity_sector=str(cfg.get("sector", "even")),
    )


def load_params(path: str | Path) -> ChainParams:
    return params_from_config(load_config(path))
