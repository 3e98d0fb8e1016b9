"""Two-boson extended Bose-Hubbard model: parameters, pair basis, Hamiltonians.

Energies are in units of the hopping ``kappa`` and times in units of
``1/kappa``.  Sites are labelled ``1..N``.  The linear field is written in
terms of the force ``F`` acting on every particle, so the potential term is
``-F * sum_j j n_j`` and a positive force drives momenta upward
(``dk/dt = +F`` per particle).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)
DEFAULT_R_MAX = 400

BOUNDARIES = ("open", "periodic")
FIELD_KINDS = ("static", "square", "sine", "sampled")


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    u: float
    v: float
    kappa: float = 1.0
    boundary: str = "open"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        # open chains down to two sites are allowed for hand-checkable matrices
        min_sites = 4 if self.boundary == "periodic" else 2
        if int(self.n_sites) != self.n_sites or self.n_sites < min_sites:
            raise ValueError(f"n_sites must be an integer >= {min_sites} for {self.boundary} boundaries, got {self.n_sites}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    @property
    def delta(self) -> float:
        """On-site / nearest-neighbour imbalance ``U - V``."""
        return self.u - self.v


class PairBasis:
    """Lexicographic (j, r) labelling of two-boson configurations.

    ``r = 0`` is the doubly occupied site ``(a_j^+)^2/sqrt(2)|vac>``, ``r >= 1``
    is ``a_j^+ a_{j+r}^+|vac>``.  ``j`` runs over ``1..N`` and ``r`` over
    ``0..N-j``.
    """

    def __init__(self, n_sites: int):
        if n_sites < 1:
            raise ValueError("n_sites must be positive")
        self.n_sites = int(n_sites)
        n = self.n_sites
        self.dimension = n * (n + 1) // 2
        j = np.concatenate([np.full(n - jj + 1, jj) for jj in range(1, n + 1)])
        r = np.concatenate([np.arange(n - jj + 1) for jj in range(1, n + 1)])
        self.j = j
        self.r = r
        # offset[j] = index of (j, 0)
        counts = n - np.arange(1, n + 1) + 1
        self._offset = np.concatenate([[0, 0], np.cumsum(counts)])[:-1]

    def __len__(self):
        return self.dimension

    def __repr__(self):
        return f"PairBasis(n_sites={self.n_sites}, dimension={self.dimension})"

    def index(self, j, r):
        """Dense index of configuration ``(j, r)``; accepts arrays."""
        j = np.asarray(j)
        r = np.asarray(r)
        if np.any(j < 1) or np.any(j > self.n_sites) or np.any(r < 0) or np.any(r > self.n_sites - j):
            raise IndexError(f"configuration outside the lattice: j={j}, r={r}")
        out = self._offset[j] + r
        return int(out) if out.ndim == 0 else out

    def config(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.dimension:
            raise IndexError(f"index {index} out of range for dimension {self.dimension}")
        return int(self.j[index]), int(self.r[index])

    @property
    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Site of the left and right particle for every basis state."""
        return self.j, self.j + self.r

    @property
    def com_weight(self) -> np.ndarray:
        """``2j + r``: value of ``sum_j j n_j`` on each configuration."""
        return 2 * self.j + self.r

    def to_grid(self, amplitudes: np.ndarray) -> np.ndarray:
        """Scatter a state vector into an ``(N, N)`` array indexed ``[j-1, r]``."""
        grid = np.zeros((self.n_sites, self.n_sites), dtype=np.asarray(amplitudes).dtype)
        grid[self.j - 1, self.r] = amplitudes
        return grid

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        return np.asarray(grid)[self.j - 1, self.r]


@dataclass(frozen=True)
class FieldProtocol:
    """Time-dependent force ``F(t)`` acting on each particle.

    ``square`` and ``sine`` pulses are centred on ``t = shift`` and last
    ``period`` (``T``).  ``sampled`` interpolates linearly between
    ``(time, force)`` samples and is zero outside them.
    """

    kind: str = "static"
    f0: float = 0.0
    period: float = 0.0
    shift: float = 0.0
    samples: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"field kind must be one of {FIELD_KINDS}, got {self.kind!r}")
        if self.kind in ("square", "sine") and not self.period > 0:
            raise ValueError(f"{self.kind} pulse needs a positive period, got {self.period}")
        if self.kind == "sampled":
            if len(self.samples) < 2:
                raise ValueError("sampled field needs at least two (time, force) samples")
            times = [s[0] for s in self.samples]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("sampled field times must be strictly increasing")
            object.__setattr__(self, "samples", tuple((float(t), float(f)) for t, f in self.samples))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = t - self.shift
        if self.kind == "static":
            out = np.full_like(t, self.f0)
        elif self.kind == "square":
            half = self.period / 2
            out = np.where((s > -half) & (s <= 0), self.f0, np.where((s > 0) & (s <= half), -self.f0, 0.0))
        elif self.kind == "sine":
            half = self.period / 2
            out = np.where(np.abs(s) <= half, -self.f0 * np.pi / 2 * np.sin(2 * np.pi * s / self.period), 0.0)
        else:
            ts, fs = np.array(self.samples).T
            out = np.interp(t, ts, fs, left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    def breakpoints(self) -> list[float]:
        """Times where the force has a kink or jump."""
        if self.kind in ("square", "sine"):
            half = self.period / 2
            pts = [self.shift - half, self.shift + half]
            if self.kind == "square":
                pts.insert(1, self.shift)
            return pts
        if self.kind == "sampled":
            return [s[0] for s in self.samples]
        return []

    @property
    def is_static(self) -> bool:
        return self.kind == "static"


def hopping_amplitude(k, kappa: float = 1.0):
    """Centre-of-mass hopping ``J_k = 2 kappa cos(k/2)`` of a pair at momentum k."""
    return 2.0 * kappa * np.cos(np.asarray(k) / 2.0)


def _hops(basis: PairBasis, periodic: bool):
    """Rightward one-particle hops as (target index, source index, bosonic factor) arrays."""
    n = basis.n_sites
    a, b = basis.positions
    rows, cols, vals = [], [], []
    for mover in (0, 1):
        p, q = (a, b) if mover == 0 else (b, a)
        mask = np.ones(basis.dimension, dtype=bool) if mover == 0 else a != b
        dest = p + 1
        if periodic:
            dest = np.where(dest > n, 1, dest)
        else:
            mask &= dest <= n
        src = np.nonzero(mask)[0]
        x = np.minimum(dest[src], q[src])
        y = np.maximum(dest[src], q[src])
        # a doubly occupied site contributes sqrt(2) whether it is emptied or filled
        factor = np.where(a[src] == b[src], SQRT2, 1.0) * np.where(x == y, SQRT2, 1.0)
        rows.append(basis.index(x, y - x))
        cols.append(src)
        vals.append(factor)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_full_hamiltonian(params: ModelParams, basis: PairBasis | None = None, force: float = 0.0) -> sp.csr_matrix:
    """Two-boson sector of ``H0 - F sum_j j n_j`` as a real symmetric CSR matrix.

    Periodic boundaries wrap the hopping between sites N and 1 and are only
    accepted with ``force == 0``.
    """
    if basis is None:
        basis = PairBasis(params.n_sites)
    if basis.n_sites != params.n_sites:
        raise ValueError("basis and params disagree on the lattice size")
    periodic = params.boundary == "periodic"
    if periodic and force != 0:
        raise ValueError("a linear field is incompatible with periodic boundaries")

    rows, cols, vals = _hops(basis, periodic)
    dim = basis.dimension
    hop = sp.coo_matrix((-params.kappa * vals, (rows, cols)), shape=(dim, dim))
    diag = np.zeros(dim)
    r = basis.r
    diag[r == 0] += params.u
    diag[r == 1] += params.v
    if periodic:
        # pairs (1, N) are nearest neighbours through the wrap
        diag[r == basis.n_sites - 1] += params.v
    diag -= force * basis.com_weight
    h = (hop + hop.T).tocsr() + sp.diags(diag, format="csr")
    h.sum_duplicates()
    return h


def build_linear_potential(basis: PairBasis) -> sp.csr_matrix:
    """Diagonal operator ``sum_j j n_j`` (without the force prefactor or sign)."""
    return sp.diags(basis.com_weight.astype(float), format="csr")


def build_keq_hamiltonian(params: ModelParams, k: float, r_max: int = DEFAULT_R_MAX, *, sparse: bool = True):
    """Relative-coordinate chain ``H_eq^k`` truncated at ``r_max``.

    Returns a CSR matrix, or with ``sparse=False`` the pair ``(diagonal,
    offdiagonal)`` suitable for :func:`scipy.linalg.eigh_tridiagonal`.
    """
    if r_max < 2:
        raise ValueError("r_max must be at least 2")
    jk = float(hopping_amplitude(k, params.kappa))
    d = np.zeros(r_max + 1)
    d[0] = params.u
    d[1] = params.v
    e = np.full(r_max, -jk)
    e[0] *= SQRT2
    if not sparse:
        return d, e
    return sp.diags([e, d, e], [-1, 0, 1], format="csr")


def build_effective_hamiltonian(params: ModelParams, force: float, length: int, *, sparse: bool = True):
    """Strong-coupling chain: hopping ``-sqrt(2) kappa``, on-site ``-F l + (delta/2)(-1)^l``.

    ``l = 2j + r`` labels the quasi-invariant pair states; the constant
    ``(U + V)/2`` is dropped.
    """
    if length < 2:
        raise ValueError("length must be at least 2")
    sites = np.arange(length)
    d = -force * sites + 0.5 * params.delta * (-1.0) ** sites
    e = np.full(length - 1, -SQRT2 * params.kappa)
    if not sparse:
        return d, e
    return sp.diags([e, d, e], [-1, 0, 1], format="csr")


def translation_operator(basis: PairBasis) -> sp.csr_matrix:
    """Periodic translation by one site on the pair basis (permutation matrix)."""
    n = basis.n_sites
    pos1, pos2 = basis.positions
    a = pos1 % n + 1
    b = pos2 % n + 1
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    target = basis.index(lo, hi - lo)
    dim = basis.dimension
    return sp.csr_matrix((np.ones(dim), (target, np.arange(dim))), shape=(dim, dim))


def parity_sign_operator(basis: PairBasis) -> sp.csr_matrix:
    """``R a_j R^-1 = (-1)^j a_j`` on the pair basis."""
    return sp.diags((-1.0) ** basis.r, format="csr")


def is_hermitian(op, tol: float = 0.0) -> bool:
    diff = op - op.conj().T
    if sp.issparse(diff):
        return diff.nnz == 0 or np.max(np.abs(diff.data)) <= tol
    return np.max(np.abs(diff)) <= tol


def config_state(basis: PairBasis, configs: Sequence[tuple[int, int]], weights: Sequence[complex] | None = None) -> np.ndarray:
    """Normalized superposition of basis configurations ``(j, r)``."""
    psi = np.zeros(basis.dimension, dtype=complex)
    if weights is None:
        weights = [1.0] * len(configs)
    for (j, r), w in zip(configs, weights):
        psi[basis.index(j, r)] += w
    return psi / np.linalg.norm(psi)
