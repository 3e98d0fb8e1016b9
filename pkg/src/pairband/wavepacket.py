"""Gaussian bound-pair wavepackets and their band-resolved momentum content."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bands import BandStructure, band_edge, compute_band_structure
from .model import DEFAULT_R_MAX, ModelParams, PairBasis

EDGE_MARGIN = 10
TAIL_AMPLITUDE = 1e-6
SUPPORT_WIDTHS = 4.0
SUM_WIDTHS = 6.0
DROPPED_WEIGHT_MAX = 1e-3


class EdgeProximityWarning(UserWarning):
    """The state has non-negligible weight within a few sites of the open ends."""


class BandSupportError(ValueError):
    pass


@dataclass(frozen=True)
class PacketSpec:
    k0: float
    alpha: float
    n_a: float
    band: str = "lower"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.band not in ("lower", "upper"):
            raise ValueError(f"band must be 'lower' or 'upper', got {self.band!r}")
        if not -np.pi < self.k0 <= np.pi + 1e-12:
            raise ValueError(f"k0 must lie in (-pi, pi], got {self.k0}")


def wrap_momentum(k):
    """Map momenta into (-pi, pi]."""
    k = np.asarray(k, dtype=float)
    out = np.pi - np.mod(np.pi - k, 2 * np.pi)
    return float(out) if out.ndim == 0 else out


def lattice_momenta(n_sites: int) -> np.ndarray:
    """The N momenta ``2 pi m / N`` in (-pi, pi]."""
    m = np.arange(-((n_sites - 1) // 2), n_sites // 2 + 1)
    return 2 * np.pi * m / n_sites


def lattice_bands(params: ModelParams, r_max: int = DEFAULT_R_MAX) -> BandStructure:
    """Band structure on the lattice momenta, as needed to build and project packets."""
    return compute_band_structure(params, r_max=r_max, k_grid=lattice_momenta(params.n_sites))


def _check_grid(band: BandStructure, basis: PairBasis):
    n = basis.n_sites
    m = np.round(band.k * n / (2 * np.pi))
    if len(band.k) != n or np.max(np.abs(band.k - 2 * np.pi * m / n)) > 1e-9:
        raise ValueError("band structure must be computed on the lattice grid 2*pi*m/N (see lattice_bands)")


def edge_weight(psi: np.ndarray, basis: PairBasis, margin: int = EDGE_MARGIN) -> float:
    """Largest amplitude on configurations with a particle within ``margin`` sites of an end."""
    a, b = basis.positions
    near = (a <= margin) | (b > basis.n_sites - margin)
    return float(np.max(np.abs(psi[near]), initial=0.0))


def check_edges(psi: np.ndarray, basis: PairBasis, margin: int = EDGE_MARGIN, tol: float = TAIL_AMPLITUDE) -> bool:
    w = edge_weight(psi, basis, margin)
    if w > tol:
        warnings.warn(
            f"state amplitude {w:.2e} within {margin} sites of the lattice ends; enlarge n_sites",
            EdgeProximityWarning,
            stacklevel=3,
        )
        return False
    return True


def packet_support(spec: PacketSpec, band: BandStructure, widths: float = SUPPORT_WIDTHS) -> np.ndarray:
    """Grid indices with ``|k - k0| <= widths * alpha`` (distance taken around the zone)."""
    dk = wrap_momentum(band.k - spec.k0)
    return np.nonzero(np.abs(dk) <= widths * spec.alpha + 1e-12)[0]


def _gaussian_weight(spec: PacketSpec, band: BandStructure, idx: np.ndarray) -> np.ndarray:
    dk = wrap_momentum(band.k[idx] - spec.k0)
    return np.exp(-(dk**2) / spec.alpha**2)


def build_packet(spec: PacketSpec, band: BandStructure, basis: PairBasis) -> np.ndarray:
    """Normalized superposition ``sum_k exp[-(k-k0)^2/2a^2 - i N_A (k-k0)] |psi_k>``.

    ``|psi_k>`` has amplitude ``N^{-1/2} exp(ik(j + r/2)) c_r(k)`` on
    configuration (j, r).  The sum runs over lattice momenta within
    ``6 alpha`` of ``k0``; momenta where the band is missing are skipped if
    they carry less than ``1e-3`` of the Gaussian weight, otherwise
    :class:`BandSupportError` is raised.  Neighbouring eigenvectors are
    sign-aligned along the support so the packet is smooth across the zone
    boundary.
    """
    _check_grid(band, basis)
    n = basis.n_sites
    idx = packet_support(spec, band, SUM_WIDTHS)
    present = band.present(spec.band)[idx]
    if not present.all():
        w = _gaussian_weight(spec, band, idx)
        dropped = w[~present].sum() / w.sum()
        if dropped > DROPPED_WEIGHT_MAX:
            edge = band_edge(band, spec.band)
            raise BandSupportError(
                f"packet around k0={spec.k0:.4f} (alpha={spec.alpha}) puts {dropped:.2e} of its weight "
                f"outside the {spec.band} band (edge k_m={edge if edge is None else round(edge, 6)})"
            )
        idx = idx[present]

    dk = wrap_momentum(band.k[idx] - spec.k0)
    order = np.argsort(dk)
    idx, dk = idx[order], dk[order]
    k_cont = spec.k0 + dk
    n_r = min(n, band.r_max + 1)
    r = np.arange(n_r)

    coeffs = []
    for i, kc in zip(idx, k_cont):
        c = band.vectors[spec.band][i, :n_r].copy()
        # continuing past +-pi flips odd-r amplitudes (J_k changes sign)
        shift = int(np.round((kc - band.k[i]) / (2 * np.pi)))
        if shift % 2:
            c = c * (-1.0) ** r
        coeffs.append(c)
    centre = int(np.argmin(np.abs(dk)))
    for i in range(centre + 1, len(coeffs)):
        if coeffs[i] @ coeffs[i - 1] < 0:
            coeffs[i] = -coeffs[i]
    for i in range(centre - 1, -1, -1):
        if coeffs[i] @ coeffs[i + 1] < 0:
            coeffs[i] = -coeffs[i]

    weights = np.exp(-(dk**2) / (2 * spec.alpha**2) - 1j * spec.n_a * dk)
    j = np.arange(1, n + 1)
    grid = np.zeros((n, n_r), dtype=complex)
    for w, kc, c in zip(weights, k_cont, coeffs):
        grid += w * np.outer(np.exp(1j * kc * j), np.exp(0.5j * kc * r) * c)
    full = np.zeros((n, n), dtype=complex)
    full[:, :n_r] = grid / np.sqrt(n)
    psi = basis.from_grid(full)
    psi /= np.linalg.norm(psi)
    check_edges(psi, basis)
    return psi


@dataclass
class MomentumDistribution:
    k: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def bound_weight(self) -> float:
        return float(self.lower.sum() + self.upper.sum())

    @property
    def leakage(self) -> float:
        """Weight outside both bound bands (scattering continuum)."""
        return max(0.0, 1.0 - self.bound_weight)

    def weight(self, which: str) -> np.ndarray:
        return self.lower if which == "lower" else self.upper

    def mean_k(self, which: str) -> float:
        """Circular mean of the band's momentum distribution."""
        p = self.weight(which)
        return float(np.angle(np.sum(p * np.exp(1j * self.k))))


class BandProjector:
    """Projects pair states onto the per-k bound eigenstates of a lattice band structure."""

    def __init__(self, band: BandStructure, basis: PairBasis):
        _check_grid(band, basis)
        self.band = band
        self.basis = basis
        n = basis.n_sites
        self.n_r = min(n, band.r_max + 1)
        j = np.arange(1, n + 1)
        r = np.arange(self.n_r)
        self._fourier = np.exp(-1j * np.outer(band.k, j)) / np.sqrt(n)
        self._bra = {}
        for b in ("lower", "upper"):
            vec = band.vectors[b][:, : self.n_r] * band.present(b)[:, None]
            self._bra[b] = vec * np.exp(-0.5j * np.outer(band.k, r))

    def amplitudes(self, psi: np.ndarray) -> dict[str, np.ndarray]:
        grid = self.basis.to_grid(np.asarray(psi, dtype=complex))[:, : self.n_r]
        ft = self._fourier @ grid
        return {b: np.sum(self._bra[b] * ft, axis=1) for b in ("lower", "upper")}

    def __call__(self, psi: np.ndarray) -> MomentumDistribution:
        amp = self.amplitudes(psi)
        return MomentumDistribution(self.band.k.copy(), np.abs(amp["lower"]) ** 2, np.abs(amp["upper"]) ** 2)


def momentum_distribution(psi: np.ndarray, band: BandStructure, basis: PairBasis) -> MomentumDistribution:
    return BandProjector(band, basis)(psi)
