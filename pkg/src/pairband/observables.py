"""Observables of pair states and trajectories, and the semiclassical predictions they are checked against."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bands import BandStructure, compute_band_structure, momentum_grid
from .model import FieldProtocol, PairBasis
from .propagate import Trajectory, impulse
from .wavepacket import wrap_momentum

PAIR_CHARGE = 2  # the field couples to both particles, so the pair momentum moves at 2F
LEAKAGE_DEATH = 0.25
ZENER_WINDOW = 0.9 * np.pi
DEGENERACY_TOL = 1e-6


# -- per-state ----------------------------------------------------------------


def density_profile(psi: np.ndarray, basis: PairBasis) -> np.ndarray:
    """``<n_j>`` for j = 1..N; sums to 2."""
    p = np.abs(psi) ** 2
    a, b = basis.positions
    n = basis.n_sites
    return np.bincount(a - 1, p, minlength=n) + np.bincount(b - 1, p, minlength=n)


def mean_distance(psi: np.ndarray, basis: PairBasis) -> float:
    return float(basis.r @ (np.abs(psi) ** 2))


def center_of_mass(psi: np.ndarray, basis: PairBasis) -> float:
    """``sum_j j <n_j>`` over both particles."""
    return float(basis.com_weight @ (np.abs(psi) ** 2))


def state_observer(basis: PairBasis, projector=None, target: np.ndarray | None = None):
    """Per-sample recorder for the propagators: x_c, r_mean and optionally band weights and a target overlap."""
    w = np.empty(basis.dimension)

    def observe(psi):
        np.abs(psi, out=w)
        w[:] *= w
        rec = {"x_c": float(basis.com_weight @ w), "r_mean": float(basis.r @ w)}
        if projector is not None:
            dist = projector(psi)
            rec["lower"] = float(dist.lower.sum())
            rec["upper"] = float(dist.upper.sum())
            rec["leakage"] = dist.leakage
        if target is not None:
            rec["overlap"] = float(abs(np.vdot(target, psi)))
        return rec

    return observe


# -- fidelity -----------------------------------------------------------------


@dataclass
class FidelityResult:
    times: np.ndarray
    f: np.ndarray

    @property
    def fidelity(self) -> float:
        return float(np.max(self.f))

    @property
    def t_max(self) -> float:
        return float(self.times[int(np.argmax(self.f))])


def fidelity_curve(transferred: Trajectory, reference: Trajectory, t0: float | None = None) -> FidelityResult:
    """``f(t) = |<Psi_t(t)|Psi_0(t0)>|`` over the stored states of ``transferred``.

    Without ``t0`` the overlap is taken at equal times, on the stored times
    common to both trajectories.
    """
    if transferred.final_state.shape != reference.final_state.shape:
        raise ValueError(
            f"trajectories live in different spaces: {transferred.final_state.shape} vs {reference.final_state.shape}"
        )
    if t0 is not None:
        target = reference.state_at(t0)
        f = np.array([abs(np.vdot(s, target)) for s in transferred.states])
        return FidelityResult(transferred.state_times.copy(), np.clip(f, 0.0, 1.0))
    ref = {round(t, 9): s for t, s in zip(reference.state_times, reference.states)}
    times, f = [], []
    for t, s in zip(transferred.state_times, transferred.states):
        other = ref.get(round(t, 9))
        if other is not None:
            times.append(t)
            f.append(abs(np.vdot(s, other)))
    if not times:
        raise ValueError("no common stored times between the trajectories")
    return FidelityResult(np.array(times), np.clip(np.array(f), 0.0, 1.0))


# -- semiclassics ------------------------------------------------------------


@dataclass
class SemiclassicalPath:
    times: np.ndarray
    k_c: np.ndarray
    x_c: np.ndarray
    truncated_at: float | None = None
    band: np.ndarray | None = None


def pair_momentum(k0: float, field: FieldProtocol, times) -> np.ndarray:
    """Unwrapped centre momentum ``k0 + 2 * impulse(0, t)``."""
    times = np.asarray(times, dtype=float)
    return k0 + PAIR_CHARGE * np.array([impulse(field, 0.0, t) for t in times])


def bands_touch_at_pi(band: BandStructure) -> bool:
    """True when the two bound bands are degenerate at the zone boundary (U = V)."""
    i = band.k_index(np.pi)
    lo, up = band.energy["lower"][i], band.energy["upper"][i]
    return bool(np.isfinite(lo) and np.isfinite(up) and abs(up - lo) < DEGENERACY_TOL * max(1.0, abs(lo)))


class BandEnergy:
    """Exact ``E(K)`` of one band at arbitrary momenta, from a fine reference grid.

    When the two bands touch at the zone boundary the packet crosses into
    the other band there, so the dispersion is followed through the
    touching point (the band label flips at every zone-boundary crossing).
    """

    def __init__(self, band: BandStructure, which: str, n_k: int = 1024):
        fine = compute_band_structure(band.params, r_max=band.r_max, k_grid=momentum_grid(n_k))
        self.which = which
        self.unfold = bands_touch_at_pi(fine)
        order = np.argsort(fine.k)
        self._k = fine.k[order]
        self._e = {b: fine.energy[b][order] for b in ("lower", "upper")}
        self._k_ext = np.concatenate([self._k - 2 * np.pi, self._k, self._k + 2 * np.pi])

    def label(self, k_unwrapped) -> np.ndarray:
        k = np.asarray(k_unwrapped, dtype=float)
        other = "upper" if self.which == "lower" else "lower"
        if not self.unfold:
            return np.full(k.shape, self.which, dtype=object)
        winding = np.floor((k + np.pi) / (2 * np.pi)).astype(int)
        return np.where(winding % 2 == 0, self.which, other).astype(object)

    def __call__(self, k_unwrapped) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k_unwrapped, dtype=float))
        labels = self.label(k)
        kw = wrap_momentum(k)
        out = np.empty(k.shape)
        for b in ("lower", "upper"):
            m = labels == b
            if m.any():
                e = self._e[b]
                out[m] = np.interp(kw[m], self._k_ext, np.concatenate([e, e, e]))
        return out


def semiclassical_path(
    band: BandStructure,
    k0: float,
    x0: float,
    field: FieldProtocol,
    times,
    which: str = "lower",
) -> SemiclassicalPath:
    """Centre-of-mass path of a packet that follows its band.

    Static fields use ``x_c(t) = x_c(0) + [E(K(t)) - E(K(0))] / F``;
    time-dependent fields integrate the pair group velocity with the
    trapezoid rule on ``times``.  The path stops where the band is missing.
    """
    times = np.asarray(times, dtype=float)
    energy = BandEnergy(band, which)
    k = pair_momentum(k0, field, times)
    e = energy(k)
    missing = ~np.isfinite(e)
    truncated = None
    if missing.any():
        first = int(np.argmax(missing))
        truncated = float(times[first])
        times, k, e = times[:first], k[:first], e[:first]
    if len(times) == 0:
        return SemiclassicalPath(times, k, k.copy(), truncated)

    if field.is_static and field.f0 != 0:
        x = x0 + (e - e[0]) / field.f0
    else:
        # x_c = 2X and dX/dt = dE/dK
        h = 1e-4
        v = (energy(k + h) - energy(k - h)) / (2 * h)
        x = x0 + PAIR_CHARGE * np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(times))])
    return SemiclassicalPath(times, wrap_momentum(k), x, truncated, energy.label(k))


def predict_lifetime(k_m: float | None, k_c0: float, force: float, charge: float = PAIR_CHARGE) -> float:
    """First time the drifting centre momentum enters the missing window ``|K| < k_m``.

    The momentum moves at ``charge * force``; complete bands (``k_m`` None)
    give ``inf``.
    """
    if force == 0:
        raise ValueError("lifetime needs a non-zero force")
    if k_m is None:
        return math.inf
    k = wrap_momentum(k_c0)
    if abs(k) <= k_m:
        return 0.0
    rate = charge * abs(force)
    if force > 0:
        dist = np.mod(-k_m - k, 2 * np.pi)
    else:
        dist = np.mod(k - k_m, 2 * np.pi)
    return float(dist / rate)


def detect_sudden_death(
    traj: Trajectory,
    window: float = 20.0,
    slope_threshold: float = 0.02,
    leakage_threshold: float = LEAKAGE_DEATH,
) -> float | None:
    """Onset of irreversible pair breaking.

    Earliest sample time ``t`` such that ``r_mean`` does not decrease over
    ``[t, t + window]``, grows there at an average rate above
    ``slope_threshold``, and the band leakage at ``t`` already exceeds
    ``leakage_threshold``.
    """
    t = traj.times
    r = traj["r_mean"]
    leak = traj["leakage"]
    nondecreasing = np.concatenate([np.diff(r) >= -1e-9, [True]])
    # length of the non-decreasing run starting at each sample
    run_end = np.empty(len(t), dtype=int)
    end = len(t) - 1
    for i in range(len(t) - 1, -1, -1):
        if not nondecreasing[i]:
            end = i
        run_end[i] = end
    for i in range(len(t)):
        j = int(np.searchsorted(t, t[i] + window - 1e-9))
        if j >= len(t):
            break
        if run_end[i] < j or leak[i] <= leakage_threshold:
            continue
        if (r[j] - r[i]) / (t[j] - t[i]) > slope_threshold and leak[j] > leakage_threshold:
            return float(t[i])
    return None


# -- periods and Zener transfer ------------------------------------------------


def oscillation_period(times, x) -> float:
    """Period from the first autocorrelation maximum of a uniformly sampled series."""
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-9):
        raise ValueError("oscillation_period needs uniform sampling")
    y = np.asarray(x, dtype=float) - np.mean(x)
    n = len(y)
    ac = np.correlate(y, y, mode="full")[n - 1 :]
    ac /= np.arange(n, 0, -1)  # unbiased: each lag averages over fewer pairs
    ac /= ac[0]
    below = np.nonzero(ac < 0)[0]
    if len(below) == 0:
        raise ValueError("series does not oscillate within the sampled window")
    start = below[0]
    usable = ac[start : (3 * n) // 4]
    if len(usable) < 3:
        raise ValueError("series too short to resolve a full period")
    i = start + int(np.argmax(usable))
    if 0 < i < n - 1:
        a, b, c = ac[i - 1], ac[i], ac[i + 1]
        denom = a - 2 * b + c
        off = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        off = 0.0
    return float((i + off) * dt[0])


def zener_transfer_fraction(times, upper_weight, k_c, window: float = ZENER_WINDOW) -> float:
    """Share of the total |d w_upper| accumulated while ``|k_c| > window``.

    ``k_c`` is the (wrapped) semiclassical centre momentum at ``times``;
    each interval is attributed by its midpoint momentum.
    """
    w = np.asarray(upper_weight, dtype=float)
    k = np.asarray(k_c, dtype=float)
    dw = np.abs(np.diff(w))
    total = dw.sum()
    if total == 0:
        return 1.0
    # midpoint on the circle
    mid = np.angle(np.exp(1j * k[:-1]) + np.exp(1j * k[1:]))
    return float(dw[np.abs(mid) > window].sum() / total)
