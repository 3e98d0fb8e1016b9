import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairband.bands import band_edge, compute_band_structure
from pairband.model import FieldProtocol, ModelParams, PairBasis, config_state
from pairband.observables import (
    BandEnergy,
    bands_touch_at_pi,
    center_of_mass,
    density_profile,
    detect_sudden_death,
    fidelity_curve,
    mean_distance,
    oscillation_period,
    pair_momentum,
    predict_lifetime,
    semiclassical_path,
    zener_transfer_fraction,
)
from pairband.propagate import Trajectory, evolve_static

BASIS = PairBasis(8)


def _state(seed, basis=BASIS):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=basis.dimension) + 1j * rng.normal(size=basis.dimension)
    return psi / np.linalg.norm(psi)


def test_density_doubly_occupied():
    n = density_profile(config_state(BASIS, [(3, 0)]), BASIS)
    assert n[2] == pytest.approx(2.0) and n.sum() == pytest.approx(2.0)


def test_density_separated_pair():
    psi = config_state(BASIS, [(2, 3)])
    n = density_profile(psi, BASIS)
    assert n[1] == pytest.approx(1.0) and n[4] == pytest.approx(1.0)
    assert mean_distance(psi, BASIS) == pytest.approx(3.0)
    assert center_of_mass(psi, BASIS) == pytest.approx(7.0)


def test_superposition():
    psi = config_state(BASIS, [(5, 2), (4, 0)])  # sites (5,7) and (4,4)
    assert center_of_mass(psi, BASIS) == pytest.approx(0.5 * 12 + 0.5 * 8)
    assert mean_distance(psi, BASIS) == pytest.approx(1.0)
    n = density_profile(psi, BASIS)
    assert n[3] == pytest.approx(1.0) and n[4] == pytest.approx(0.5) and n[6] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_density_sum_rule(seed):
    psi = _state(seed)
    assert density_profile(psi, BASIS).sum() == pytest.approx(2.0, abs=1e-12)
    assert mean_distance(psi, BASIS) >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 6))
def test_com_translation(j, r):
    if j + r >= 8:
        return
    a = config_state(BASIS, [(j, r)])
    b = config_state(BASIS, [(j + 1, r)])
    assert center_of_mass(b, BASIS) - center_of_mass(a, BASIS) == pytest.approx(2.0)
    assert np.allclose(np.roll(density_profile(a, BASIS), 1)[1:], density_profile(b, BASIS)[1:])


def test_fidelity_identical_runs():
    params = ModelParams(8, 2.0, 1.0)
    from pairband.model import build_full_hamiltonian

    h = build_full_hamiltonian(params, BASIS)
    psi = config_state(BASIS, [(4, 0)])
    a = evolve_static(h, psi, np.linspace(0, 5, 11))
    res = fidelity_curve(a, a)
    assert np.allclose(res.f, 1.0)
    res = fidelity_curve(a, a, t0=2.0)
    assert res.fidelity == pytest.approx(1.0) and res.t_max == pytest.approx(2.0)


def test_fidelity_space_mismatch():
    a = Trajectory(np.zeros(1), {}, np.zeros(1), [np.ones(3)])
    b = Trajectory(np.zeros(1), {}, np.zeros(1), [np.ones(4)])
    with pytest.raises(ValueError, match="different spaces"):
        fidelity_curve(a, b)


def test_lifetime_examples():
    km = 1.38632
    # starting at the edge: dead immediately
    assert predict_lifetime(km, -km, 0.05) == 0.0
    # -0.8 pi drifting right at 2F
    assert predict_lifetime(km, -0.8 * np.pi, 0.05) == pytest.approx((0.8 * np.pi - km) / 0.1)
    # mirror symmetry
    assert predict_lifetime(km, 0.8 * np.pi, -0.05) == pytest.approx(predict_lifetime(km, -0.8 * np.pi, 0.05))
    # moving away first: wraps through the zone boundary
    assert predict_lifetime(km, 0.8 * np.pi, 0.05) == pytest.approx((0.2 * np.pi + np.pi - km) / 0.1)
    assert predict_lifetime(None, 0.3, 0.05) == math.inf
    with pytest.raises(ValueError):
        predict_lifetime(km, 0.3, 0.0)


def test_pair_momentum_rate():
    k = pair_momentum(0.1, FieldProtocol("static", 0.05), [0.0, 10.0])
    assert k[1] - k[0] == pytest.approx(1.0)
    k = pair_momentum(0.0, FieldProtocol("square", 0.05, 40.0, 30.0), [0.0, 30.0, 60.0])
    assert np.allclose(k, [0.0, 2.0, 0.0])


@pytest.fixture(scope="module")
def band_a():
    return compute_band_structure(ModelParams(160, 7.0, 6.0), n_k=64)


def test_static_semiclassical_is_energy_over_force(band_a):
    f = 0.05
    times = np.linspace(0, np.pi / f, 201)
    path = semiclassical_path(band_a, -0.8 * np.pi, 160.0, FieldProtocol("static", f), times)
    energy = BandEnergy(band_a, "lower")
    assert np.allclose(path.x_c, 160 + (energy(path.k_c) - energy(-0.8 * np.pi)) / f, atol=1e-9)
    # one full sweep of the zone returns the packet
    assert path.x_c[-1] == pytest.approx(160.0, abs=1e-6)
    assert np.ptp(path.x_c) == pytest.approx(np.ptp(band_a.energy["lower"]) / f, rel=0.02)


def test_time_dependent_semiclassical_integrates_velocity(band_a):
    # a weak static field treated as time-dependent must agree with E/F
    f = 0.05
    times = np.linspace(0, 40, 2001)
    sampled = FieldProtocol("sampled", samples=((-1.0, f), (100.0, f)))
    a = semiclassical_path(band_a, -0.8 * np.pi, 0.0, FieldProtocol("static", f), times)
    b = semiclassical_path(band_a, -0.8 * np.pi, 0.0, sampled, times)
    assert np.max(np.abs(a.x_c - b.x_c)) < 1e-2


def test_semiclassical_truncates_at_missing_band():
    band = compute_band_structure(ModelParams(100, 5.0, 4.0), n_k=64)
    times = np.linspace(0, 40, 401)
    path = semiclassical_path(band, -0.8 * np.pi, 0.0, FieldProtocol("static", 0.05), times)
    assert path.truncated_at == pytest.approx(predict_lifetime(band_edge(band, "lower"), -0.8 * np.pi, 0.05), abs=0.5)


def test_bands_touch_only_for_equal_couplings():
    assert bands_touch_at_pi(compute_band_structure(ModelParams(50, 5.0, 5.0), n_k=16))
    assert not bands_touch_at_pi(compute_band_structure(ModelParams(50, 7.0, 6.0), n_k=16))


def test_oscillation_period_synthetic():
    t = np.arange(0, 300, 0.5)
    x = 3 * np.cos(2 * np.pi * t / 41.3) + 0.2 * t / 300
    assert oscillation_period(t, x) == pytest.approx(41.3, rel=5e-3)
    with pytest.raises(ValueError):
        oscillation_period(t[:4], x[:4])
    with pytest.raises(ValueError, match="uniform"):
        oscillation_period(t**2, x)


def test_zener_fraction_synthetic():
    t = np.linspace(0, 10, 101)
    k = np.linspace(-np.pi, np.pi, 101)
    w = np.where(np.abs(k) > 0.95 * np.pi, np.cumsum(np.abs(k) > 0.95 * np.pi) * 0.01, 0.0)
    assert zener_transfer_fraction(t, w, k) == pytest.approx(1.0)
    assert zener_transfer_fraction(t, 0.001 * t, k) == pytest.approx(0.1, abs=0.02)
    assert zener_transfer_fraction(t, np.zeros_like(t), k) == 1.0


def _synthetic(r, leak, dt=0.5):
    t = np.arange(len(r)) * dt
    return Trajectory(t, {"r_mean": np.asarray(r, float), "leakage": np.asarray(leak, float)}, t[:1], [])


def test_sudden_death_detected():
    t = np.arange(0, 60, 0.5)
    onset = 20.0
    r = np.where(t < onset, 1.5 + 0.1 * np.sin(t), 1.5 + 0.3 * (t - onset))
    leak = np.where(t < onset, 0.0, 0.9)
    assert detect_sudden_death(_synthetic(r, leak)) == pytest.approx(onset, abs=0.5)


def test_no_death_for_bound_breathing():
    t = np.arange(0, 60, 0.5)
    r = 1.5 + 0.4 * np.sin(0.3 * t)
    assert detect_sudden_death(_synthetic(r, np.zeros_like(t))) is None
    # growth without leakage is not death either
    assert detect_sudden_death(_synthetic(1 + 0.1 * t, np.zeros_like(t))) is None
