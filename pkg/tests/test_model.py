import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pairband.model import (
    SQRT2,
    FieldProtocol,
    ModelParams,
    PairBasis,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_keq_hamiltonian,
    build_linear_potential,
    config_state,
    hopping_amplitude,
    is_hermitian,
    translation_operator,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 1.0, 1.0, boundary="periodic")
    with pytest.raises(ValueError):
        ModelParams(10, 1.0, 1.0, kappa=0.0)
    with pytest.raises(ValueError):
        ModelParams(10, 1.0, 1.0, boundary="twisted")
    assert ModelParams(10, 7.0, 6.7).delta == pytest.approx(0.3)


def test_basis_dimension_and_order():
    b = PairBasis(4)
    assert b.dimension == 10 == len(b)
    assert [b.config(i) for i in range(4)] == [(1, 0), (1, 1), (1, 2), (1, 3)]
    assert b.config(4) == (2, 0)
    with pytest.raises(IndexError):
        b.index(4, 1)
    with pytest.raises(IndexError):
        b.index(0, 0)


@given(st.integers(2, 40))
@settings(max_examples=25, deadline=None)
def test_basis_round_trip(n):
    b = PairBasis(n)
    assert b.dimension == n * (n + 1) // 2
    idx = np.arange(b.dimension)
    assert np.array_equal(b.index(b.j, b.r), idx)
    for i in (0, b.dimension // 2, b.dimension - 1):
        assert b.index(*b.config(i)) == i
    psi = np.arange(b.dimension) + 1j
    assert np.array_equal(b.from_grid(b.to_grid(psi)), psi)


def test_two_site_matrix():
    h = build_full_hamiltonian(ModelParams(2, 0.0, 0.0)).toarray()
    expected = np.array([[0, -SQRT2, 0], [-SQRT2, 0, -SQRT2], [0, -SQRT2, 0]])
    assert np.allclose(h, expected, atol=0)


def test_two_site_diagonal():
    h = build_full_hamiltonian(ModelParams(2, 5.0, 4.0)).toarray()
    assert np.array_equal(np.diag(h), [5.0, 4.0, 5.0])


def test_linear_potential_is_sum_of_positions():
    b = PairBasis(6)
    pot = build_linear_potential(b).diagonal()
    assert np.array_equal(pot, 2 * b.j + b.r)
    h0 = build_full_hamiltonian(ModelParams(6, 1.0, 2.0), b)
    hf = build_full_hamiltonian(ModelParams(6, 1.0, 2.0), b, force=0.3)
    assert np.allclose((hf - h0).diagonal(), -0.3 * pot)


def test_periodic_field_rejected():
    with pytest.raises(ValueError):
        build_full_hamiltonian(ModelParams(6, 1.0, 1.0, boundary="periodic"), force=0.1)


@given(
    n=st.integers(2, 12),
    u=st.floats(-10, 10),
    v=st.floats(-10, 10),
    f=st.floats(-1, 1),
    periodic=st.booleans(),
)
@settings(max_examples=40, deadline=None)
def test_builders_hermitian(n, u, v, f, periodic):
    if periodic:
        n = max(n, 4)
        h = build_full_hamiltonian(ModelParams(n, u, v, boundary="periodic"))
    else:
        h = build_full_hamiltonian(ModelParams(n, u, v), force=f)
    assert is_hermitian(h)
    hk = build_keq_hamiltonian(ModelParams(4, u, v), k=0.3, r_max=20)
    assert is_hermitian(hk)
    assert is_hermitian(build_effective_hamiltonian(ModelParams(4, u, v), f, 12))


@pytest.mark.parametrize("n", [4, 7, 12])
def test_periodic_translation_symmetry(n):
    p = ModelParams(n, 7.0, 6.0, boundary="periodic")
    b = PairBasis(n)
    h = build_full_hamiltonian(p, b)
    t = translation_operator(b)
    assert sp.linalg.norm(h @ t - t @ h) < 1e-12
    # T is a permutation: T^N = 1
    tn = sp.identity(b.dimension, format="csr")
    for _ in range(n):
        tn = tn @ t
    assert sp.linalg.norm(tn - sp.identity(b.dimension)) == 0


@pytest.mark.parametrize("n,u,v", [(10, 7.0, 6.0), (12, 5.0, -4.0), (10, -2.0, 3.0)])
def test_spectral_symmetry(n, u, v):
    e1 = np.linalg.eigvalsh(build_full_hamiltonian(ModelParams(n, u, v, boundary="periodic")).toarray())
    e2 = np.linalg.eigvalsh(build_full_hamiltonian(ModelParams(n, -u, -v, boundary="periodic")).toarray())
    assert np.max(np.abs(e1 + e2[::-1])) < 1e-10


def test_keq_zone_boundary_diagonal():
    d, e = build_keq_hamiltonian(ModelParams(4, 5.0, 4.0), np.pi, r_max=10, sparse=False)
    assert d[0] == 5.0 and d[1] == 4.0 and np.all(d[2:] == 0)
    assert np.max(np.abs(e)) < 1e-15


def test_keq_hopping_at_zero():
    d, e = build_keq_hamiltonian(ModelParams(4, 0.0, 0.0), 0.0, r_max=10, sparse=False)
    assert e[0] == pytest.approx(-2 * SQRT2)
    assert np.allclose(e[1:], -2.0)
    assert hopping_amplitude(0.0) == pytest.approx(2.0)


def test_keq_attractive_onsite_energy():
    # bound state of an attractive contact pair: E = -sqrt(U^2 + 4 J0^2)
    h = build_keq_hamiltonian(ModelParams(4, -4.0, 0.0), 0.0, r_max=400)
    e = np.linalg.eigvalsh(h.toarray())
    assert e[0] == pytest.approx(-np.sqrt(16 + 16), abs=1e-10)


def test_keq_matches_full_periodic_top_state():
    # the top of the U=5, V=4 spectrum is the repulsive bound pair at K=0
    p = ModelParams(40, 5.0, 4.0, boundary="periodic")
    top_full = np.linalg.eigvalsh(build_full_hamiltonian(p).toarray())[-1]
    top_k = np.linalg.eigvalsh(build_keq_hamiltonian(p, 0.0, r_max=400).toarray())[-1]
    assert top_full == pytest.approx(top_k, abs=1e-6)


def test_keq_converged_in_r_max():
    p = ModelParams(4, 7.0, 6.0)
    a = np.linalg.eigvalsh(build_keq_hamiltonian(p, 0.5, r_max=200).toarray())[-2:]
    b = np.linalg.eigvalsh(build_keq_hamiltonian(p, 0.5, r_max=400).toarray())[-2:]
    assert np.max(np.abs(a - b)) < 1e-8


def test_effective_hamiltonian_uniform_chain():
    n = 30
    h = build_effective_hamiltonian(ModelParams(4, 5.0, 5.0), 0.0, n).toarray()
    q = np.pi * np.arange(1, n + 1) / (n + 1)
    assert np.allclose(np.sort(np.linalg.eigvalsh(h)), np.sort(-2 * SQRT2 * np.cos(q)))


def test_effective_hamiltonian_gap():
    # staggered +-delta/2 opens a gap |delta| at the band centre
    h = build_effective_hamiltonian(ModelParams(4, 7.0, 6.7), 0.0, 400).toarray()
    e = np.sort(np.linalg.eigvalsh(h))
    assert e[200] - e[199] == pytest.approx(0.3, abs=0.01)


def test_effective_hamiltonian_stark_ladder():
    h = build_effective_hamiltonian(ModelParams(4, 5.0, 5.0), 0.05, 600).toarray()
    e = np.sort(np.linalg.eigvalsh(h))
    bulk = np.diff(e[250:350])
    assert np.allclose(bulk, 0.05, atol=1e-6)


def test_field_protocol_values():
    sq = FieldProtocol("square", 0.05, 10.0)
    assert sq(-5.0) == 0.0 and sq(-2.0) == 0.05 and sq(0.0) == 0.05 and sq(0.1) == -0.05 and sq(5.0) == -0.05
    assert sq(5.1) == 0.0
    sn = FieldProtocol("sine", 0.05, 10.0)
    assert sn(-2.5) == pytest.approx(0.05 * np.pi / 2)
    assert sn(6.0) == 0.0
    shifted = FieldProtocol("square", 0.05, 10.0, shift=20.0)
    assert shifted(18.0) == 0.05 and shifted(22.0) == -0.05
    assert shifted.breakpoints() == [15.0, 20.0, 25.0]
    with pytest.raises(ValueError):
        FieldProtocol("sine", 0.05, 0.0)
    with pytest.raises(ValueError):
        FieldProtocol("ramp")


def test_config_state():
    b = PairBasis(6)
    psi = config_state(b, [(3, 0), (2, 3)])
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert abs(psi[b.index(3, 0)]) == pytest.approx(2**-0.5)
