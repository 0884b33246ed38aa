import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bogolab.oneparticle import (
    MATRIX_CAP,
    RandomPotential,
    build_kinetic,
    constant_potential,
    cutoff_for,
    diagonalize,
    finite_difference_levels,
    ids,
    kinetic_ids,
    potential_fourier,
    potential_matrix,
    sample_potential,
    trace_band_bound_check,
    weyl_constant,
)


def test_weyl_constants():
    assert math.isclose(weyl_constant(1), math.sqrt(2) / math.pi, rel_tol=1e-14)
    assert math.isclose(weyl_constant(2), 1 / (2 * math.pi), rel_tol=1e-14)
    assert math.isclose(weyl_constant(3), math.sqrt(2) / (3 * math.pi**2), rel_tol=1e-14)


@given(st.integers(1, 3), st.integers(1, 4))
def test_kinetic_basis_shape_and_order(d, cut):
    kb = build_kinetic(d, 5.0, cut)
    assert kb.size == (2 * cut + 1) ** d
    assert np.all(np.diff(np.sum(kb.labels**2, axis=1)) >= 0)
    assert np.allclose(kb.energies, 0.5 * np.sum(kb.modes**2, axis=1))
    assert np.all(kb.labels[0] == 0)


def test_kinetic_validation():
    for args in [(4, 1.0, 1), (1, 1.0, 0), (1, -1.0, 1)]:
        with pytest.raises(ValueError):
            build_kinetic(*args)


@given(st.integers(1, 3), st.floats(2.0, 30.0), st.floats(0.05, 3.0))
@settings(max_examples=30, deadline=None)
def test_kinetic_ids_is_a_lattice_count(d, l, e):
    # brute count over a box that certainly contains the sphere
    r = int(l * math.sqrt(2 * e) / (2 * math.pi)) + 2
    grid = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * d, indexing="ij"), -1).reshape(-1, d)
    eps = 0.5 * np.sum((2 * np.pi * grid / l) ** 2, axis=1)
    assert kinetic_ids(d, l, e) == pytest.approx(np.count_nonzero(eps <= e) / l**d, abs=0)


def test_potential_values_and_determinism():
    a = sample_potential(2, 8.0, 1.0, 1.5, 0.3, seed=7)
    b = sample_potential(2, 8.0, 1.0, 1.5, 0.3, seed=7)
    assert a.cell_values.shape == (8, 8)
    assert set(np.unique(a.cell_values)) <= {0.0, 1.5}
    assert np.array_equal(a.cell_values, b.cell_values)
    assert not np.array_equal(a.cell_values, sample_potential(2, 8.0, 1.0, 1.5, 0.3, seed=8).cell_values)


def test_potential_text_roundtrip():
    a = sample_potential(3, 4.0, 1.0, 1.0, 0.5, seed=3)
    b = RandomPotential.from_text(a.to_text())
    assert np.array_equal(a.cell_values, b.cell_values)
    assert (a.seed, a.amplitude, a.side_length) == (b.seed, b.amplitude, b.side_length)


def test_potential_validation():
    with pytest.raises(ValueError):
        sample_potential(1, 4.0, 1.0, 1.0, 1.0, 0)
    with pytest.raises(ValueError):
        sample_potential(1, 4.0, 1.0, -1.0, 0.5, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(-6, 6))
def test_fourier_coefficient_against_midpoint_sum(seed, m):
    pot = sample_potential(1, 2 * math.pi, 2 * math.pi / 8, 1.0, 0.5, seed)
    x = -math.pi + 2 * math.pi * (np.arange(80_000) + 0.5) / 80_000
    ref = np.mean(pot(x) * np.exp(-1j * m * x))
    assert abs(potential_fourier(pot, np.array([[m]]))[0] - ref) < 1e-6
    assert potential_fourier(pot, np.array([[0]]))[0] == pytest.approx(pot.mean(), abs=1e-14)


def test_potential_matrix_hermitian():
    kb = build_kinetic(2, 4.0, 3)
    v = potential_matrix(sample_potential(2, 4.0, 1.0, 1.0, 0.5, 0), kb)
    assert np.max(np.abs(v - v.conj().T)) < 1e-15


def test_constant_potential_shifts_spectrum():
    kb = build_kinetic(1, 7.0, 5)
    eigs = diagonalize(kb, constant_potential(1, 7.0, 0.75))
    assert np.allclose(eigs.eigenvalues, np.sort(kb.energies) + 0.75, atol=1e-12)


def test_eigenvectors_unitary_and_diagonalizing():
    kb = build_kinetic(1, 2 * math.pi, 6)
    eigs = diagonalize(kb, sample_potential(1, 2 * math.pi, 2 * math.pi / 8, 1.0, 0.5, 1))
    u = eigs.eigenvectors
    assert np.allclose(u.conj().T @ u, np.eye(kb.size), atol=1e-12)
    assert np.allclose(u.conj().T @ eigs.one_particle @ u, np.diag(eigs.eigenvalues), atol=1e-11)


def test_plane_waves_match_finite_differences():
    pot = sample_potential(1, 2 * math.pi, 2 * math.pi / 8, 1.0, 0.5, 0)
    eigs = diagonalize(build_kinetic(1, 2 * math.pi, 24), pot)
    fd = finite_difference_levels(pot, grid=4096)
    assert np.max(np.abs(eigs.eigenvalues[:3] - fd)) < 1e-3


def test_matrix_cap():
    kb = build_kinetic(3, 10.0, 8)
    assert kb.size > MATRIX_CAP
    with pytest.raises(ValueError):
        diagonalize(kb, None)


@given(st.floats(0.1, 4.0))
def test_ids_without_potential_is_kinetic_count(e):
    l = 20.0
    kb = build_kinetic(1, l, cutoff_for(1, l, 4.0))
    assert ids(diagonalize(kb, None), e) == pytest.approx(kinetic_ids(1, l, e), abs=1e-15)


def test_ids_monotone_and_positive_potential_lowers_count():
    l = 32.0
    kb = build_kinetic(1, l, cutoff_for(1, l, 6.0))
    pot = sample_potential(1, l, 1.0, 1.0, 0.5, 2)
    eigs = diagonalize(kb, pot)
    es = np.linspace(0.05, 2.0, 40)
    nu = ids(eigs, es)
    assert np.all(np.diff(nu) >= 0)
    # v >= 0 raises every level, so the count can only drop
    assert np.all(nu <= ids(diagonalize(kb, None), es) + 1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 500), st.floats(0.2, 3.0), st.floats(-1.0, 0.5))
def test_trace_band_bound(seed, delta, mu):
    l = 12.0
    kb = build_kinetic(1, l, 6)
    rep = trace_band_bound_check(kb, sample_potential(1, l, 1.0, 1.0, 0.5, seed), delta, mu)
    assert rep.finite_slack >= -1e-12
    assert rep.band_size == np.count_nonzero(kb.energies <= delta)
