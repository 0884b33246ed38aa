import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bogolab.fock import build_basis, build_product_basis, number
from bogolab.manybody import (
    InteractionKernel,
    add_source,
    assemble_h0,
    build_hamiltonian,
    interaction_quads,
    momentum_operator,
    one_body_matrix,
    term_inventory,
)
from bogolab.oneparticle import build_kinetic, diagonalize, sample_potential


def _setup(seed=0, cutoff=1, potential=True):
    l = 2 * math.pi
    kb = build_kinetic(1, l, cutoff)
    pot = sample_potential(1, l, l / 8, 1.0, 0.5, seed) if potential else None
    return kb, diagonalize(kb, pot)


def test_kernel_values():
    k = InteractionKernel(0.5, 1.0)
    assert k(0.0) == pytest.approx(0.5)
    assert k(np.array([[1.0, 1.0]])) == pytest.approx(0.5 * math.exp(-1.0))
    # a single d-vector is one wave vector, not a batch
    assert np.ndim(k(np.array([1.0, 1.0]))) == 0
    assert k(np.array([1.0, 1.0])) == pytest.approx(0.5 * math.exp(-1.0))
    assert k.gamma == 0.5
    tails = [k.lattice_tail(2 * math.pi, 1, m) for m in (1, 2, 4)]
    assert tails[0] > tails[1] > tails[2] >= 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 500))
def test_h0_two_routes_agree(seed):
    kb, eigs = _setup(seed)
    basis = build_basis(kb.size, 4)
    h0 = assemble_h0(eigs, basis, 0.0).parts["h0"].toarray()
    direct = one_body_matrix(basis, eigs.one_particle).toarray()
    assert np.max(np.abs(h0 - direct)) < 1e-12


def test_quads_conserve_momentum_and_coefficients():
    kb, _ = _setup()
    kern = InteractionKernel(0.5, 1.0)
    quads, coef = interaction_quads(kern, kb)
    lab = kb.labels
    assert np.all(lab[quads[:, 0]] + lab[quads[:, 1]] == lab[quads[:, 2]] + lab[quads[:, 3]])
    q = kb.modes[quads[:, 0]] - kb.modes[quads[:, 3]]
    assert np.allclose(coef, kern(q) / (2 * kb.volume))
    assert interaction_quads(InteractionKernel(0.0), kb)[0].shape == (0, 4)


def test_condensate_interaction_energy():
    # all particles in k = 0: <U> = u(0) n (n - 1) / 2V
    kb, eigs = _setup(potential=False)
    basis = build_basis(kb.size, 5)
    kern = InteractionKernel(0.5, 1.0)
    h = build_hamiltonian(eigs, kb, kern, basis, 0.0)
    u = h.parts["interaction"].toarray()
    for n in range(6):
        occ = np.zeros((1, kb.size), dtype=int)
        occ[0, 0] = n
        i = basis.index(occ)[0]
        assert u[i, i].real == pytest.approx(0.5 * n * (n - 1) / (2 * kb.volume), abs=1e-14)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 500), st.floats(-1.0, 1.0))
def test_hamiltonian_hermitian_and_number_conserving(seed, mu):
    kb, eigs = _setup(seed)
    basis = build_product_basis(kb.size, [((0,), 6), ((1, 2), 3)])
    h = build_hamiltonian(eigs, kb, InteractionKernel(), basis, mu)
    m = h.dense()
    raw = h.matrix().toarray()
    assert np.max(np.abs(raw - raw.conj().T)) < 1e-12
    n = number(basis).toarray()
    assert np.max(np.abs(m @ n - n @ m)) < 1e-12


def test_translation_invariance_without_potential():
    kb, eigs = _setup(potential=False, cutoff=2)
    basis = build_basis(kb.size, 3)
    h = build_hamiltonian(eigs, kb, InteractionKernel(), basis, -0.3).dense()
    p = momentum_operator(basis, kb).toarray()
    assert np.max(np.abs(h @ p - p @ h)) < 1e-12
    # a random potential breaks it
    kb2, eigs2 = _setup(seed=3, cutoff=2)
    h2 = build_hamiltonian(eigs2, kb2, InteractionKernel(), basis, -0.3).dense()
    assert np.max(np.abs(h2 @ p - p @ h2)) > 1e-3


def test_mu_enters_through_number():
    kb, eigs = _setup()
    basis = build_basis(kb.size, 3)
    h = build_hamiltonian(eigs, kb, InteractionKernel(), basis, 0.0)
    n = number(basis).toarray()
    assert np.allclose(h.dense(0.4), h.dense(0.0) - 0.4 * n)
    assert np.allclose(h.with_mu(0.4).dense(), h.dense(0.4))


@pytest.mark.parametrize("phase", [0.0, 1.1, 2.5])
def test_source_spectrum_depends_on_modulus_only(phase):
    kb, eigs = _setup()
    basis = build_basis(kb.size, 4)
    h = build_hamiltonian(eigs, kb, InteractionKernel(), basis, -0.5)
    ref = np.linalg.eigvalsh(add_source(h, 0, 0.2).dense())
    hs = add_source(h, 0, 0.2 * np.exp(1j * phase))
    m = hs.matrix().toarray()
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert np.allclose(np.linalg.eigvalsh(hs.dense()), ref, atol=1e-10)
    assert hs.includes["source"] and hs.terms.sources == ((0, complex(0.2 * np.exp(1j * phase))),)


def test_source_guards():
    kb, eigs = _setup()
    h = assemble_h0(eigs, build_basis(kb.size, 2), 0.0)
    assert add_source(h, 0, 0) is h
    with pytest.raises(IndexError):
        add_source(h, 7, 0.1)


def test_term_inventory_is_json(small_h, cell_model):
    inv = term_inventory(small_h, cell_model.kinetic)
    text = json.dumps(inv)
    assert inv["includes"] == {"h0": True, "interaction": True, "source": False}
    assert inv["interaction_quads"] == len(small_h.terms.quads)
    assert inv["dropped_kernel_tail"] > 0
    assert "kernel" in json.loads(text)
