import math

import pytest

from bogolab.fock import build_product_basis
from bogolab.manybody import build_hamiltonian
from bogolab.pressure import CellModel, CellSpec


@pytest.fixture(scope="session")
def cell_model():
    return CellModel(CellSpec(seed=0, n_max=4, mu=-0.5))


@pytest.fixture(scope="session")
def small_h(cell_model):
    """Interacting Hamiltonian on (band <= 12) x (complement <= 3)."""
    band = cell_model.band
    basis = build_product_basis(cell_model.kinetic.size, [(band.band, 12), (band.complement, 3)])
    return build_hamiltonian(cell_model.eigs, cell_model.kinetic, cell_model.kernel, basis, -0.5)


TWO_PI = 2 * math.pi
