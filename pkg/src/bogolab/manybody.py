"""Second-quantized Hamiltonians on truncated Fock spaces.

The Hamiltonian keeps two representations side by side: the assembled sparse
matrix on a basis, and the list of normal-ordered ladder monomials it was
built from.  The monomial list is what the c-number substitution works on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .fock import BosonOperator, OccupationBasis, mode_change, monomial, number
from .oneparticle import KineticBasis, SchrodingerEigensystem


@dataclass(frozen=True)
class InteractionKernel:
    """Gaussian pair kernel u_hat(q) = u0 exp(-q^2 sigma^2 / 2)."""

    u0: float = 0.5
    sigma: float = 1.0

    def __call__(self, q):
        """``q`` is a wave vector of shape (..., d); a bare scalar is read as |q|."""
        q = np.asarray(q, dtype=float)
        q2 = np.sum(q * q, axis=-1) if q.ndim else q * q
        return self.u0 * np.exp(-0.5 * q2 * self.sigma**2)

    @property
    def gamma(self) -> float:
        return abs(self.u0)

    def lattice_tail(self, l: float, d: int, max_label: int) -> float:
        """Sum of |u_hat| over lattice q with some |n_j| > max_label."""
        n = np.arange(-4000, 4001)
        w = np.exp(-0.5 * (2 * np.pi * n / l) ** 2 * self.sigma**2)
        inside = w[np.abs(n) <= max_label].sum()
        return float(abs(self.u0) * (w.sum() ** d - inside**d))


ZERO_KERNEL = InteractionKernel(u0=0.0)


@dataclass(frozen=True, eq=False)
class HamiltonianTerms:
    """Normal-ordered monomials of H, independent of any Fock basis.

    one_body[k, k'] multiplies a*_k a_k' (chemical potential excluded);
    quads[r] = (p1, p2, p3, p4) multiplies quad_coeffs[r] a*_p1 a*_p2 a_p3 a_p4;
    sources hold (mode, eta) for sqrt(V) (conj(eta) a + eta a*).
    """

    one_body: np.ndarray
    quads: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))
    quad_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    sources: tuple[tuple[int, complex], ...] = ()
    volume: float = 1.0
    momenta: np.ndarray | None = None
    kernel: InteractionKernel = ZERO_KERNEL

    @property
    def mode_count(self) -> int:
        return self.one_body.shape[0]


class ManyBodyHamiltonian:
    """H(mu) = H0 - mu N + U + source, stored by parts."""

    def __init__(self, basis: OccupationBasis, terms: HamiltonianTerms, mu: float, parts: dict):
        self.basis = basis
        self.terms = terms
        self.mu = float(mu)
        self.parts = parts

    @property
    def includes(self) -> dict[str, bool]:
        return {
            "h0": "h0" in self.parts,
            "interaction": "interaction" in self.parts,
            "source": "source" in self.parts,
        }

    def matrix(self, mu: float | None = None) -> sp.csr_matrix:
        mu = self.mu if mu is None else mu
        out = -mu * self.parts["number"]
        for key in ("h0", "interaction", "source"):
            if key in self.parts:
                out = out + self.parts[key]
        return sp.csr_matrix(out)

    def dense(self, mu: float | None = None) -> np.ndarray:
        m = self.matrix(mu).toarray()
        return 0.5 * (m + m.conj().T)

    def operator(self, mu: float | None = None) -> BosonOperator:
        return BosonOperator(self.basis, self.matrix(mu), hermitian=True)

    def with_mu(self, mu: float) -> "ManyBodyHamiltonian":
        return ManyBodyHamiltonian(self.basis, self.terms, mu, dict(self.parts))


def assemble_h0(eigs: SchrodingerEigensystem, basis: OccupationBasis, mu: float) -> ManyBodyHamiltonian:
    """sum_i E_i a*(phi_i) a(phi_i) - mu N written with plane-wave ladders."""
    if basis.mode_count != eigs.size:
        raise ValueError(f"basis has {basis.mode_count} modes, eigensystem {eigs.size}")
    rot = mode_change(basis, eigs.eigenvectors)
    h0 = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for e, a, ad in zip(eigs.eigenvalues, rot.annihilate, rot.create):
        h0 = h0 + e * (ad.matrix @ a.matrix)
    terms = HamiltonianTerms(one_body=np.array(eigs.one_particle, dtype=complex), volume=eigs.volume)
    parts = {"h0": sp.csr_matrix(h0), "number": number(basis).matrix}
    return ManyBodyHamiltonian(basis, terms, mu, parts)


def one_body_matrix(basis: OccupationBasis, h: np.ndarray) -> sp.csr_matrix:
    """sum_{kk'} h_{kk'} a*_k a_k' (direct route, used as a cross-check)."""
    out = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for k, kp in zip(*np.nonzero(np.abs(h) > 1e-15)):
        out = out + h[k, kp] * monomial(basis, create=(k,), annihilate=(kp,))
    return out


def interaction_quads(kernel: InteractionKernel, kinetic: KineticBasis) -> tuple[np.ndarray, np.ndarray]:
    """All (k+q, k'-q, k', k) inside the basis with coefficient u_hat(q) / 2V."""
    labels = kinetic.labels
    m = kinetic.size
    if kernel.u0 == 0.0:
        return np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=complex)
    pairs = np.array([(a, b) for a in range(m) for b in range(m)], dtype=np.int64)
    tot = labels[pairs[:, 0]] + labels[pairs[:, 1]]
    buckets: dict[tuple, list[int]] = {}
    for r, t in enumerate(map(tuple, tot)):
        buckets.setdefault(t, []).append(r)
    rows = []
    for idx in buckets.values():
        for i in idx:  # created pair (p1, p2)
            for j in idx:  # annihilated pair (p3, p4)
                rows.append((*pairs[i], *pairs[j]))
    quads = np.array(rows, dtype=np.int64).reshape(-1, 4)
    q = kinetic.modes[quads[:, 0]] - kinetic.modes[quads[:, 3]]
    coeffs = kernel(q).astype(complex) / (2 * kinetic.volume)
    return quads, coeffs


def assemble_interaction(kernel: InteractionKernel, basis: OccupationBasis, kinetic: KineticBasis) -> BosonOperator:
    """U = (1/2V) sum u_hat(q) a*_{k+q} a*_{k'-q} a_k' a_k, momentum sums kept inside the basis."""
    quads, coeffs = interaction_quads(kernel, kinetic)
    return BosonOperator(basis, _quad_matrix(basis, quads, coeffs), hermitian=True)


def _quad_matrix(basis: OccupationBasis, quads: np.ndarray, coeffs: np.ndarray) -> sp.csr_matrix:
    out = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for (p1, p2, p3, p4), c in zip(quads, coeffs):
        if c != 0:
            out = out + c * monomial(basis, create=(p1, p2), annihilate=(p3, p4))
    return out


def add_interaction(h: ManyBodyHamiltonian, kernel: InteractionKernel, kinetic: KineticBasis) -> ManyBodyHamiltonian:
    quads, coeffs = interaction_quads(kernel, kinetic)
    terms = replace(h.terms, quads=quads, quad_coeffs=coeffs, momenta=kinetic.modes, kernel=kernel)
    parts = dict(h.parts)
    parts["interaction"] = _quad_matrix(h.basis, quads, coeffs)
    return ManyBodyHamiltonian(h.basis, terms, h.mu, parts)


def add_source(h: ManyBodyHamiltonian, mode: int, eta: complex, volume: float | None = None) -> ManyBodyHamiltonian:
    """Add sqrt(V) (conj(eta) a_mode + eta a*_mode)."""
    if not 0 <= mode < h.basis.mode_count:
        raise IndexError("source mode outside basis")
    if eta == 0:
        return h
    vol = h.terms.volume if volume is None else volume
    a = monomial(h.basis, annihilate=(mode,))
    src = np.sqrt(vol) * (np.conj(eta) * a + eta * a.conj().T)
    parts = dict(h.parts)
    parts["source"] = parts.get("source", 0) + src
    terms = replace(h.terms, sources=h.terms.sources + ((int(mode), complex(eta)),), volume=vol)
    return ManyBodyHamiltonian(h.basis, terms, h.mu, parts)


def build_hamiltonian(
    eigs: SchrodingerEigensystem,
    kinetic: KineticBasis,
    kernel: InteractionKernel,
    basis: OccupationBasis,
    mu: float,
) -> ManyBodyHamiltonian:
    h = assemble_h0(eigs, basis, mu)
    h = add_interaction(h, kernel, kinetic)
    return h


def momentum_operator(basis: OccupationBasis, kinetic: KineticBasis, axis: int = 0) -> sp.csr_matrix:
    diag = basis.states @ kinetic.modes[:, axis]
    return sp.diags(diag.astype(complex), format="csr")


def term_inventory(h: ManyBodyHamiltonian, kinetic: KineticBasis | None = None) -> dict:
    """JSON-ready summary of which terms the Hamiltonian carries."""
    t = h.terms
    inv = {
        "modes": int(t.mode_count),
        "basis_states": int(h.basis.size),
        "groups": [[list(m), c] for m, c in h.basis.groups],
        "mu": h.mu,
        "volume": t.volume,
        "one_body_nonzero": int(np.count_nonzero(np.abs(t.one_body) > 1e-15)),
        "interaction_quads": int(len(t.quads)),
        "kernel": {"u0": t.kernel.u0, "sigma": t.kernel.sigma, "gamma": t.kernel.gamma},
        "sources": [[m, [e.real, e.imag]] for m, e in t.sources],
        "includes": h.includes,
    }
    if kinetic is not None and t.kernel.u0 != 0:
        inv["dropped_kernel_tail"] = t.kernel.lattice_tail(kinetic.side_length, kinetic.dimension, 2 * kinetic.mode_cutoff)
    return inv
