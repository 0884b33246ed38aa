"""One-particle side: plane waves on the periodic box, Bernoulli block
potentials, the Schrodinger eigensystem and integrated densities of states."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

MATRIX_CAP = 4096


def weyl_constant(d: int) -> float:
    """C_d in nu(E) = C_d E^{d/2} for the kinetic energy k^2/2."""
    # volume of the ball of radius sqrt(2E) divided by (2 pi)^d
    return math.pi ** (d / 2) / gamma_fn(d / 2 + 1) * 2 ** (d / 2) / (2 * math.pi) ** d


@dataclass(frozen=True, eq=False)
class KineticBasis:
    dimension: int
    side_length: float
    mode_cutoff: int
    labels: np.ndarray = field(repr=False)  # integer lattice labels n, shape (M, d)
    modes: np.ndarray = field(repr=False)  # wave vectors 2 pi n / l
    energies: np.ndarray = field(repr=False)

    @property
    def volume(self) -> float:
        return self.side_length ** self.dimension

    @property
    def size(self) -> int:
        return len(self.energies)

    def label_index(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(x) for x in n): i for i, n in enumerate(self.labels)}


def build_kinetic(d: int, l: float, cutoff: int) -> KineticBasis:
    """Plane waves with |n_j| <= cutoff, sorted by energy then by label."""
    if d not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if l <= 0:
        raise ValueError("side length must be positive")
    labels = np.array(list(itertools.product(range(-cutoff, cutoff + 1), repeat=d)), dtype=np.int64)
    k = 2 * np.pi * labels / l
    eps = 0.5 * np.sum(k * k, axis=1)
    # integer key keeps the energy ordering exact
    n2 = np.sum(labels * labels, axis=1)
    order = np.lexsort(tuple(labels[:, j] for j in range(d - 1, -1, -1)) + (n2,))
    return KineticBasis(d, float(l), cutoff, labels[order], k[order], eps[order])


def cutoff_for(d: int, l: float, energy: float) -> int:
    """Smallest cutoff whose axis modes reach ``energy``."""
    return max(1, math.ceil(l * math.sqrt(2 * max(energy, 0.0)) / (2 * math.pi)))


@dataclass(frozen=True, eq=False)
class RandomPotential:
    dimension: int
    side_length: float
    cell_size: float
    amplitude: float
    vacancy_probability: float
    seed: int
    cell_values: np.ndarray = field(repr=False)

    @property
    def cells_per_axis(self) -> int:
        return self.cell_values.shape[0]

    def mean(self) -> float:
        return float(self.cell_values.mean())

    def expected_mean(self) -> float:
        return self.amplitude * (1.0 - self.vacancy_probability)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Potential values at points ``x`` of shape (..., d) inside the box."""
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and x.ndim == 1:
            x = x[:, None]
        w = self.side_length / self.cells_per_axis
        idx = np.floor((x + self.side_length / 2) / w).astype(int) % self.cells_per_axis
        return self.cell_values[tuple(idx[..., j] for j in range(self.dimension))]

    def to_text(self) -> str:
        head = f"{self.dimension} {self.side_length!r} {self.cell_size!r} {self.amplitude!r} {self.vacancy_probability!r} {self.seed}"
        return "\n".join([head] + [repr(float(v)) for v in self.cell_values.ravel()]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RandomPotential":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        d, l, cs, b, p, seed = lines[0].split()
        d = int(d)
        vals = np.array([float(v) for v in lines[1:]])
        n = round(len(vals) ** (1 / d))
        if n**d != len(vals):
            raise ValueError("value count is not a perfect power of the dimension")
        return cls(d, float(l), float(cs), float(b), float(p), int(seed), vals.reshape((n,) * d))


def sample_potential(d: int, l: float, cell_size: float, b: float, p: float, seed: int) -> RandomPotential:
    """Piecewise-constant field: each cell is 0 with probability p, else b."""
    if not 0.0 <= p < 1.0:
        raise ValueError("vacancy probability must lie in [0, 1)")
    if b < 0:
        raise ValueError("potential amplitude must be non-negative")
    n = max(1, round(l / cell_size))
    rng = np.random.default_rng(seed)
    vals = np.where(rng.random((n,) * d) < p, 0.0, float(b))
    return RandomPotential(d, float(l), float(cell_size), float(b), float(p), int(seed), vals)


def constant_potential(d: int, l: float, value: float) -> RandomPotential:
    return RandomPotential(d, float(l), float(l), float(value), 0.0, 0, np.full((1,) * d, float(value)))


def _cell_fourier(n_cells: int, l: float, m: np.ndarray) -> np.ndarray:
    """int over cell c of exp(-i 2 pi m x / l) dx, shape (n_cells, len(m))."""
    w = l / n_cells
    starts = -l / 2 + w * np.arange(n_cells)
    q = 2 * np.pi * m / l
    out = np.empty((n_cells, len(m)), dtype=complex)
    zero = m == 0
    out[:, zero] = w
    qz = q[~zero]
    out[:, ~zero] = np.exp(-1j * np.outer(starts, qz)) * (1 - np.exp(-1j * qz * w)) / (1j * qz)
    return out


def potential_fourier(pot: RandomPotential, shifts: np.ndarray) -> np.ndarray:
    """(1/V) int v(x) exp(-i q.x) dx for integer label shifts q = 2 pi m / l."""
    shifts = np.atleast_2d(shifts)
    d = pot.dimension
    n = pot.cells_per_axis
    out = np.zeros(len(shifts), dtype=complex)
    # one factor per axis; contract cell values against the outer product
    facs = [_cell_fourier(n, pot.side_length, shifts[:, j]) for j in range(d)]
    if d == 1:
        out = np.einsum("a,am->m", pot.cell_values, facs[0])
    elif d == 2:
        out = np.einsum("ab,am,bm->m", pot.cell_values, facs[0], facs[1])
    else:
        out = np.einsum("abc,am,bm,cm->m", pot.cell_values, facs[0], facs[1], facs[2])
    return out / pot.side_length**d


def potential_matrix(pot: RandomPotential, basis: KineticBasis) -> np.ndarray:
    """<psi_k | v | psi_k'> in closed form from the cell integrals."""
    if pot.dimension != basis.dimension or not math.isclose(pot.side_length, basis.side_length):
        raise ValueError("potential and kinetic basis live on different boxes")
    diff = basis.labels[:, None, :] - basis.labels[None, :, :]
    flat = diff.reshape(-1, basis.dimension)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    vals = potential_fourier(pot, uniq)
    mat = vals[inv.ravel()].reshape(basis.size, basis.size)
    return 0.5 * (mat + mat.conj().T)


@dataclass(frozen=True, eq=False)
class SchrodingerEigensystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column i = <psi_k | phi_i>
    one_particle: np.ndarray  # h_{kk'} in the plane-wave basis
    volume: float

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs) > np.abs(vecs).max(axis=0) * (1 - 1e-9), axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(ph) / ph)[None, :]


def diagonalize(kinetic: KineticBasis, pot: RandomPotential | None) -> SchrodingerEigensystem:
    """Eigenpairs of h = -Delta/2 + v restricted to the plane-wave basis."""
    if kinetic.size > MATRIX_CAP:
        raise ValueError(f"one-particle matrix of size {kinetic.size} exceeds cap {MATRIX_CAP}")
    h = np.diag(kinetic.energies).astype(complex)
    if pot is not None:
        h = h + potential_matrix(pot, kinetic)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError("one-particle eigensolver did not converge") from exc
    return SchrodingerEigensystem(w, _fix_phases(v), h, kinetic.volume)


def finite_difference_levels(pot: RandomPotential, grid: int = 2048, count: int = 3) -> np.ndarray:
    """Lowest levels of -Delta/2 + v on a periodic 1D grid (cross-check only)."""
    if pot.dimension != 1:
        raise ValueError("finite-difference check is one-dimensional")
    from scipy.sparse import diags
    from scipy.sparse.linalg import eigsh

    l = pot.side_length
    hx = l / grid
    x = -l / 2 + hx * (np.arange(grid) + 0.5)
    v = pot(x)
    main = 1.0 / hx**2 + v
    off = -0.5 / hx**2 * np.ones(grid - 1)
    mat = diags([off, main, off], [-1, 0, 1], format="lil")
    mat[0, grid - 1] = -0.5 / hx**2
    mat[grid - 1, 0] = -0.5 / hx**2
    vals = eigsh(mat.tocsc(), k=count, sigma=-1.0, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def ids(levels, energy, volume: float | None = None):
    """(1/V) #{levels <= E}.  ``levels`` may be an eigensystem or a kinetic basis."""
    if isinstance(levels, SchrodingerEigensystem):
        vals, volume = levels.eigenvalues, levels.volume
    elif isinstance(levels, KineticBasis):
        vals, volume = levels.energies, levels.volume
    else:
        vals = np.asarray(levels)
        if volume is None:
            raise ValueError("volume required for a bare level array")
    vals = np.sort(vals)
    e = np.asarray(energy, dtype=float)
    return np.searchsorted(vals, e, side="right") / volume


def kinetic_ids(d: int, l: float, energy: float) -> float:
    """Exact lattice count for the unbounded plane-wave set (no cutoff)."""
    kb = build_kinetic(d, l, cutoff_for(d, l, energy) + 1)
    return float(ids(kb, energy))


@dataclass
class TraceBandReport:
    lhs: float
    finite_bound: float
    limit_bound: float
    band_size: int

    @property
    def slack(self) -> float:
        return self.limit_bound - self.lhs

    @property
    def finite_slack(self) -> float:
        return self.finite_bound - self.lhs


def trace_band_bound_check(kinetic: KineticBasis, pot: RandomPotential | None, delta: float, mu: float) -> TraceBandReport:
    """(1/V) Tr (h - mu) P_delta against nu(delta) ((delta - mu) + mean v)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    band = kinetic.energies <= delta
    vol = kinetic.volume
    diag_v = np.zeros(kinetic.size)
    if pot is not None:
        diag_v = np.real(np.diag(potential_matrix(pot, kinetic)))
    lhs = float(np.sum(kinetic.energies[band] - mu + diag_v[band]) / vol)
    nu_l = band.sum() / vol
    mean_v = pot.mean() if pot is not None else 0.0
    exp_v = pot.expected_mean() if pot is not None else 0.0
    nu0 = weyl_constant(kinetic.dimension) * delta ** (kinetic.dimension / 2)
    return TraceBandReport(
        lhs=lhs,
        finite_bound=float(nu_l * ((delta - mu) + mean_v)),
        limit_bound=float(nu0 * ((delta - mu) + exp_v)),
        band_size=int(band.sum()),
    )
