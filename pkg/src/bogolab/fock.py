"""Truncated bosonic Fock spaces in the occupation-number basis.

States are occupation vectors ``n = (n_1, ..., n_M)``.  Truncation is by the
total particle number of *mode groups*: the plain basis has a single group
holding every mode, while product bases (used for the c-number substitution)
give the substituted band and its complement independent caps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_STATE_CAP = 20_000


class BasisTooLarge(ValueError):
    pass


def _enumerate(caps_by_mode: list[int], group_of: list[int], group_caps: list[int]):
    """Lexicographic enumeration of occupations honouring the group caps."""
    m = len(caps_by_mode)
    out: list[tuple[int, ...]] = []
    used = [0] * len(group_caps)
    cur = [0] * m

    def rec(j: int) -> None:
        if j == m:
            out.append(tuple(cur))
            return
        g = group_of[j]
        room = group_caps[g] - used[g]
        for n in range(room + 1):
            cur[j] = n
            used[g] += n
            rec(j + 1)
            used[g] -= n
        cur[j] = 0

    rec(0)
    return out


@dataclass(frozen=True, eq=False)
class OccupationBasis:
    """Ordered occupation basis with an O(1)-style code lookup.

    ``groups`` is a tuple of ``(modes, cap)`` pairs partitioning the modes;
    a state belongs to the basis when every group's total is within its cap.
    """

    mode_count: int
    max_total: int
    groups: tuple[tuple[tuple[int, ...], int], ...]
    states: np.ndarray = field(repr=False)
    _codes: np.ndarray = field(repr=False)
    _radix: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def encode(self, occ: np.ndarray) -> np.ndarray:
        return np.asarray(occ, dtype=np.int64) @ self._radix

    def index(self, occ) -> np.ndarray:
        """Row indices of occupation vectors; -1 where a vector is not a basis state."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        codes = self.encode(occ)
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, len(self._codes) - 1)
        ok = self._codes[pos] == codes
        ok &= np.all(occ >= 0, axis=1)
        return np.where(ok, pos, -1)

    def contains(self, occ: np.ndarray) -> np.ndarray:
        occ = np.atleast_2d(occ)
        ok = np.all(occ >= 0, axis=1)
        for modes, cap in self.groups:
            ok &= occ[:, list(modes)].sum(axis=1) <= cap
        return ok

    def group_totals(self, g: int) -> np.ndarray:
        modes, _ = self.groups[g]
        return self.states[:, list(modes)].sum(axis=1)


def _make_basis(mode_count: int, groups, cap_states: int) -> OccupationBasis:
    group_of = [0] * mode_count
    caps = [c for _, c in groups]
    for g, (modes, _) in enumerate(groups):
        for j in modes:
            group_of[j] = g
    count = 1
    for modes, cap in groups:
        count *= comb(len(modes) + cap, len(modes))
    if count > cap_states:
        raise BasisTooLarge(f"basis would hold {count} states (cap {cap_states})")
    per_mode = [caps[group_of[j]] for j in range(mode_count)]
    states = np.array(_enumerate(per_mode, group_of, caps), dtype=np.int64)
    states = states.reshape(-1, mode_count)
    base = max(caps) + 1
    radix = base ** np.arange(mode_count - 1, -1, -1, dtype=np.int64)
    codes = states @ radix
    return OccupationBasis(
        mode_count=mode_count,
        max_total=max(caps),
        groups=tuple((tuple(m), int(c)) for m, c in groups),
        states=states,
        _codes=codes,
        _radix=radix,
    )


def build_basis(mode_count: int, max_total: int, cap_states: int = DEFAULT_STATE_CAP) -> OccupationBasis:
    """All occupations of ``mode_count`` modes with at most ``max_total`` particles.

    >>> build_basis(2, 2).states.tolist()
    [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0]]
    """
    if mode_count < 1 or max_total < 0:
        raise ValueError("need mode_count >= 1 and max_total >= 0")
    return _make_basis(mode_count, [(tuple(range(mode_count)), max_total)], cap_states)


def build_product_basis(
    mode_count: int,
    groups: Sequence[tuple[Sequence[int], int]],
    cap_states: int = DEFAULT_STATE_CAP,
) -> OccupationBasis:
    """Basis truncated separately per mode group (e.g. band modes vs the rest)."""
    seen = sorted(j for modes, _ in groups for j in modes)
    if seen != list(range(mode_count)):
        raise ValueError("groups must partition the modes")
    groups = [(tuple(m), int(c)) for m, c in groups if len(m)]
    return _make_basis(mode_count, groups, cap_states)


class BosonOperator:
    """Sparse operator on a truncated Fock basis."""

    __array_priority__ = 100

    def __init__(self, basis: OccupationBasis, matrix, hermitian: bool = False):
        self.basis = basis
        m = sp.csr_matrix(matrix, dtype=complex)
        m.data[np.abs(m.data) < 1e-15] = 0.0
        m.eliminate_zeros()
        if m.shape != (basis.size, basis.size):
            raise ValueError("operator shape does not match basis")
        self.matrix = m
        self.hermitian = hermitian
        if hermitian:
            dev = abs(m - m.conj().T).max() if m.nnz else 0.0
            if dev > 1e-12:
                raise ValueError(f"operator tagged hermitian deviates by {dev:.3g}")

    def dag(self) -> "BosonOperator":
        return BosonOperator(self.basis, self.matrix.conj().T, self.hermitian)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, BosonOperator):
            return BosonOperator(self.basis, self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "BosonOperator") -> "BosonOperator":
        return BosonOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: "BosonOperator") -> "BosonOperator":
        return BosonOperator(self.basis, self.matrix - other.matrix)

    def __mul__(self, z) -> "BosonOperator":
        return BosonOperator(self.basis, self.matrix * z)

    __rmul__ = __mul__

    def __neg__(self) -> "BosonOperator":
        return BosonOperator(self.basis, -self.matrix, self.hermitian)


def commutator(a: BosonOperator, b: BosonOperator) -> BosonOperator:
    return a @ b - b @ a


def monomial(basis: OccupationBasis, create: Sequence[int] = (), annihilate: Sequence[int] = ()) -> sp.csr_matrix:
    """Matrix of ``a*_{c1} a*_{c2} ... a_{a1} a_{a2} ...`` (annihilators act right-to-left).

    Every intermediate state outside the basis is dropped, so for normal-ordered
    monomials the result equals the compression ``P A P`` onto the basis.
    """
    occ = basis.states.copy()
    amp = np.ones(len(occ))
    live = np.ones(len(occ), dtype=bool)
    for j in reversed(list(annihilate)):
        amp *= np.sqrt(np.maximum(occ[:, j], 0))
        live &= occ[:, j] > 0
        occ[:, j] -= 1
    for j in reversed(list(create)):
        occ[:, j] += 1
        amp *= np.sqrt(np.maximum(occ[:, j], 0))
    live &= basis.contains(occ)
    cols = np.nonzero(live)[0]
    rows = basis.index(occ[cols])
    keep = rows >= 0
    n = basis.size
    return sp.csr_matrix((amp[cols][keep], (rows[keep], cols[keep])), shape=(n, n), dtype=complex)


def ladder(basis: OccupationBasis, mode: int, kind: str) -> BosonOperator:
    """Annihilation (``kind="annihilate"``) or creation operator on one mode."""
    if not 0 <= mode < basis.mode_count:
        raise IndexError(f"mode {mode} out of range for {basis.mode_count} modes")
    if kind == "annihilate":
        return BosonOperator(basis, monomial(basis, annihilate=(mode,)))
    if kind == "create":
        return BosonOperator(basis, monomial(basis, create=(mode,)))
    raise ValueError(f"unknown ladder kind {kind!r}")


def number(basis: OccupationBasis, mode: int | None = None) -> BosonOperator:
    """Number operator of one mode, or the total number when ``mode`` is None."""
    if mode is None:
        diag = basis.states.sum(axis=1)
    else:
        diag = basis.states[:, mode]
    return BosonOperator(basis, sp.diags(diag.astype(complex)), hermitian=True)


@dataclass
class RotatedLadders:
    annihilate: list[BosonOperator]
    create: list[BosonOperator]


def mode_change(basis: OccupationBasis, unitary: np.ndarray, tol: float = 1e-10) -> RotatedLadders:
    """Ladder operators of the rotated one-particle basis.

    Column ``i`` of ``unitary`` holds ``<psi_k|phi_i>``; the new annihilator is
    ``a(phi_i) = sum_k conj(<psi_k|phi_i>) a_k``.
    """
    u = np.asarray(unitary, dtype=complex)
    m = basis.mode_count
    if u.shape != (m, m):
        raise ValueError(f"unitary must be {m}x{m}")
    if np.max(np.abs(u.conj().T @ u - np.eye(m))) > tol:
        raise ValueError("columns are not orthonormal")
    lowers = [monomial(basis, annihilate=(k,)) for k in range(m)]
    ann = []
    for i in range(m):
        mat = sp.csr_matrix((basis.size, basis.size), dtype=complex)
        for k in range(m):
            if u[k, i] != 0:
                mat = mat + np.conj(u[k, i]) * lowers[k]
        ann.append(BosonOperator(basis, mat))
    return RotatedLadders(annihilate=ann, create=[a.dag() for a in ann])
