"""c-number substitution over a low-energy band of plane-wave modes.

Every normal-ordered monomial of H is split into its band part and its
complement part.  The lower symbol replaces band ladders by c and conj(c);
the upper symbol uses the anti-normal rule per band mode,

    (a*^m a^n)^up = sum_j (-1)^j j! C(m,j) C(n,j) conj(c)^(m-j) c^(n-j).

Both are stored as a list of (coefficient, exponents, complement operator)
triples, so evaluating at a point is a weighted sum of fixed matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from .fock import OccupationBasis, build_basis, monomial
from .manybody import HamiltonianTerms, ManyBodyHamiltonian
from .oneparticle import KineticBasis, kinetic_ids

FAMILY_COUNT = 21


class CoherentTailError(ValueError):
    pass


class QuadratureTailError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModeBand:
    delta: float
    band: tuple[int, ...]
    complement: tuple[int, ...]
    nu_delta: float
    nu_2delta: float
    volume: float

    @property
    def n_delta(self) -> int:
        return len(self.band)


def build_band(kinetic: KineticBasis, delta: float) -> ModeBand:
    """Modes with k^2/2 <= delta; the band keeps the kinetic (energy) order."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    inside = kinetic.energies <= delta * (1 + 1e-12)
    band = tuple(int(i) for i in np.nonzero(inside)[0])
    comp = tuple(int(i) for i in np.nonzero(~inside)[0])
    d, l = kinetic.dimension, kinetic.side_length
    return ModeBand(float(delta), band, comp, kinetic_ids(d, l, delta), kinetic_ids(d, l, 2 * delta), kinetic.volume)


def band_from_modes(kinetic: KineticBasis, modes) -> ModeBand:
    """Band made of the given mode indices; may split a degenerate shell.

    Only the symbol algebra uses such a band; its delta is the largest
    member energy and nu_delta is the member count per volume.
    """
    modes = tuple(sorted(int(k) for k in modes))
    if not modes or len(set(modes)) != len(modes) or modes[-1] >= kinetic.size or modes[0] < 0:
        raise ValueError("band modes must be distinct indices of the kinetic basis")
    comp = tuple(k for k in range(kinetic.size) if k not in modes)
    delta = float(max(kinetic.energies[list(modes)]))
    d, l = kinetic.dimension, kinetic.side_length
    return ModeBand(delta, modes, comp, len(modes) / kinetic.volume, kinetic_ids(d, l, 2 * delta), kinetic.volume)


@dataclass(frozen=True)
class CoherentPoint:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        if not np.all(np.isfinite(a)):
            raise ValueError("coherent amplitudes must be finite")
        object.__setattr__(self, "amplitudes", a)

    @property
    def size(self) -> int:
        return len(self.amplitudes)

    @classmethod
    def from_real(cls, x) -> "CoherentPoint":
        x = np.asarray(x, dtype=float)
        return cls(x[0::2] + 1j * x[1::2])

    def to_real(self) -> np.ndarray:
        out = np.empty(2 * self.size)
        out[0::2] = self.amplitudes.real
        out[1::2] = self.amplitudes.imag
        return out

    def gauge_fixed(self) -> "CoherentPoint":
        """Rotate the global phase so the first nonzero amplitude is real and >= 0."""
        a = self.amplitudes
        nz = np.nonzero(np.abs(a) > 1e-12)[0]
        if len(nz) == 0:
            return self
        z = a[nz[0]]
        return CoherentPoint(a * (abs(z) / z))


def coherent_vector(basis: OccupationBasis, point: CoherentPoint, tail_tol: float | None = 1e-10) -> np.ndarray:
    """prod_k exp(-|c_k|^2/2 + c_k a*_k)|0> on a band basis, renormalized after truncation."""
    c = point.amplitudes
    if len(c) != basis.mode_count:
        raise ValueError("point dimension does not match the band basis")
    if tail_tol is not None:
        for modes, cap in basis.groups:
            for j in modes:
                tail = poisson.sf(cap, abs(c[j]) ** 2)
                if tail > tail_tol:
                    raise CoherentTailError(f"mode {j}: tail mass {tail:.2e} beyond cap {cap}")
    n = basis.states
    logfact = np.array([math.lgamma(k + 1) for k in range(int(n.max(initial=0)) + 1)])
    amp = np.ones(len(n), dtype=complex)
    for j, cj in enumerate(c):
        nj = n[:, j]
        if cj == 0:
            amp *= nj == 0
        else:
            amp *= np.exp(nj * np.log(cj) - 0.5 * logfact[nj])
    amp *= np.exp(-0.5 * np.sum(np.abs(c) ** 2))
    return amp / np.linalg.norm(amp)


def _anti_normal(m: int, n: int):
    """(coefficient, m - j, n - j) for the single-mode upper symbol of a*^m a^n."""
    return [((-1) ** j * math.factorial(j) * math.comb(m, j) * math.comb(n, j), m - j, n - j) for j in range(min(m, n) + 1)]


def one_body_family(k_in: bool, kp_in: bool, diagonal: bool) -> int:
    if k_in and kp_in:
        return 1
    if k_in:
        return 3
    if kp_in:
        return 4
    return 2 if diagonal else 5


def interaction_family(p1_in: bool, p2_in: bool, p3_in: bool, p4_in: bool) -> int:
    """Family 6..21 from band membership of (k, k') = (p4, p3) and (k+q, k'-q) = (p1, p2)."""
    outer = [(True, True), (True, False), (False, True), (False, False)].index((p4_in, p3_in))
    inner = [(False, False), (True, False), (False, True), (True, True)].index((p1_in, p2_in))
    return 6 + 4 * outer + inner


@dataclass
class KappaOperator:
    """kappa = constant + sum_k weights_k |c_k|^2 + sum_j perp_weights_j a*_j a_j."""

    constant: float
    c_weights: np.ndarray
    perp_weights: np.ndarray
    perp_number: list = field(repr=False, default_factory=list)

    def scalar(self, point: CoherentPoint) -> float:
        return float(self.constant + self.c_weights @ np.abs(point.amplitudes) ** 2)

    def operator_part(self) -> np.ndarray:
        if not self.perp_number:
            return np.zeros((1, 1))
        return sum(w * nj for w, nj in zip(self.perp_weights, self.perp_number))

    def matrix(self, point: CoherentPoint) -> np.ndarray:
        op = self.operator_part()
        return self.scalar(point) * np.eye(op.shape[0]) + op


@dataclass
class SymbolHamiltonians:
    h_low: np.ndarray
    kappa: np.ndarray

    @property
    def h_up(self) -> np.ndarray:
        return self.h_low + self.kappa


class SymbolExpansion:
    """Lower and upper symbols of a Hamiltonian over a band, at mu = 0.

    The chemical potential enters through the number-operator shift
    H(mu) = H(0) - mu N, whose symbols are sum |c|^2 + N_perp (lower) and
    sum (|c|^2 - 1) + N_perp (upper).
    """

    def __init__(self, terms: HamiltonianTerms, band: ModeBand, perp_cap: int, cap_states: int = 20_000):
        self.terms = terms
        self.band = band
        self.perp_cap = int(perp_cap)
        nb = band.n_delta
        bpos = {k: i for i, k in enumerate(band.band)}
        ppos = {k: i for i, k in enumerate(band.complement)}
        self.perp_basis = build_basis(len(band.complement), perp_cap, cap_states) if band.complement else None

        keys: dict[tuple, int] = {}
        low_rows, up_rows = [], []

        def add(coef, creators, annihilators, family):
            m = np.zeros(nb, dtype=np.int64)
            n = np.zeros(nb, dtype=np.int64)
            pc, pa = [], []
            for k in creators:
                if k in bpos:
                    m[bpos[k]] += 1
                else:
                    pc.append(ppos[k])
            for k in annihilators:
                if k in bpos:
                    n[bpos[k]] += 1
                else:
                    pa.append(ppos[k])
            key = (tuple(pc), tuple(pa))
            kid = keys.setdefault(key, len(keys))
            low_rows.append((coef, m, n, kid, family))
            # per-mode anti-normal expansion, multiplied out over the band
            expanded = [(coef, m.copy(), n.copy())]
            for b in range(nb):
                if m[b] and n[b]:
                    nxt = []
                    for w, mm, nn in expanded:
                        for cj, mj, nj in _anti_normal(int(m[b]), int(n[b])):
                            m2, n2 = mm.copy(), nn.copy()
                            m2[b], n2[b] = mj, nj
                            nxt.append((w * cj, m2, n2))
                    expanded = nxt
            for w, mm, nn in expanded:
                up_rows.append((w, mm, nn, kid, family))

        h1 = terms.one_body
        for k, kp in zip(*np.nonzero(np.abs(h1) > 1e-15)):
            add(h1[k, kp], (k,), (kp,), one_body_family(k in bpos, kp in bpos, k == kp))
        for (p1, p2, p3, p4), c in zip(terms.quads, terms.quad_coeffs):
            if c != 0:
                add(c, (p1, p2), (p3, p4), interaction_family(p1 in bpos, p2 in bpos, p3 in bpos, p4 in bpos))
        vol = terms.volume
        for mode, eta in terms.sources:
            add(math.sqrt(vol) * eta, (mode,), (), 0)
            add(math.sqrt(vol) * np.conj(eta), (), (mode,), 0)

        self.keys = list(keys)
        self.low = self._pack(low_rows)
        self.up = self._pack(up_rows)
        dim = self.perp_dim
        ops = np.zeros((len(self.keys), dim, dim), dtype=complex)
        for key, kid in keys.items():
            if self.perp_basis is None:
                ops[kid] = 1.0
            else:
                ops[kid] = monomial(self.perp_basis, create=key[0], annihilate=key[1]).toarray()
        self.ops = ops
        self.perp_number_diag = (
            self.perp_basis.states.sum(axis=1).astype(float) if self.perp_basis is not None else np.zeros(1)
        )

    @staticmethod
    def _pack(rows):
        if not rows:
            return {"coef": np.zeros(0, complex), "m": np.zeros((0, 0), int), "n": np.zeros((0, 0), int),
                    "key": np.zeros(0, int), "family": np.zeros(0, int)}
        coef, m, n, key, fam = zip(*rows)
        return {"coef": np.array(coef, dtype=complex), "m": np.array(m), "n": np.array(n),
                "key": np.array(key), "family": np.array(fam)}

    @property
    def perp_dim(self) -> int:
        return 1 if self.perp_basis is None else self.perp_basis.size

    def _weights(self, table, c: np.ndarray, mask=None) -> np.ndarray:
        """Per-key scalar weights for a batch of points c of shape (P, n_delta)."""
        c = np.atleast_2d(c)
        coef = table["coef"]
        if mask is not None:
            coef = np.where(mask, coef, 0)
        if table["m"].shape[1]:
            mono = np.prod(np.conj(c)[:, None, :] ** table["m"][None] * c[:, None, :] ** table["n"][None], axis=2)
        else:
            mono = np.ones((len(c), len(coef)))
        vals = mono * coef[None, :]
        out = np.zeros((len(c), len(self.keys)), dtype=complex)
        for p in range(len(c)):
            out[p] = np.bincount(table["key"], weights=vals[p].real, minlength=len(self.keys)) + 1j * np.bincount(
                table["key"], weights=vals[p].imag, minlength=len(self.keys)
            )
        return out

    def _assemble(self, table, c, mu, upper: bool, mask=None) -> np.ndarray:
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        w = self._weights(table, c, mask)
        h = np.einsum("pk,kij->pij", w, self.ops)
        if mu:
            shift = np.sum(np.abs(c) ** 2, axis=1) - (self.band.n_delta if upper else 0)
            h = h - mu * (shift[:, None, None] * np.eye(self.perp_dim) + np.diag(self.perp_number_diag)[None])
        return 0.5 * (h + np.conj(np.swapaxes(h, 1, 2)))

    def lower(self, point, mu: float = 0.0) -> np.ndarray:
        c = point.amplitudes if isinstance(point, CoherentPoint) else point
        return self._assemble(self.low, c, mu, upper=False)[0]

    def upper(self, point, mu: float = 0.0) -> np.ndarray:
        c = point.amplitudes if isinstance(point, CoherentPoint) else point
        return self._assemble(self.up, c, mu, upper=True)[0]

    def lower_batch(self, c: np.ndarray, mu: float = 0.0) -> np.ndarray:
        return self._assemble(self.low, c, mu, upper=False)

    def upper_batch(self, c: np.ndarray, mu: float = 0.0) -> np.ndarray:
        return self._assemble(self.up, c, mu, upper=True)

    def lower_family(self, point: CoherentPoint, family: int) -> np.ndarray:
        """Contribution of one term family (0 = source, 1..21) to the lower symbol, mu = 0."""
        mask = self.low["family"] == family
        w = self._weights(self.low, point.amplitudes, mask)[0]
        return np.einsum("k,kij->ij", w, self.ops)

    def families_present(self) -> set[int]:
        return set(int(f) for f in self.low["family"])

    def symbols(self, point: CoherentPoint, mu: float) -> SymbolHamiltonians:
        lo = self.lower(point, mu)
        return SymbolHamiltonians(lo, self.upper(point, mu) - lo)

    def kappa(self, mu: float) -> KappaOperator:
        return kappa_from_terms(self.terms, self.band, mu, self.perp_number_ops())

    def perp_number_ops(self) -> list[np.ndarray]:
        if self.perp_basis is None:
            return []
        return [np.diag(self.perp_basis.states[:, j].astype(float)) for j in range(self.perp_basis.mode_count)]


def symbol_expansion(h: ManyBodyHamiltonian, band: ModeBand, perp_cap: int | None = None) -> SymbolExpansion:
    cap = perp_cap if perp_cap is not None else _complement_cap(h, band)
    return SymbolExpansion(h.terms, band, cap)


def _complement_cap(h: ManyBodyHamiltonian, band: ModeBand) -> int:
    comp = set(band.complement)
    for modes, cap in h.basis.groups:
        if comp and comp <= set(modes):
            return cap
    return h.basis.max_total


def lower_symbol_hamiltonian(h: ManyBodyHamiltonian, band: ModeBand, point: CoherentPoint, perp_cap: int | None = None) -> np.ndarray:
    """Operator on the complement Fock factor with band ladders replaced by c-numbers."""
    return symbol_expansion(h, band, perp_cap).lower(point, h.mu)


def kappa(h: ManyBodyHamiltonian, band: ModeBand, perp_cap: int | None = None) -> KappaOperator:
    """Closed form of H_up - H_low at the Hamiltonian's chemical potential."""
    return symbol_expansion(h, band, perp_cap).kappa(h.mu)


def kappa_from_terms(terms: HamiltonianTerms, band: ModeBand, mu: float, perp_number: list) -> KappaOperator:
    """H_up - H_low term by term: only same-mode band pairs contribute.

    Band one-body diagonals lose (h_kk - mu); band pairs and band-complement
    pairs of the interaction give the scalar, |c|^2 and a*_j a_j parts.
    """
    kern = terms.kernel
    vol = terms.volume
    B = list(band.band)
    C = list(band.complement)
    if kern.u0 and terms.momenta is None:
        raise ValueError("interaction momenta not recorded")
    u0 = float(kern(np.zeros(terms.momenta.shape[1]))) if kern.u0 else 0.0

    def u(i, j):
        return float(kern(terms.momenta[i] - terms.momenta[j])) if kern.u0 else 0.0

    diag = np.real(np.diag(terms.one_body))
    const = -sum(diag[k] - mu for k in B)
    const += (2 * len(B) * u0 + sum(u0 + u(k, kp) for k in B for kp in B if k != kp)) / (2 * vol)
    cw = np.array([-(4 * u0 + 2 * sum(u0 + u(k, kp) for kp in B if kp != k)) / (2 * vol) for k in B])
    pw = np.array([-sum(u0 + u(k, j) for k in B) / vol for j in C])
    return KappaOperator(float(const), cw, pw, perp_number)


@dataclass
class KappaBoundReport:
    scalar: float  # c-dependent scalar part of -kappa
    perp_weight_max: float  # largest coefficient of a*_j a_j in -kappa
    band_count_scalar: float
    band_count_weight: float
    corrected_scalar: float
    corrected_weight: float

    @property
    def band_count_holds(self) -> bool:
        return self.scalar <= self.band_count_scalar + 1e-12 and self.perp_weight_max <= self.band_count_weight + 1e-12

    @property
    def corrected_holds(self) -> bool:
        return self.scalar <= self.corrected_scalar + 1e-12 and self.perp_weight_max <= self.corrected_weight + 1e-12


def kappa_bound_check(kap: KappaOperator, band: ModeBand, gamma: float, band_trace: float, point: CoherentPoint) -> KappaBoundReport:
    """Compare -kappa with the band-count bound written as scalar + weight * N_perp.

    ``band_trace`` is Tr (h - mu) P_delta.  The band-count form uses the constant
    -gamma nu (1 - 4 V nu2 + V nu / 2 + V nu2); the corrected form drops it, which is
    valid for a non-negative kernel.
    """
    nu, nu2, vol = band.nu_delta, band.nu_2delta, band.volume
    s = float(np.sum(np.abs(point.amplitudes) ** 2))
    neg_scalar = -kap.scalar(point)
    wmax = float(np.max(-kap.perp_weights)) if len(kap.perp_weights) else 0.0
    band_count_const = -gamma * nu * (1 - 4 * vol * nu2 + 0.5 * vol * nu + vol * nu2)
    band_count_scalar = band_trace + band_count_const + 4 * gamma * nu2 * (s - band.n_delta)
    corrected_scalar = band_trace + 4 * gamma * nu2 * s
    return KappaBoundReport(neg_scalar, wmax, band_count_scalar, 4 * gamma * nu2, corrected_scalar, 4 * gamma * nu2)


def partial_inner_product(
    full: np.ndarray, basis: OccupationBasis, band: ModeBand, band_basis: OccupationBasis,
    perp_basis: OccupationBasis | None, vec: np.ndarray,
) -> np.ndarray:
    """<c|H|c> over the band factor by direct contraction of the full matrix."""
    sb = basis.states[:, list(band.band)]
    ib = band_basis.index(sb)
    if perp_basis is None:
        ip = np.zeros(basis.size, dtype=np.int64)
        dp = 1
    else:
        ip = perp_basis.index(basis.states[:, list(band.complement)])
        dp = perp_basis.size
    if np.any(ib < 0) or np.any(ip < 0):
        raise ValueError("full basis is not the product of band and complement bases")
    w = vec[ib]
    # rows and columns weighted by conj(phi) and phi, then summed into perp blocks
    weighted = (np.conj(w)[:, None] * full) * w[None, :]
    proj = np.zeros((dp, basis.size), dtype=complex)
    np.add.at(proj, ip, weighted)
    out = np.zeros((dp, dp), dtype=complex)
    np.add.at(out.T, ip, proj.T)
    return out


def random_points(n_delta: int, count: int, seed: int, radius: float = 2.0) -> list[CoherentPoint]:
    """Points uniform in the polydisk |c_k| <= radius."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random((count, n_delta)))
    th = 2 * np.pi * rng.random((count, n_delta))
    return [CoherentPoint(z) for z in r * np.exp(1j * th)]


def symbol_oracle_deviation(h: ManyBodyHamiltonian, band: ModeBand, band_cap: int, points) -> float:
    """max |h_low(c) - <c|H|c>| over ``points``, the second by direct contraction.

    ``h`` must live on the product basis (band up to ``band_cap``) x (complement).
    """
    exp = symbol_expansion(h, band)
    band_basis = build_basis(band.n_delta, band_cap)
    full = h.dense()
    worst = 0.0
    for pt in points:
        vec = coherent_vector(band_basis, pt)
        ref = partial_inner_product(full, h.basis, band, band_basis, exp.perp_basis, vec)
        worst = max(worst, float(np.max(np.abs(ref - exp.lower(pt, h.mu)))))
    return worst


# --------------------------------------------------------------------------
# c-plane quadrature


@dataclass
class QuadratureResult:
    log_value: float
    rel_error: float
    rel_tail: float
    radius: np.ndarray
    nodes: int

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def error(self) -> float:
        return self.value * (self.rel_error + self.rel_tail)


def _radial_rule(radius: float, nodes: int, panels: int):
    x, w = np.polynomial.legendre.leggauss(nodes // panels)
    edges = np.linspace(0.0, radius, panels + 1)
    r = np.concatenate([0.5 * (b - a) * x + 0.5 * (b + a) for a, b in zip(edges[:-1], edges[1:])])
    wr = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return r, wr


def polar_rule(radius: float, radial: int, angular: int, panels: int = 2):
    """Nodes and weights of int d^2c / pi over the disk |c| <= radius."""
    r, wr = _radial_rule(radius, radial, panels)
    th = 2 * np.pi * np.arange(angular) / angular
    pts = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    wts = (2 * r * wr / angular)[:, None].repeat(angular, axis=1).ravel()
    return pts, wts


def _tensor(points_per_mode, weights_per_mode):
    grids = np.meshgrid(*points_per_mode, indexing="ij")
    wgrid = np.meshgrid(*weights_per_mode, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return pts, w


def _log_integrate(logf, pts, w, chunk):
    vals = np.concatenate([np.asarray(logf(pts[i : i + chunk]), dtype=float) for i in range(0, len(pts), chunk)])
    return float(logsumexp(vals, b=w)), vals


def cplane_quadrature(
    logf: Callable[[np.ndarray], np.ndarray],
    n_modes: int,
    radius=4.0,
    radial_nodes: int = 24,
    angular_nodes: int = 32,
    tail_tol: float | None = 1e-8,
    grow: bool = True,
    chunk: int = 4096,
) -> QuadratureResult:
    """log of int prod_k d^2c_k / pi  exp(logf(c)) by tensor polar rules.

    ``logf`` maps a batch of points, shape (P, n_modes), to log integrand
    values.  The error estimate compares against a rule with half the radial
    panels and half the angles; the tail estimate assumes Gaussian decay
    beyond the radius, fitted from the boundary values.  With ``grow`` the
    radius is enlarged until the boundary is negligible.
    """
    if n_modes == 0:
        v = float(np.asarray(logf(np.zeros((1, 0), dtype=complex)))[0])
        return QuadratureResult(v, 0.0, 0.0, np.zeros(0), 1)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n_modes,)).copy()
    for _ in range(12):
        rules = [polar_rule(R, radial_nodes, angular_nodes) for R in radius]
        pts, w = _tensor([r[0] for r in rules], [r[1] for r in rules])
        log_fine, vals = _log_integrate(logf, pts, w, chunk)
        peak = pts[np.argmax(vals)]
        tails, grown = [], False
        for j in range(n_modes):
            probe = np.repeat(peak[None, :], 2 * angular_nodes, axis=0)
            th = 2 * np.pi * np.arange(angular_nodes) / angular_nodes
            probe[:angular_nodes, j] = radius[j] * np.exp(1j * th)
            probe[angular_nodes:, j] = 0.9 * radius[j] * np.exp(1j * th)
            pv = np.asarray(logf(probe), dtype=float)
            edge, inner = logsumexp(pv[:angular_nodes]) - math.log(angular_nodes), logsumexp(pv[angular_nodes:]) - math.log(angular_nodes)
            rate = (inner - edge) / (radius[j] ** 2 * (1 - 0.81))
            # int_R^inf 2 r exp(-a (r^2 - R^2)) dr = 1/a; the mode's own share of
            # the integral is estimated geometrically (exact for one mode)
            top = float(np.max(vals))
            own = top + (log_fine - top) / n_modes
            rel = math.exp(edge - own) / rate if rate > 0 else math.inf
            tails.append(rel)
            if grow and (rate <= 0 or edge - top > math.log(1e-16)):
                radius[j] *= 1.5
                grown = True
        if not grown:
            break
    coarse_rules = [polar_rule(R, radial_nodes // 2, max(angular_nodes // 2, 1), panels=1) for R in radius]
    cpts, cw = _tensor([r[0] for r in coarse_rules], [r[1] for r in coarse_rules])
    log_coarse, _ = _log_integrate(logf, cpts, cw, chunk)
    rel_err = abs(math.expm1(log_coarse - log_fine))
    rel_tail = float(sum(tails))
    if tail_tol is not None and rel_tail > tail_tol:
        raise QuadratureTailError(f"tail estimate {rel_tail:.2e} above tolerance at radius {radius.tolist()}")
    return QuadratureResult(log_fine, rel_err, rel_tail, radius, len(pts))


def coherent_projector_integral(weight: Callable[[np.ndarray], np.ndarray], n_max: int, radius: float = 9.0,
                                radial: int = 96, angular: int = 64) -> np.ndarray:
    """int d^2c/pi weight(c) |c><c| on one mode, restricted to occupations <= n_max.

    The components exp(-|c|^2/2) c^n / sqrt(n!) are used without truncation
    renormalization, so the block is the restriction of the full operator.
    """
    if angular <= 2 * n_max:
        raise ValueError("angular nodes must exceed twice the occupation cap")
    pts, w = polar_rule(radius, radial, angular, panels=4)
    n = np.arange(n_max + 1)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    r = np.abs(pts)
    ph = np.angle(pts)
    mag = np.exp(-0.5 * r[:, None] ** 2 + n[None, :] * np.log(np.where(r > 0, r, 1.0))[:, None] - 0.5 * logfact[None, :])
    mag[r == 0, 1:] = 0.0
    v = mag * np.exp(1j * n[None, :] * ph[:, None])
    return (v.T * (w * weight(pts))) @ v.conj()


def resolution_identity_deviation(n_max: int = 10, **rule) -> float:
    """max |int d^2c/pi (|c|^2 - 1)|c><c| - a*a| over the block n <= n_max."""
    got = coherent_projector_integral(lambda c: np.abs(c) ** 2 - 1, n_max, **rule)
    return float(np.max(np.abs(got - np.diag(np.arange(n_max + 1)))))


def monte_carlo_cplane(
    logf: Callable[[np.ndarray], np.ndarray],
    n_modes: int,
    width: float,
    samples: int = 20_000,
    seed: int = 0,
    chunk: int = 4096,
) -> QuadratureResult:
    """Importance-sampled integral with complex Gaussian proposals of variance ``width^2``."""
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((samples, n_modes)) + 1j * rng.standard_normal((samples, n_modes))) * (width / math.sqrt(2))
    # density of the proposal relative to prod d^2c / pi
    log_q = -np.sum(np.abs(z) ** 2, axis=1) / width**2 - n_modes * math.log(width**2)
    vals = np.concatenate([np.asarray(logf(z[i : i + chunk]), dtype=float) for i in range(0, samples, chunk)])
    lr = vals - log_q
    m = lr.max()
    ratio = np.exp(lr - m)
    mean = ratio.mean()
    se = ratio.std(ddof=1) / math.sqrt(samples)
    return QuadratureResult(float(m + math.log(mean)), float(se / mean), 0.0, np.full(n_modes, width), samples)
