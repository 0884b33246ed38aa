"""Perfect Bose gas in anisotropic periodic boxes with a one-mode source.

Mode sums over the full lattice are split into an explicit block of low
modes and a remainder.  The remainder is summed in the j-representation

    sum_k 1/(e^{b(e_k - mu)} - 1) = sum_{j>=1} e^{j b mu} prod_a theta_a(j b),

with theta_a(t) = sum_n exp(-t e_a(n)), restricted to modes outside the block.
The per-j bracket does not depend on mu, so it is computed once per box.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import OptimizeWarning, brentq, curve_fit
from scipy.special import zeta

MAX_EXPLICIT = 200_000


class LimitOrderError(ValueError):
    pass


@dataclass(frozen=True)
class AnisotropicBox:
    alpha: tuple[float, float, float]
    volume: float

    def __post_init__(self):
        ax, ay, az = self.alpha
        if abs(ax + ay + az - 1) > 1e-12:
            raise ValueError("exponents must sum to 1")
        if not ax >= ay >= az >= 0:
            raise ValueError("exponents must satisfy alpha_x >= alpha_y >= alpha_z >= 0")
        if self.volume <= 0:
            raise ValueError("volume must be positive")

    @property
    def sides(self) -> np.ndarray:
        return np.array([self.volume**a for a in self.alpha])

    @property
    def axis_scale(self) -> np.ndarray:
        """e_a(n) = scale_a n^2 along each axis."""
        return 0.5 * (2 * np.pi / self.sides) ** 2

    def energy(self, label) -> float:
        return float(np.dot(self.axis_scale, np.asarray(label, dtype=float) ** 2))

    def with_volume(self, volume: float) -> "AnisotropicBox":
        return AnisotropicBox(self.alpha, volume)


def _theta_poisson(t: np.ndarray, c: float) -> np.ndarray:
    """sum_n exp(-t c n^2) via Poisson summation (accurate when t c is small)."""
    s = np.sqrt(np.pi / (t * c))
    out = np.ones_like(t)
    m = 1
    while True:
        term = np.exp(-(np.pi * m) ** 2 / (t * c))
        out += 2 * term
        if term.max() < 1e-18:
            break
        m += 1
    return s * out


def _axis_parts(t: np.ndarray, c: float, m: int, chunk: int = 256):
    """(P, T): sums of exp(-t c n^2) over |n| <= m and over |n| > m."""
    n = np.arange(1, m + 1, dtype=float)
    P = np.ones_like(t)
    for i in range(0, len(t), chunk):
        tt = t[i : i + chunk]
        P[i : i + chunk] += 2 * np.exp(-np.outer(tt, c * n * n)).sum(axis=1)
    T = np.empty_like(t)
    small = t * c < 1e-2
    if small.any():
        T[small] = _theta_poisson(t[small], c) - P[small]
    big = ~small
    if big.any():
        tb = t[big]
        # tail terms beyond exp(-60) relative to the first are dropped
        nmax = int(math.sqrt((m + 1) ** 2 + 60.0 / (tb.min() * c))) + 1
        k = np.arange(m + 1, nmax + 1, dtype=float)
        T[big] = 2 * np.exp(-np.outer(tb, c * k * k)).sum(axis=1)
    return P, np.maximum(T, 0.0)


class BoxSpectrum:
    """Explicit low modes plus the resummed remainder for one (box, beta)."""

    def __init__(self, box: AnisotropicBox, beta: float, max_explicit: int = MAX_EXPLICIT, extra_labels=(), cover: float = 0.0):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.box, self.beta = box, float(beta)
        c = box.axis_scale
        L = box.sides

        def caps(e):
            return np.floor(L * np.sqrt(2 * e) / (2 * np.pi)).astype(int)

        need = np.max(np.abs(np.asarray(extra_labels, dtype=int)), axis=0) if len(extra_labels) else np.zeros(3, int)
        # every mode below ``cover`` must sit in the explicit block
        need = np.maximum(need, caps(cover) if cover > 0 else 0)
        max_explicit = max(max_explicit, int(np.prod(2 * need + 1)))
        lo, hi = math.log(1e-14), math.log(60.0 / beta)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if np.prod(2 * np.maximum(caps(math.exp(mid)), need) + 1) <= max_explicit:
                lo = mid
            else:
                hi = mid
        m = np.maximum(caps(math.exp(lo)), need)
        self.caps = m
        axes = [np.arange(-k, k + 1) for k in m]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        self.labels = grid
        self.energies = grid**2 @ c
        self.outside_min = float(np.min(c * (m + 1) ** 2))

        # bracket B_j = prod theta - prod P, telescoped to avoid cancellation
        jmax = int(math.ceil(45.0 / (self.beta * self.outside_min))) + 2
        t = self.beta * np.arange(1, jmax + 1, dtype=float)
        P, T = zip(*(_axis_parts(t, c[a], int(m[a])) for a in range(3)))
        th = [P[a] + T[a] for a in range(3)]
        self.bracket = T[0] * th[1] * th[2] + P[0] * T[1] * th[2] + P[0] * P[1] * T[2]
        self.j = np.arange(1, jmax + 1)

    def index(self, label) -> int:
        lab = np.asarray(label, dtype=int)
        if np.any(np.abs(lab) > self.caps):
            raise ValueError(f"label {tuple(lab)} is outside the explicit block")
        shape = 2 * self.caps + 1
        return int(np.ravel_multi_index(tuple(lab + self.caps), tuple(shape)))

    def occupations(self, mu: float) -> np.ndarray:
        """Bose occupations of the explicit modes."""
        if mu >= 0:
            raise ValueError("mu must lie below the lowest mode energy 0")
        return 1.0 / np.expm1(self.beta * (self.energies - mu))

    def remainder(self, mu: float) -> float:
        return float(np.sum(np.exp(self.j * self.beta * mu) * self.bracket))

    def density(self, mu: float, eta: complex = 0.0, source=None) -> float:
        rho = (self.occupations(mu).sum() + self.remainder(mu)) / self.box.volume
        if eta and source is not None:
            rho += abs(eta) ** 2 / (self.box.energy(source) - mu) ** 2
        return float(rho)


@lru_cache(maxsize=64)
def spectrum(box: AnisotropicBox, beta: float, extra: tuple = (), cover: float = 0.0) -> BoxSpectrum:
    return BoxSpectrum(box, beta, extra_labels=extra, cover=cover)


def density_function(box: AnisotropicBox, beta: float, mu: float, eta: complex = 0.0, source=(0, 0, 0)) -> float:
    """rho_l(beta, mu, eta): Bose sum over the box modes plus |eta|^2 / (e_src - mu)^2."""
    spec = spectrum(box, beta, (tuple(source),))
    return spec.density(mu, eta, source)


def solve_mu(box: AnisotropicBox, beta: float, rho: float, eta: complex = 0.0, source=(0, 0, 0), cover: float = 0.0) -> float:
    """Unique mu < 0 with rho_l(beta, mu, eta) = rho.

    The root is found in s = ln(-mu), which keeps relative precision in the
    gap to the ground level however small it gets.
    """
    if rho <= 0:
        raise ValueError("target density must be positive")
    spec = spectrum(box, beta, (tuple(source),), cover)

    def f(s):
        return spec.density(-math.exp(s), eta, source) - rho

    s_lo = math.log(0.5 / (box.volume * beta * rho))
    s_hi = math.log(max(1.0, 10.0 / beta))
    while f(s_hi) > 0:
        s_hi += 2.0
        if s_hi > 700:
            raise ArithmeticError("no upper bracket for the chemical potential")
    if f(s_lo) < 0:
        raise ArithmeticError("no lower bracket for the chemical potential")
    s = brentq(f, s_lo, s_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    return -math.exp(s)


# ----------------------------------------------------------------------------
# bulk quantities


def bulk_density(beta: float, mu: float, d: int = 3) -> float:
    """I(beta, mu): Bose integral against the Weyl measure, mu <= 0."""
    if mu > 0:
        raise ValueError("mu must be non-positive")
    if d != 3:
        raise ValueError("only d = 3 is supported")
    c3 = math.sqrt(2) / (3 * math.pi**2)

    # e = x^2 removes the square-root endpoint behaviour
    def f(x):
        z = beta * (x * x - mu)
        if z <= 0:
            return 3 * c3 / beta
        return 3 * c3 * x * x * math.exp(-z) / -math.expm1(-z)

    top = math.sqrt(max(60.0 / beta + mu, 1e-12)) + 1.0
    a, _ = quad(f, 0, 1.0 / math.sqrt(beta), epsabs=0, epsrel=1e-12, limit=200)
    b, _ = quad(f, 1.0 / math.sqrt(beta), top, epsabs=0, epsrel=1e-12, limit=200)
    return a + b


def bulk_window_density(beta: float, delta: float, mu: float = 0.0) -> float:
    """Share of I(beta, mu) carried by energies below ``delta``."""
    if delta <= 0:
        return 0.0
    c3 = math.sqrt(2) / (3 * math.pi**2)

    def f(x):
        z = beta * (x * x - mu)
        return 3 * c3 * x * x / math.expm1(z) if z > 0 else 3 * c3 / beta

    return quad(f, 0, math.sqrt(delta), epsabs=0, epsrel=1e-12, limit=200)[0]


def critical_density(beta: float, d: int = 3) -> float:
    """rho_c = I(beta, 0^-); infinite for d < 3."""
    if d < 3:
        return math.inf
    return bulk_density(beta, 0.0, d)


def critical_density_closed_form(beta: float) -> float:
    return float(zeta(1.5) * (2 * math.pi * beta) ** -1.5)


def bulk_mu(beta: float, rho: float) -> float:
    """Root of I(beta, mu) = rho for rho below the critical density."""
    if rho >= critical_density(beta):
        raise ValueError("density at or above critical: no bulk root")
    return -math.exp(brentq(lambda s: bulk_density(beta, -math.exp(s)) - rho, -40, 10, xtol=1e-14))


# ----------------------------------------------------------------------------
# condensate observables


@dataclass
class CondensateReport:
    volume: float
    mu: float
    ground_density: float
    source_density: float
    max_mode_density: float  # largest density among modes other than the ground mode
    window_density: float
    window: float
    top_modes: list = field(default_factory=list)  # (label, density), largest first
    total_density: float = 0.0
    window_densities: dict = field(default_factory=dict)  # extra window edge -> density


def condensate_report(box: AnisotropicBox, beta: float, rho: float, eta: complex = 0.0, source=(0, 0, 0),
                      window: float | None = None, top: int = 8, windows=()) -> CondensateReport:
    win = default_window(box, beta) if window is None else window
    cover = max([win, *windows])
    mu = solve_mu(box, beta, rho, eta, source, cover)
    spec = spectrum(box, beta, (tuple(source),), cover)
    occ = spec.occupations(mu) / box.volume
    g = spec.index((0, 0, 0))
    s = spec.index(source)
    src_extra = abs(eta) ** 2 / (box.energy(source) - mu) ** 2 if eta else 0.0
    dens = occ.copy()
    dens[s] += src_extra
    ground = float(dens[g])
    others = dens.copy()
    others[g] = -1.0
    order = np.argsort(-dens)[:top]
    if cover > spec.outside_min:
        raise ValueError("window reaches beyond the explicit mode block")
    wd = float(dens[spec.energies < win].sum())
    extra = {float(w): float(dens[spec.energies < w].sum()) for w in windows}
    total = float(dens.sum() + spec.remainder(mu) / box.volume)
    return CondensateReport(box.volume, mu, ground, float(dens[s]), float(others.max()), wd, win,
                            [(tuple(int(x) for x in spec.labels[i]), float(dens[i])) for i in order], total, extra)


def lowest_excitation(box: AnisotropicBox) -> float:
    return float(box.axis_scale.min())


def default_window(box: AnisotropicBox, beta: float) -> float:
    """Ten times the lowest nonzero mode energy."""
    return 10.0 * lowest_excitation(box)


# fixed band edges for the band-density double limit
BAND_WINDOWS = (0.16, 0.08, 0.04)


def _power_fit(v: np.ndarray, y: np.ndarray):
    """Fit y = a + b V^-g; returns (a, b, g).  Falls back to the last value."""
    x = np.log(v / v[0])

    def model(x, a, b, g):
        return a + b * np.exp(-g * x)

    try:
        p0 = (y[-1], y[0] - y[-1], 0.3)
        # only the point estimate is used; flat sweeps leave the covariance undefined
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(model, x, y, p0=p0, bounds=([-np.inf, -np.inf, 0.01], [np.inf, np.inf, 3.0]), maxfev=20000)
        return float(popt[0]), float(popt[1] / v[0] ** -popt[2]), float(popt[2])
    except (RuntimeError, ValueError):
        return float(y[-1]), 0.0, 0.0


@dataclass
class Classification:
    alpha: tuple
    beta: float
    rho: float
    rho_c: float
    reports: list
    ground_limit: float
    window_limit: float  # band density minus its bulk thermal share, V then window to zero
    max_mode_trend_decreasing: bool
    macroscopic_modes: list
    label: str
    inconclusive: bool = False
    band_limits: dict = field(default_factory=dict)  # window edge -> V-extrapolated excess density

    @property
    def excess(self) -> float:
        return self.rho - self.rho_c


def band_excess(reports, beta: float, windows=BAND_WINDOWS) -> dict:
    """V-extrapolated band density minus the bulk thermal share, per window edge.

    At fixed edge D the volume limit of the band density is the condensate plus
    the part of I(beta, 0) below D; subtracting the latter leaves a quantity
    whose D -> 0 limit is the band condensate.
    """
    vols = np.array([r.volume for r in reports])
    out = {}
    for w in windows:
        y = np.array([r.window_densities[float(w)] for r in reports])
        out[float(w)] = _power_fit(vols, y)[0] - bulk_window_density(beta, w)
    return out


def classify_condensation(alpha, beta: float, rho: float, volumes, window=None, threshold: float = 0.01,
                          windows=BAND_WINDOWS) -> Classification:
    """Type none / I / II / III from a volume sweep of the gauge-invariant gas.

    ``window`` maps a box to the reported band edge (default: ``default_window``);
    the band-density limit itself uses the fixed edges ``windows``.
    """
    vols = np.asarray(sorted(volumes), dtype=float)
    rc = critical_density(beta)
    reps = []
    for v in vols:
        box = AnisotropicBox(tuple(alpha), float(v))
        w = default_window(box, beta) if window is None else window(box)
        reps.append(condensate_report(box, beta, rho, window=w, windows=windows))
    g = np.array([r.ground_density for r in reps])
    mx = np.array([r.max_mode_density for r in reps])
    g_lim = _power_fit(vols, g)[0]
    bands = band_excess(reps, beta, windows)
    b = np.array(list(bands.values()))
    w_lim = float(np.mean(b))
    decreasing = bool(np.all(np.diff(mx) < 0))
    excess = rho - rc
    scale = max(excess, threshold * rho)
    last = reps[-1]
    macro = [lab for lab, d in last.top_modes if d > threshold * scale]
    inconclusive = False
    if excess <= 0 or w_lim < threshold * rho:
        label = "none"
    elif macro == [(0, 0, 0)] and decreasing:
        label = "I"
    elif len(macro) >= 2:
        label = "II"
    elif not macro and decreasing:
        label = "III"
    else:
        label, inconclusive = "inconclusive", True
    # the band limit should not depend on the edge once the thermal share is removed
    if excess > 0 and np.ptp(b) > 0.02 * excess:
        inconclusive = True
    return Classification(tuple(alpha), beta, rho, rc, reps, g_lim, w_lim, decreasing, macro, label, inconclusive, bands)


# ----------------------------------------------------------------------------
# quasi-averages


@dataclass
class QuasiAveragePoint:
    eta: float
    source_limit: float  # volume-extrapolated source-mode density
    ground_limit: float
    reports: list


@dataclass
class QuasiAverageResult:
    alpha: tuple
    beta: float
    rho: float
    rho_c: float
    points: list
    source_limit: float  # eta -> 0 of the volume limits
    ground_limit: float
    source_trend_monotone: bool  # V-limits move one way as eta shrinks

    @property
    def excess(self) -> float:
        return self.rho - self.rho_c


def fixed_energy_label(alpha, volume: float, energy: float, axis: int = 0) -> tuple[int, int, int]:
    """Lattice label whose energy stays near ``energy`` as the box grows."""
    box = AnisotropicBox(tuple(alpha), volume)
    n = max(1, round(math.sqrt(energy / box.axis_scale[axis])))
    lab = [0, 0, 0]
    lab[axis] = n
    return tuple(lab)


QUASI_ETAS = (0.1, 0.05, 0.025, 0.0125, 0.00625)
QUASI_VOLUMES = (1e6, 1e7, 1e8, 1e9)


def quasi_average_sweep(alpha, beta: float, rho: float, source, etas=QUASI_ETAS, volumes=QUASI_VOLUMES,
                        order: str = "volume-first") -> QuasiAverageResult:
    """Source-mode and ground-mode densities with the volume limit taken first.

    ``source`` is a lattice label or a callable volume -> label (for a mode
    whose physical energy is held fixed).  ``etas`` must decrease to zero and
    ``volumes`` increase; only ``order="volume-first"`` is accepted.
    """
    if order != "volume-first":
        raise LimitOrderError("the source must be switched off after the volume limit")
    etas = [float(e) for e in etas]
    vols = np.asarray(volumes, dtype=float)
    if any(b >= a for a, b in zip(etas, etas[1:])) or any(e <= 0 for e in etas):
        raise LimitOrderError("eta sequence must be positive and strictly decreasing")
    if np.any(np.diff(vols) <= 0):
        raise LimitOrderError("volume sequence must be strictly increasing")
    rc = critical_density(beta)
    pts = []
    for eta in etas:
        reps = []
        for v in vols:
            box = AnisotropicBox(tuple(alpha), float(v))
            lab = source(float(v)) if callable(source) else tuple(source)
            reps.append(condensate_report(box, beta, rho, eta, lab))
        s = np.array([r.source_density for r in reps])
        g = np.array([r.ground_density for r in reps])
        pts.append(QuasiAveragePoint(eta, _power_fit(vols, s)[0], _power_fit(vols, g)[0], reps))
    src = np.array([p.source_limit for p in pts])
    grd = np.array([p.ground_limit for p in pts])
    e = np.array(etas)
    src_lim = _eta_extrapolate(e, src)
    grd_lim = _eta_extrapolate(e, grd)
    d = np.diff(src)
    return QuasiAverageResult(tuple(alpha), beta, rho, rc, pts, src_lim, grd_lim, bool(np.all(d >= 0) or np.all(d <= 0)))


def _eta_extrapolate(eta: np.ndarray, y: np.ndarray) -> float:
    """Least-squares fit y = a + b sqrt(eta) + c eta, evaluated at eta = 0."""
    if len(eta) < 3:
        return float(y[-1])
    A = np.stack([np.ones_like(eta), np.sqrt(eta), eta], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])
