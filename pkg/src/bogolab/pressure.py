"""Grand-canonical pressures: exact traces, the c-number approximations and
the bounds relating them for one finite-volume cell."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp
from scipy.stats import qmc

from .fock import BasisTooLarge, build_product_basis
from .manybody import HamiltonianTerms, InteractionKernel, ManyBodyHamiltonian, build_hamiltonian
from .oneparticle import build_kinetic, diagonalize, sample_potential
from .symbols import (
    CoherentPoint,
    ModeBand,
    SymbolExpansion,
    build_band,
    _tensor,
    cplane_quadrature,
    monte_carlo_cplane,
    polar_rule,
    symbol_expansion,
)

BETA_RANGE = (0.25, 2.0)


class OptimizationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ThermoParams:
    beta: float
    mu: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def log_trace_exp(matrix: np.ndarray, beta: float) -> float:
    """ln Tr exp(-beta H) with the spectrum shifted to avoid overflow."""
    w = np.linalg.eigvalsh(matrix)
    return float(logsumexp(-beta * w))


def batch_log_trace(mats: np.ndarray, beta: float) -> np.ndarray:
    return logsumexp(-beta * np.linalg.eigvalsh(mats), axis=-1)


def exact_log_partition(h: ManyBodyHamiltonian, params: ThermoParams) -> float:
    return log_trace_exp(h.dense(params.mu), params.beta)


def exact_pressure(h: ManyBodyHamiltonian, params: ThermoParams) -> float:
    """(1/beta V) ln Tr exp(-beta H(mu)) on the truncated Fock space."""
    return exact_log_partition(h, params) / (params.beta * h.terms.volume)


@dataclass
class DensityReport:
    finite_difference: float
    gibbs: float

    @property
    def deviation(self) -> float:
        return abs(self.finite_difference - self.gibbs)


def density(h: ManyBodyHamiltonian, params: ThermoParams, tol: float = 1e-6) -> DensityReport:
    """d p / d mu by centered difference and <N>/V from the Gibbs weights."""
    step = 1e-4 * max(1.0, abs(params.mu))
    hi = exact_pressure(h, ThermoParams(params.beta, params.mu + step))
    lo = exact_pressure(h, ThermoParams(params.beta, params.mu - step))
    w, v = np.linalg.eigh(h.dense(params.mu))
    p = np.exp(-params.beta * (w - w.min()))
    p /= p.sum()
    nd = np.real(h.basis.states.sum(axis=1))
    occ = np.einsum("i,ai,a,ai->", p, np.conj(v), nd, v).real
    rep = DensityReport((hi - lo) / (2 * step), float(occ / h.terms.volume))
    if rep.deviation > tol:
        raise ArithmeticError(f"density routes disagree by {rep.deviation:.2e}")
    return rep


# ----------------------------------------------------------------------------
# lower-symbol pressures


def approximating_pressure(exp: SymbolExpansion, point: CoherentPoint, params: ThermoParams) -> float:
    """(1/beta V) ln Tr_perp exp(-beta H_low(mu, c))."""
    return log_trace_exp(exp.lower(point, params.mu), params.beta) / (params.beta * exp.terms.volume)


@dataclass
class MaximizerResult:
    point: CoherentPoint
    value: float
    near_optimal: list = field(default_factory=list)
    starts: int = 0
    converged: int = 0


def _starts(n: int, restarts: int, seed: int, scale: float = 4.0) -> list[np.ndarray]:
    dim = 2 * n
    pts = [np.zeros(dim)]
    for j in range(dim):
        if len(pts) >= restarts:
            break
        e = np.zeros(dim)
        e[j] = 2.0
        pts.append(e)
    left = restarts - len(pts)
    if left > 0:
        lhs = qmc.LatinHypercube(d=dim, seed=seed).random(left) * 2 * scale - scale
        for x in lhs:
            c = x[0::2] + 1j * x[1::2]
            big = np.abs(c) > scale
            c[big] *= scale / np.abs(c[big])
            y = np.empty(dim)
            y[0::2], y[1::2] = c.real, c.imag
            pts.append(y)
    return pts


def maximize_over_c(
    exp: SymbolExpansion,
    params: ThermoParams,
    restarts: int = 16,
    seed: int = 0,
    tol: float = 1e-9,
    phase: float = 0.0,
) -> MaximizerResult:
    """Multi-start Nelder-Mead on the 2 n_delta real coordinates of c.

    ``phase`` rotates every starting point, which must not change the result.
    """
    n = exp.band.n_delta
    scale = 1.0 / (params.beta * exp.terms.volume)
    if n == 0:
        v = log_trace_exp(exp.lower(np.zeros(0), params.mu), params.beta) * scale
        return MaximizerResult(CoherentPoint(np.zeros(0)), v, [], 0, 0)

    def obj(x):
        c = x[0::2] + 1j * x[1::2]
        return -log_trace_exp(exp.lower(c, params.mu), params.beta)

    results = []
    rot = np.exp(1j * phase)
    for x0 in _starts(n, restarts, seed):
        c0 = (x0[0::2] + 1j * x0[1::2]) * rot
        y0 = np.empty_like(x0)
        y0[0::2], y0[1::2] = c0.real, c0.imag
        r = minimize(obj, y0, method="Nelder-Mead",
                     options={"xatol": 1e-9, "fatol": tol, "maxiter": 4000 * len(y0), "adaptive": True})
        results.append(r)
    ok = [r for r in results if r.success]
    if not ok:
        raise OptimizationFailure("no restart met the simplex tolerances")
    best = min(ok, key=lambda r: r.fun)
    near = [CoherentPoint.from_real(r.x) for r in ok if r.fun - best.fun <= 1e-8]
    point = CoherentPoint.from_real(best.x)
    if not exp.terms.sources:
        point = point.gauge_fixed()
    value = -obj(point.to_real()) * scale
    return MaximizerResult(point, value, near, len(results), len(ok))


# ----------------------------------------------------------------------------
# integrated symbol pressures


@dataclass
class IntegratedPressures:
    log_xi_low: float
    log_xi_up: float
    rel_err_low: float
    rel_err_up: float
    p_low: float
    p_up: float
    kappa_mean_up: float  # <kappa>_up, the c-integrated Gibbs mean
    radius: np.ndarray
    method: str


def _radius_floor(point: CoherentPoint | None, n: int) -> np.ndarray:
    if point is None:
        return np.full(n, 4.0)
    return np.maximum(4.0, 2 * np.abs(point.amplitudes) + 4)


def _log_integral(logf, n, radius, mc_samples, seed, grow=True):
    if n <= 2:
        return cplane_quadrature(logf, n, radius, grow=grow), "quadrature"
    return monte_carlo_cplane(logf, n, width=float(np.max(radius)) / 2, samples=mc_samples, seed=seed), "monte-carlo"


def integrated_pressures(
    exp: SymbolExpansion,
    params: ThermoParams,
    maximizer: CoherentPoint | None = None,
    kappa_sign: float = 1.0,
    mc_samples: int = 20_000,
    seed: int = 0,
) -> IntegratedPressures:
    """(1/beta V) ln of the c-integrated traces of exp(-beta H_low) and exp(-beta H_up).

    ``kappa_sign`` = -1 flips the upper-symbol correction; it exists only to
    exercise the failure path of the sandwich check.
    """
    beta, mu = params.beta, params.mu
    n = exp.band.n_delta
    kap = exp.kappa(mu)

    def h_up(c):
        lo = exp.lower_batch(c, mu)
        if kappa_sign == 1.0:
            return exp.upper_batch(c, mu)
        return lo + kappa_sign * (exp.upper_batch(c, mu) - lo)

    def logf_low(c):
        return batch_log_trace(exp.lower_batch(c, mu), beta)

    def logf_up(c):
        return batch_log_trace(h_up(c), beta)

    r0 = _radius_floor(maximizer, n)
    low, method = _log_integral(logf_low, n, r0, mc_samples, seed)
    up, _ = _log_integral(logf_up, n, np.maximum(r0, low.radius), mc_samples, seed)

    # <kappa>_up on the converged rule of the upper integral
    if n == 0:
        pts, w = np.zeros((1, 0), dtype=complex), np.ones(1)
    elif method == "quadrature":
        rules = [polar_rule(R, 24, 32) for R in up.radius]
        pts, w = _tensor([r[0] for r in rules], [r[1] for r in rules])
    else:
        rng = np.random.default_rng(seed)
        width = float(np.max(up.radius)) / 2
        pts = (rng.standard_normal((mc_samples, n)) + 1j * rng.standard_normal((mc_samples, n))) * (width / math.sqrt(2))
        w = np.exp(np.sum(np.abs(pts) ** 2, axis=1) / width**2) * width ** (2 * n)
    num, logs = [], []
    for i in range(0, len(pts), 4096):
        c = pts[i : i + 4096]
        hu = h_up(c)
        lam, vec = np.linalg.eigh(hu)
        lz = logsumexp(-beta * lam, axis=1)
        g = np.exp(-beta * lam - lz[:, None])
        kmat = np.stack([kap.matrix(CoherentPoint(ci)) for ci in c]) if n else kap.matrix(CoherentPoint(np.zeros(0)))[None]
        kdiag = np.einsum("pai,pab,pbi->pi", np.conj(vec), kmat, vec).real
        num.append(np.sum(g * kdiag, axis=1))
        logs.append(lz)
    lz = np.concatenate(logs)
    kv = np.concatenate(num)
    ww = w * np.exp(lz - lz.max())
    kmean = float(np.sum(ww * kv) / np.sum(ww))

    s = 1.0 / (beta * exp.terms.volume)
    return IntegratedPressures(low.log_value, up.log_value, low.rel_error + low.rel_tail, up.rel_error + up.rel_tail,
                               low.log_value * s, up.log_value * s, kmean, up.radius, method)


def integrated_low_log(exp: SymbolExpansion, params: ThermoParams, radius) -> float:
    def logf(c):
        return batch_log_trace(exp.lower_batch(c, params.mu), params.beta)

    return _log_integral(logf, exp.band.n_delta, radius, 20_000, 0, grow=False)[0].log_value


# ----------------------------------------------------------------------------
# error terms


@dataclass
class ErrorBudget:
    K: float
    M: float
    band_trace: float
    dmu_log_xi_low: float
    dmu_richardson_gap: float
    gamma: float


def band_trace(exp: SymbolExpansion, mu: float) -> float:
    """Tr (h - mu) P_delta from the plane-wave diagonal of the one-particle matrix."""
    diag = np.real(np.diag(exp.terms.one_body))
    return float(sum(diag[k] - mu for k in exp.band.band))


def error_budget(exp: SymbolExpansion, params: ThermoParams, radius=None) -> ErrorBudget:
    """K and M evaluated literally from their defining formulas."""
    beta, mu = params.beta, params.mu
    band = exp.band
    vol = exp.terms.volume
    gam = exp.terms.kernel.gamma
    nu, nu2 = band.nu_delta, band.nu_2delta
    tr = band_trace(exp, mu)
    dmu, gap = 0.0, 0.0
    if gam and band.n_delta:
        r = _radius_floor(None, band.n_delta) if radius is None else np.asarray(radius)
        h = 1e-3 * max(1.0, abs(mu))

        def diff(step):
            up = integrated_low_log(exp, ThermoParams(beta, mu + step), r)
            dn = integrated_low_log(exp, ThermoParams(beta, mu - step), r)
            return (up - dn) / (2 * step)

        d1, d2 = diff(h), diff(h / 2)
        dmu, gap = (4 * d2 - d1) / 3, abs(d1 - d2)
    K = (tr - gam * nu * (1 - 4 * vol * nu2 + 0.5 * vol * nu + vol * nu2)) / (beta * vol)
    K += 4 * gam * nu2 * dmu / (beta * vol)
    M = tr + gam * nu * (1 + 0.5 * vol * nu + nu2)
    return ErrorBudget(float(K), float(M), tr, float(dmu), float(gap), gam)


@dataclass
class IntegratedVsMax:
    lhs: float
    exact_rhs: float  # finite-n_delta form before the Stirling step
    stirling_rhs: float

    @property
    def exact_slack(self) -> float:
        return self.exact_rhs - self.lhs

    @property
    def stirling_slack(self) -> float:
        return self.stirling_rhs - self.lhs


def integrated_vs_max(p_low_int: float, p_low_max: float, low_density: float, band: ModeBand, beta: float, alpha: float = 2.0) -> IntegratedVsMax:
    """Both forms of the integrated-versus-maximum pressure estimate.

    ``low_density`` is d p_low / d mu, the particle density of the integrated
    lower-symbol state.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    vol, n, nu = band.volume, band.n_delta, band.nu_delta
    xi = alpha * vol * low_density
    log_ball = n * math.log(xi) - gammaln(n + 1)
    exact = p_low_max + (log_ball - math.log(1 - 1 / alpha)) / (beta * vol)
    stir = (
        p_low_max
        - math.log(1 - 1 / alpha) / (beta * vol)
        + nu / beta * math.log(alpha * low_density)
        + nu / beta
        - 0.5 / beta * math.log(vol) / vol
        - nu / beta * math.log(nu)
        - 0.5 / (beta * vol) * math.log(nu)
    )
    return IntegratedVsMax(p_low_int, float(exact), float(stir))


# ----------------------------------------------------------------------------
# one cell of the sandwich grid


@dataclass(frozen=True)
class CellSpec:
    d: int = 1
    l: float = 2 * math.pi
    cutoff: int = 1
    cells: int = 8
    b: float = 1.0
    p: float = 0.5
    seed: int = 0
    delta: float = 0.3
    beta: float = 1.0
    mu: float = -0.5
    n_max: int = 4
    u0: float = 0.5
    sigma: float = 1.0
    band_cap: int | None = None
    restarts: int = 16
    zero_potential: bool = False

    def key(self) -> tuple:
        return (self.d, self.l, self.seed, self.delta, self.beta, self.mu, self.n_max)


class CellModel:
    """One-particle data and Hamiltonian factory for a cell."""

    def __init__(self, spec: CellSpec):
        self.spec = spec
        self.kinetic = build_kinetic(spec.d, spec.l, spec.cutoff)
        if spec.zero_potential or spec.b == 0:
            self.potential = None
        else:
            self.potential = sample_potential(spec.d, spec.l, spec.l / spec.cells, spec.b, spec.p, spec.seed)
        self.eigs = diagonalize(self.kinetic, self.potential)
        self.band = build_band(self.kinetic, spec.delta)
        self.kernel = InteractionKernel(spec.u0, spec.sigma)

    def hamiltonian(self, band_cap: int, perp_cap: int, mu: float) -> ManyBodyHamiltonian:
        groups = [(self.band.band, band_cap), (self.band.complement, perp_cap)]
        basis = build_product_basis(self.kinetic.size, groups)
        return build_hamiltonian(self.eigs, self.kinetic, self.kernel, basis, mu)


@dataclass
class Certificate:
    band_cap: int
    band_delta: float  # change of ln Xi from the previous band cap
    perp_delta: float  # |p(N_max + 1) - p(N_max)|


def certify_band_cap(model: CellModel, params: ThermoParams, perp_cap: int, start: int = 10, step: int = 10, tol: float = 1e-11, limit: int = 200):
    """Raise the band cap until ln Xi stops moving; Xi is nondecreasing in the cap."""
    prev = None
    cap = start
    while cap <= limit:
        try:
            h = model.hamiltonian(cap, perp_cap, params.mu)
        except BasisTooLarge:
            break
        cur = exact_log_partition(h, params)
        if prev is not None and abs(cur - prev) < tol:
            return cap, h, abs(cur - prev)
        prev, cap = cur, cap + step
    raise ArithmeticError("band occupation cap did not converge")


@dataclass
class PressureReport:
    spec: CellSpec
    p_exact: float
    log_xi_exact: float
    p_low_max: float
    maximizer: CoherentPoint
    integrated: IntegratedPressures
    density: DensityReport
    budget: ErrorBudget
    certificate: Certificate
    lemma: IntegratedVsMax
    wall_time: float

    @property
    def p_low_integrated(self) -> float:
        return self.integrated.p_low

    @property
    def p_up_integrated(self) -> float:
        return self.integrated.p_up

    def checks(self) -> dict[str, bool]:
        ip = self.integrated
        lx = self.log_xi_exact
        beta = self.spec.beta
        conv_gap = ip.log_xi_up - ip.log_xi_low
        conv_rhs = -beta * ip.kappa_mean_up
        conv_tol = 2 * (ip.rel_err_low + ip.rel_err_up)
        return {
            "berezin_lieb_lower": ip.log_xi_low + math.log1p(ip.rel_err_low) < lx,
            "berezin_lieb_upper": lx + self.certificate.band_delta < ip.log_xi_up + math.log1p(-min(ip.rel_err_up, 0.5)),
            "max_bound": self.p_low_max <= self.p_exact + 1e-9,
            "residual_vs_K": self.p_exact - self.p_low_max <= self.budget.K + 1e-6,
            "bogoliubov_convexity": conv_gap <= conv_rhs + conv_tol,
        }

    def csv_row(self) -> dict:
        s = self.spec
        return {
            "d": s.d, "l": s.l, "seed": s.seed, "delta": s.delta, "beta": s.beta, "mu": s.mu, "N_max": s.n_max,
            "p_exact": self.p_exact, "p_low_max": self.p_low_max,
            "p_low_int": self.integrated.p_low, "p_up_int": self.integrated.p_up,
            "K": self.budget.K, "M": self.budget.M, "density": self.density.gibbs,
        }

    def summary(self) -> dict:
        ip = self.integrated
        return {
            "cell": list(self.spec.key()),
            "checks": self.checks(),
            "log_xi": {"low": ip.log_xi_low, "exact": self.log_xi_exact, "up": ip.log_xi_up},
            "quadrature_rel_error": {"low": ip.rel_err_low, "up": ip.rel_err_up},
            "kappa_mean_up": ip.kappa_mean_up,
            "maximizer": [[z.real, z.imag] for z in self.maximizer.amplitudes],
            "band_cap": self.certificate.band_cap,
            "band_delta": self.certificate.band_delta,
            "perp_delta": self.certificate.perp_delta,
            "perp_cap_certified": self.certificate.perp_delta < 1e-6,
            "lemma_exact_slack": self.lemma.exact_slack,
            "lemma_stirling_slack": self.lemma.stirling_slack,
            "dmu_richardson_gap": self.budget.dmu_richardson_gap,
            "wall_time": self.wall_time,
        }


def run_cell(spec: CellSpec, kappa_sign: float = 1.0) -> PressureReport:
    t0 = time.perf_counter()
    model = CellModel(spec)
    params = ThermoParams(spec.beta, spec.mu)
    if spec.band_cap is None:
        cap, h, bdelta = certify_band_cap(model, params, spec.n_max)
    else:
        cap, h, bdelta = spec.band_cap, model.hamiltonian(spec.band_cap, spec.n_max, spec.mu), 0.0
    log_xi = exact_log_partition(h, params)
    vol = model.kinetic.volume
    p_ex = log_xi / (spec.beta * vol)
    p_next = exact_pressure(model.hamiltonian(cap, spec.n_max + 1, spec.mu), params)
    cert = Certificate(cap, bdelta, abs(p_next - p_ex))
    exp = symbol_expansion(h, model.band, spec.n_max)
    best = maximize_over_c(exp, params, restarts=spec.restarts, seed=spec.seed)
    ip = integrated_pressures(exp, params, best.point, kappa_sign=kappa_sign)
    dens = density(h, params)
    budget = error_budget(exp, params, ip.radius)
    low_density = budget.dmu_log_xi_low / (spec.beta * vol) if budget.dmu_log_xi_low else _low_density(exp, params, ip.radius)
    lemma = integrated_vs_max(ip.p_low, best.value, low_density, model.band, spec.beta)
    return PressureReport(spec, p_ex, log_xi, best.value, best.point, ip, dens, budget, cert, lemma, time.perf_counter() - t0)


def _low_density(exp: SymbolExpansion, params: ThermoParams, radius) -> float:
    h = 1e-3 * max(1.0, abs(params.mu))
    up = integrated_low_log(exp, ThermoParams(params.beta, params.mu + h), radius)
    dn = integrated_low_log(exp, ThermoParams(params.beta, params.mu - h), radius)
    return (up - dn) / (2 * h) / (params.beta * exp.terms.volume)


def free_k_along_deltas(deltas=(0.6, 0.3, 0.1), beta: float = 1.0, mu: float = -0.5, l: float = 2 * math.pi, cutoff: int = 1) -> list[float]:
    """K for the free gas (no potential, no interaction) at each band edge."""
    kinetic = build_kinetic(1, l, cutoff)
    eigs = diagonalize(kinetic, None)
    terms = HamiltonianTerms(one_body=np.array(eigs.one_particle, dtype=complex), volume=kinetic.volume)
    out = []
    for delta in deltas:
        exp = SymbolExpansion(terms, build_band(kinetic, delta), 1)
        out.append(error_budget(exp, ThermoParams(beta, mu)).K)
    return out


ACCEPTANCE_CELLS = [
    CellSpec(seed=0, n_max=4, beta=0.5, mu=-0.5),
    CellSpec(seed=0, n_max=4, beta=1.0, mu=0.2),
    CellSpec(seed=0, n_max=6, beta=0.5, mu=0.2),
    CellSpec(seed=1, n_max=4, beta=1.0, mu=-0.5),
    CellSpec(seed=1, n_max=6, beta=1.0, mu=0.2),
    CellSpec(seed=1, n_max=6, beta=0.5, mu=-0.5),
]
