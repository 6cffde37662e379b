"""Radial ground states Q_{ω,γ} of −(1−ω²)Q + Δ_γ Q + |Q|^{p−1}Q = 0.

The default path shoots the radial ODE from a series start at the origin,
bisects the amplitude on the overshoot/undershoot dichotomy, glues a
modified-Bessel tail past the point where the two bracketing trajectories
separate, and finishes with a Newton polish of the discrete equation on the
grid. The equation is solved on an odd refinement of the working grid and
restricted back, so the identities are measured on the finer solution.
constrained_minimize_T is an independent variational path.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import integrate, linalg, special

from config import config
from errors import (
    CharacterizationError,
    ConvergenceError,
    NoGroundStateFound,
    NumericalError,
    ParameterDomainError,
    ProjectionError,
    ResolutionError,
)
from field_core import (
    ModelParams,
    RadialField,
    RadialGrid,
    VirialIndex,
    apply_bands,
    banded,
    laplacian_bands,
    load_field_csv,
    make_params,
    regrid,
    rescale,
    restrict,
    save_field_csv,
)
from functionals import (
    T_coefficients,
    T_from_norms,
    gn_quotient,
    norms,
    record_for_profile,
    virial_coefficients,
    virial_from_norms,
)
from schemas import CheckResult, FunctionalRecord, GridMeta, GroundStateMeta

logger = logging.getLogger(__name__)

CROSSES = "Crosses"
REBOUNDS = "Rebounds"
DECAYS = "Decays"

_MAX_EXPANSIONS = 60
_MAX_ITERS = 200
_REBOUND_FLOOR = 1e-8
_JUNCTION_RTOL = 1e-8
_TAIL_FLOOR = 1e-10
_NEWTON_ITERS = 30
_MIN_DAMPING = 1.0 / 64
# Residual window for the unpolished profile: away from the r^σ origin layer
# and inside the junction.
_TRUNCATION_R_MIN = 1.0


@dataclass(frozen=True)
class ShotResult:
    """One outward integration on the adaptive ODE mesh."""

    amplitude: float
    r: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    classification: str
    r_stop: float
    dense: Any = field(repr=False, compare=False, default=None)
    r_start: float = 0.0

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.dense(r)[0]


@dataclass(frozen=True)
class GroundState:
    params: ModelParams
    profile: RadialField
    amplitude: float
    residual: float
    record: FunctionalRecord
    r_level: float
    truncation_residual: Optional[float] = None
    scan_log: Tuple[Dict[str, Any], ...] = ()
    checks: Dict[str, Any] = field(default_factory=dict)
    method: str = "shoot"
    solve_profile: Optional[RadialField] = field(default=None, compare=False)

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid

    @property
    def solution(self) -> RadialField:
        """The profile the record was computed from; finer than grid when refined."""
        return self.solve_profile if self.solve_profile is not None else self.profile

    @property
    def q(self) -> np.ndarray:
        return self.profile.values.real


def series_coefficients(params: ModelParams) -> Tuple[float, float]:
    """(c₂, c_p) of Q ≈ a r^σ(1 + c₂r²) + c_p a^p r^{pσ+2}."""
    sigma, p = params.sigma, params.p
    c2 = (1 - params.omega ** 2) / (2 * (2 * sigma + params.d))
    cp = -1.0 / ((p * sigma + 2) * (p * sigma + params.d) - params.gamma)
    return c2, cp


def _series(params: ModelParams, a: float, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    sigma, p = params.sigma, params.p
    c2, cp = series_coefficients(params)
    q = a * r ** sigma * (1 + c2 * r ** 2) + cp * a ** p * r ** (p * sigma + 2)
    dq = (a * (sigma * r ** (sigma - 1) + c2 * (sigma + 2) * r ** (sigma + 1))
          + cp * a ** p * (p * sigma + 2) * r ** (p * sigma + 1))
    return q, dq


def _start_radius(params: ModelParams, h: float) -> float:
    return min(h / 2, 1e-3 / params.kappa)


def shoot(params: ModelParams, a: float, r_end: float, h: float = 2e-3,
          rtol: Optional[float] = None) -> ShotResult:
    """Integrate the radial ODE outward from the series start with amplitude a."""
    if a <= 0:
        raise ParameterDomainError(f"shooting amplitude must be positive, got {a}")
    if params.gamma < 0:
        raise ParameterDomainError("shooting needs gamma >= 0")
    d, p, gamma = params.d, params.p, params.gamma
    k2 = 1 - params.omega ** 2
    r0 = _start_radius(params, h)
    q0, dq0 = _series(params, a, np.array(r0))

    def rhs(r, y):
        q, dq = y
        return [dq, -(d - 1) / r * dq + gamma / r ** 2 * q + k2 * q - abs(q) ** (p - 1) * q]

    def crosses(r, y):
        return y[0]
    crosses.terminal = True
    crosses.direction = -1

    def rebounds(r, y):
        return y[1]
    rebounds.terminal = True
    rebounds.direction = 1

    sol = integrate.solve_ivp(rhs, (r0, r_end), [float(q0), float(dq0)], method="DOP853",
                              rtol=rtol or config.SHOOT_RTOL, atol=1e-14 * min(a, 1.0),
                              events=(crosses, rebounds), dense_output=True)
    if sol.status == -1:
        raise NumericalError(f"shooting failed at a={a}: {sol.message}", last_good_r=float(sol.t[-1]))

    q_end, dq_end = sol.y[0, -1], sol.y[1, -1]
    if sol.t_events[0].size:
        kind = CROSSES
    elif sol.t_events[1].size:
        kind = REBOUNDS if q_end > _REBOUND_FLOOR * a else DECAYS
    else:
        kind = REBOUNDS if dq_end >= 0 else DECAYS
    return ShotResult(a, sol.t, sol.y[0], sol.y[1], kind, float(sol.t[-1]), sol.sol, r0)


def discrete_residual(values: np.ndarray, grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """Δ_γ Q − (1−ω²)Q + |Q|^{p−1}Q at every node."""
    lap = apply_bands(laplacian_bands(grid, params.gamma), values.astype(float))
    return lap - (1 - params.omega ** 2) * values + np.abs(values) ** (params.p - 1) * values


def polish(values: np.ndarray, grid: RadialGrid, params: ModelParams,
           tol_res: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """Damped Newton iteration on the discrete equation with tridiagonal solves."""
    tol_res = tol_res or config.TOL_RES
    q = np.asarray(values, dtype=float).copy()
    lower, diag, upper = laplacian_bands(grid, params.gamma)
    k2 = 1 - params.omega ** 2
    res = discrete_residual(q, grid, params)
    best = float(np.max(np.abs(res)))
    for it in range(_NEWTON_ITERS):
        jac_diag = diag - k2 + params.p * np.abs(q) ** (params.p - 1)
        step = linalg.solve_banded((1, 1), banded(lower, jac_diag, upper), -res)
        tau = 1.0
        while tau >= _MIN_DAMPING:
            trial = q + tau * step
            trial_res = discrete_residual(trial, grid, params)
            norm = float(np.max(np.abs(trial_res)))
            if np.isfinite(norm) and norm < best:
                break
            tau /= 2
        else:
            logger.debug(f"newton {it}: no decrease down to damping {_MIN_DAMPING:g}")
            break
        logger.debug(f"newton {it}: residual {norm:.3e} (damping {tau:g})")
        q, res, best = trial, trial_res, norm
        if best <= 1e-3 * tol_res:
            break
    return q, best


def _bracket(params: ModelParams, r_end: float, h: float) -> Tuple[ShotResult, ShotResult, List[Dict[str, Any]]]:
    scan_log: List[Dict[str, Any]] = []

    def attempt(a: float) -> ShotResult:
        shot = shoot(params, a, r_end, h)
        scan_log.append({"a": a, "classification": shot.classification, "r_stop": shot.r_stop})
        return shot

    a = 1.0
    shot = attempt(a)
    lo = hi = None
    if shot.classification == CROSSES:
        hi = shot
    else:
        lo = shot
    expansions = 0
    while lo is None or hi is None:
        if expansions == _MAX_EXPANSIONS:
            raise NoGroundStateFound(
                f"no overshoot/undershoot bracket for {params.to_dict()} within {_MAX_EXPANSIONS} expansions",
                scan_log)
        expansions += 1
        a = a / 2 if lo is None else a * 2
        shot = attempt(a)
        if shot.classification == CROSSES:
            hi = shot
        else:
            lo = shot

    for _ in range(_MAX_ITERS):
        if hi.amplitude - lo.amplitude <= 4 * np.finfo(float).eps * hi.amplitude:
            break
        mid = 0.5 * (lo.amplitude + hi.amplitude)
        if not lo.amplitude < mid < hi.amplitude:
            break
        shot = attempt(mid)
        if shot.classification == CROSSES:
            hi = shot
        else:
            lo = shot
    logger.info(f"Amplitude bracket [{lo.amplitude:.17g}, {hi.amplitude:.17g}] after {len(scan_log)} shots")
    return lo, hi, scan_log


def _junction(lo: ShotResult, hi: ShotResult) -> float:
    """Largest r up to which the bracketing trajectories agree."""
    r_common = min(lo.r_stop, hi.r_stop)
    mesh = np.linspace(lo.r_start, r_common, 4000)
    q_lo, q_hi = lo(mesh), hi(mesh)
    scale = np.maximum(np.abs(q_lo), 1e-300)
    apart = np.abs(q_lo - q_hi) > _JUNCTION_RTOL * scale
    # past the maximum, where the profile is already decaying
    peak = int(np.argmax(q_lo))
    apart[:peak + 1] = False
    if not apart.any():
        return float(mesh[-1])
    first = int(np.argmax(apart))
    return float(mesh[max(first - 1, peak)])


def _bessel_tail(params: ModelParams, r: np.ndarray, r_j: float, q_j: float) -> np.ndarray:
    """Decaying linear solution r^{1−d/2} K_ν(κr) matched to q_j at r_j."""
    kappa, nu, d = params.kappa, params.nu, params.d
    ratio = special.kve(nu, kappa * r) / special.kve(nu, kappa * r_j)
    return q_j * (r / r_j) ** (1 - d / 2) * ratio * np.exp(-kappa * (r - r_j))


def sample_on_grid(params: ModelParams, grid: RadialGrid, lo: ShotResult, r_j: float) -> np.ndarray:
    r = grid.r
    q = np.empty(grid.n)
    inner = r < lo.r_start
    mid = (~inner) & (r <= r_j)
    outer = r > r_j
    if inner.any():
        q[inner] = _series(params, lo.amplitude, r[inner])[0]
    q[mid] = lo(r[mid])
    if outer.any():
        q[outer] = _bessel_tail(params, r[outer], r_j, float(lo(np.array([r_j]))[0]))
    return q


def fit_tail_rate(profile: RadialField) -> float:
    """Slope of log(r^{(d−1)/2} Q) over the outer part of the domain."""
    grid = profile.grid
    r, q = grid.r, np.abs(profile.values)
    alive = q > _TAIL_FLOOR * q.max()
    window = alive & (r >= grid.r_max / 2) & (r <= 0.9 * grid.r_max)
    if window.sum() < 8:
        peak = int(np.argmax(q))
        candidates = np.flatnonzero(alive & (np.arange(grid.n) > peak))
        if candidates.size < 8:
            raise ResolutionError("too few resolved tail nodes for a decay fit")
        window = np.zeros(grid.n, dtype=bool)
        window[candidates[-max(8, candidates.size // 4):]] = True
    y = np.log(r[window] ** ((grid.d - 1) / 2) * q[window])
    slope, _ = np.polyfit(r[window], y, 1)
    return float(slope)


def pohozaev_suite(gs: GroundState) -> Dict[str, float]:
    """|K^{α,β}(Q)| / (mass + kinetic) for the canonical and Nehari indices."""
    rec = gs.record
    scale = rec.mass + rec.kinetic
    out = {}
    for name in ("d2", "2pm1", "0m1", "10"):
        idx = VirialIndex.named(name, gs.params)
        out[name] = abs(virial_from_norms(gs.params, idx, rec.mass, rec.kinetic, rec.potential)) / scale
    return out


def extrapolated_pohozaev(gs_h: GroundState, gs_h2: GroundState) -> Dict[str, float]:
    """Richardson combination (4K_{h/2} − K_h)/3 of two resolutions, relative."""
    if not math.isclose(gs_h.grid.h, 2 * gs_h2.grid.h, rel_tol=1e-12):
        raise ResolutionError("extrapolation needs grids with spacing h and h/2")
    out = {}
    scale = gs_h2.record.mass + gs_h2.record.kinetic
    for name in ("d2", "2pm1", "0m1"):
        idx = VirialIndex.named(name, gs_h.params)
        k_h = virial_from_norms(gs_h.params, idx, gs_h.record.mass, gs_h.record.kinetic, gs_h.record.potential)
        k_h2 = virial_from_norms(gs_h2.params, idx, gs_h2.record.mass, gs_h2.record.kinetic,
                                 gs_h2.record.potential)
        out[name] = abs(4 * k_h2 - k_h) / 3 / scale
    return out


def _validate(gs: GroundState, tol_k: float) -> GroundState:
    """Record the invariant checks; validation_checks turns them into report entries."""
    params, q = gs.params, gs.q
    checks = dict(gs.checks)
    peak = int(np.argmax(q))
    checks["monotone_tail"] = bool(np.all(np.diff(q[peak:]) <= 1e-14 * q[peak]))
    suite = pohozaev_suite(gs)
    checks["pohozaev"] = suite
    checks["pohozaev_tol"] = tol_k
    worst = max(suite.values())
    checks["pohozaev_ok"] = worst <= tol_k
    if worst > tol_k:
        logger.warning(f"Pohozaev suite above tolerance: worst {worst:.3e} > {tol_k:.1e}")
    try:
        slope = fit_tail_rate(gs.profile)
        checks["tail_rate"] = slope
        checks["tail_bound_ok"] = slope <= -1 / (params.d + 2)
        if params.kappa >= 2 / (params.d + 2):
            checks["tail_sharp_ok"] = abs(slope + params.kappa) <= 0.02 * params.kappa
        if not checks["tail_bound_ok"] or not checks.get("tail_sharp_ok", True):
            logger.warning(f"Tail rate {slope:.4f} vs expected {-params.kappa:.4f}")
    except ResolutionError as e:
        checks["tail_fit_error"] = str(e)
        logger.warning(f"Tail fit skipped: {e}")
    return replace(gs, checks=checks)


def validation_checks(gs: GroundState) -> List[CheckResult]:
    """Pass/fail entries for everything _validate recorded."""
    checks, params = gs.checks, gs.params
    tol_k = checks.get("pohozaev_tol", config.TOL_K)
    out = [CheckResult.bound(f"pohozaev_{name}", value, tol_k)
           for name, value in checks.get("pohozaev", {}).items()]
    if "monotone_tail" in checks:
        out.append(CheckResult(name="monotone_tail", status="pass" if checks["monotone_tail"] else "fail"))
    if "tail_bound_ok" in checks:
        out.append(CheckResult(name="tail_bound", status="pass" if checks["tail_bound_ok"] else "fail",
                               worst_value=checks["tail_rate"], tolerance=-1 / (params.d + 2)))
    if "tail_sharp_ok" in checks:
        out.append(CheckResult(name="tail_sharp", status="pass" if checks["tail_sharp_ok"] else "fail",
                               worst_value=abs(checks["tail_rate"] + params.kappa),
                               tolerance=0.02 * params.kappa))
    if "tail_fit_error" in checks:
        out.append(CheckResult(name="tail_bound", status="fail", detail=checks["tail_fit_error"]))
    return out


def _positive(grid: RadialGrid, values: np.ndarray) -> RadialField:
    peak = np.abs(values).max()
    if values.min() < -1e-10 * peak:
        raise NumericalError(f"profile is not positive (min {values.min():.3e})")
    return RadialField(grid, np.abs(values))


def solve_grid_for(grid: RadialGrid) -> RadialGrid:
    """Odd refinement of grid on which the discrete equation is solved."""
    m = config.SOLVE_REFINE
    return grid.refined(m) if m > 1 else grid


def _settle(params: ModelParams, grid: RadialGrid, start: RadialField, amplitude: float,
            tol_res: float, **extra) -> GroundState:
    """Polish on start.grid, restrict to grid and polish again there."""
    values, residual = polish(start.values.real, start.grid, params, tol_res)
    if residual > tol_res:
        logger.error(f"Polished residual {residual:.3e} exceeds {tol_res:.1e}")
        raise NumericalError(f"ground-state residual {residual:.3e} > {tol_res:.1e}")
    solution = _positive(start.grid, values)
    checks = dict(extra.pop("checks", {}))
    if start.grid == grid:
        profile, grid_residual, solve_profile = solution, residual, None
    else:
        coarse, grid_residual = polish(restrict(solution, grid).values.real, grid, params, tol_res)
        if grid_residual > tol_res:
            raise NumericalError(f"restricted profile residual {grid_residual:.3e} > {tol_res:.1e}")
        profile, solve_profile = _positive(grid, coarse), solution
    checks.update(grid_residual=grid_residual, solve_n=start.grid.n)
    record = record_for_profile(solution, params)
    return GroundState(params=params, profile=profile, amplitude=amplitude, residual=residual,
                       record=record, r_level=record.S, checks=checks, solve_profile=solve_profile, **extra)


def find_ground_state(params: ModelParams, grid: RadialGrid, tol_res: Optional[float] = None,
                      tol_k: Optional[float] = None) -> GroundState:
    """Shooting, tail matching and polish on the solve grid; validates the result."""
    tol_res = tol_res or config.TOL_RES
    tol_k = tol_k or config.TOL_K
    if params.p >= 1 + 4 / (params.d - 2):
        raise ParameterDomainError("ground states are computed for p < 1 + 4/(d-2) only")
    if grid.d != params.d:
        raise ParameterDomainError("grid and parameters disagree on d")

    fine = solve_grid_for(grid)
    lo, hi, scan_log = _bracket(params, grid.r_max, fine.h)
    r_j = _junction(lo, hi)
    sampled = sample_on_grid(params, fine, lo, r_j)

    window = (fine.r >= _TRUNCATION_R_MIN) & (fine.r <= r_j)
    truncation = float(np.max(np.abs(discrete_residual(sampled, fine, params)[window]))) if window.any() else None

    amplitude = 0.5 * (lo.amplitude + hi.amplitude)
    gs = _settle(params, grid, RadialField(fine, sampled), amplitude, tol_res, truncation_residual=truncation,
                 scan_log=tuple(scan_log), checks={"junction": r_j}, method="shoot")
    gs = _validate(gs, tol_k)
    logger.info(f"Ground state d={params.d} p={params.p:g} gamma={params.gamma:g} "
                f"omega={params.omega:g}: a={amplitude:.10g} S={gs.r_level:.12g} residual={gs.residual:.2e} "
                f"(solved on n={fine.n})")
    return gs


def scan_amplitudes(params: ModelParams, grid: RadialGrid, a_lo: float, a_hi: float,
                    n: int = 10) -> List[Dict[str, Any]]:
    rows = []
    for a in np.linspace(a_lo, a_hi, n):
        shot = shoot(params, float(a), grid.r_max, grid.h)
        rows.append({"a": float(a), "classification": shot.classification, "r_stop": shot.r_stop})
    return rows


def classifier_monotone(rows: List[Dict[str, Any]]) -> bool:
    """True when no undershoot appears above an overshoot."""
    crossed = False
    for row in sorted(rows, key=lambda r: r["a"]):
        if row["classification"] == CROSSES:
            crossed = True
        elif crossed:
            return False
    return True


def gn_constant_estimate(d: int, p: float, grid: RadialGrid) -> float:
    """C_GN from the γ = 0 ground state, which attains inf J."""
    gs = find_ground_state(make_params(d, p, 0.0, 0.0), grid)
    return 1.0 / gn_quotient(gs.solution, gs.params)


def rescale_omega(gs: GroundState, omega_new: float, target_grid: Optional[RadialGrid] = None,
                  tol_res: Optional[float] = None) -> GroundState:
    """Q_ω(r) = (1−ω²)^{1/(p−1)} Q_0((1−ω²)^{1/2} r), exact on the dilated grid."""
    if gs.params.omega != 0:
        raise ParameterDomainError("rescale_omega needs a ground state solved at omega = 0")
    params = gs.params.with_omega(omega_new)
    if omega_new == 0 and target_grid is None:
        return gs
    tol_res = tol_res or config.TOL_RES
    k2 = 1 - omega_new ** 2
    lam = 0.5 * math.log(k2)
    amplitude = gs.amplitude * k2 ** (1 / (gs.params.p - 1) + params.sigma / 2)
    method = f"{gs.method}+rescale"
    # e^{αλ} f(e^{βλ}·) with e^{βλ} = (1−ω²)^{1/2} and e^{αλ} = (1−ω²)^{1/(p−1)}
    scaled = rescale(gs.profile, 2 / (gs.params.p - 1), 1.0, lam)
    scaled_solution = rescale(gs.solution, 2 / (gs.params.p - 1), 1.0, lam)
    if target_grid is None:
        solution = _positive(scaled_solution.grid, scaled_solution.values.real)
        profile = _positive(scaled.grid, scaled.values.real)
        residual = float(np.max(np.abs(discrete_residual(solution.real, solution.grid, params))))
        grid_residual = float(np.max(np.abs(discrete_residual(profile.real, profile.grid, params))))
        record = record_for_profile(solution, params)
        out = GroundState(params=params, profile=profile, amplitude=amplitude, residual=residual, record=record,
                          r_level=record.S, scan_log=gs.scan_log, method=method,
                          checks={"rescaled_from": 0.0, "grid_residual": grid_residual,
                                  "solve_n": solution.grid.n},
                          solve_profile=solution if gs.solve_profile is not None else None)
    else:
        if target_grid.h < scaled.grid.h / 2 or target_grid.h > 2 * scaled.grid.h:
            raise ResolutionError(
                f"target spacing {target_grid.h:.4g} too far from rescaled spacing {scaled.grid.h:.4g}")
        moved = regrid(scaled_solution, solve_grid_for(target_grid))
        out = _settle(params, target_grid, moved, amplitude, tol_res, scan_log=gs.scan_log,
                      checks={"rescaled_from": 0.0}, method=method)
    return _validate(out, config.TOL_K)


def _degeneracy_rate(params: ModelParams, idx: VirialIndex) -> Tuple[float, str]:
    """Common growth rate of the cancelled terms and the index family."""
    d, p = params.d, params.p
    if math.isclose(idx.alpha, d) and math.isclose(idx.beta, 2):
        return 4.0, "d2"
    if math.isclose(idx.alpha, 2) and math.isclose(idx.beta, p - 1):
        return 4 - (d - 2) * (p - 1), "2pm1"
    if idx.alpha == 0 and math.isclose(idx.beta, -1):
        return float(d), "0m1"
    return 0.0, "generic"


def lagrange_degeneracy_check(gs: GroundState, idx: VirialIndex) -> float:
    """⟨K'(Q), DQ⟩ − κK(Q) from the stored norms; negative where the index characterizes.

    Derived form: (0,−1) reduces to −(d−2)‖∇_γQ‖² and (2,p−1) keeps (1−ω²) on its mass term.
    """
    params, rec = gs.params, gs.record
    d, p, a, b = params.d, params.p, idx.alpha, idx.beta
    rates = (2 * a - d * b, 2 * a - (d - 2) * b, (p + 1) * a - d * b)
    coeffs = virial_coefficients(params, idx)
    kappa, family = _degeneracy_rate(params, idx)
    value = sum(c * (e - kappa) * x for c, e, x in zip(coeffs, rates, (rec.mass, rec.kinetic, rec.potential)))

    if family in ("d2", "2pm1") and params.regime == "mass_critical":
        return 0.0
    valid = (family == "0m1"
             or (family == "d2" and params.regime == "mass_super")
             or (family == "2pm1" and params.regime == "mass_sub"))
    if valid and not value < 0:
        raise CharacterizationError(f"Lagrange pairing for {idx.label} is {value:.3e}, expected < 0")
    if not valid:
        logger.info(f"Index {idx.label} outside its characterizing regime; pairing {value:.3e}")
    return float(value)


def mass_critical_closed_form(gs: GroundState, c_gn: Optional[float] = None) -> float:
    """(1−ω²)/2 {(d+2)/(d C_GN)}^{d/2}; C_GN defaults to 1/J_γ(Q)."""
    params = gs.params
    if params.regime != "mass_critical":
        raise ParameterDomainError("closed form applies at p = 1 + 4/d only")
    c_gn = c_gn or 1.0 / gn_quotient(gs.solution, params)
    d = params.d
    return (1 - params.omega ** 2) / 2 * ((d + 2) / (d * c_gn)) ** (d / 2)


def mass_critical_nu(gs: GroundState, c_gn: Optional[float] = None) -> float:
    """ν with ν² = 1/((d+2) r^{d,2}), r^{d,2} = S(Q)."""
    params = gs.params
    if params.regime != "mass_critical":
        raise ParameterDomainError("mass_critical_nu needs p = 1 + 4/d")
    r_level = gs.r_level
    closed = mass_critical_closed_form(gs, c_gn)
    rel = abs(closed - r_level) / r_level
    logger.info(f"r^(d,2)={r_level:.10g} closed form={closed:.10g} (rel {rel:.2e})")
    return math.sqrt(1.0 / ((params.d + 2) * r_level))


def _kinetic_matrix(grid: RadialGrid, gamma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands of A with fᵀAf = kinetic_gamma(f)."""
    lower, diag, upper = laplacian_bands(grid, gamma)
    w = grid.weights
    return -w * lower, -w * diag, -w * upper


def _project(f: np.ndarray, params: ModelParams, idx: VirialIndex, grid: RadialGrid) -> np.ndarray:
    """Scale f so that K(λf) = λ²A − λ^{p+1}B vanishes."""
    c_mass, c_kin, c_pot = virial_coefficients(params, idx)
    mass, kinetic, potential = norms(RadialField(grid, f), params)
    a_coef = c_mass * mass + c_kin * kinetic
    b_coef = -c_pot * potential
    if a_coef <= 0 or b_coef <= 0:
        raise ProjectionError(f"K(lambda f) has no positive root (A={a_coef:.3e}, B={b_coef:.3e})")
    return (a_coef / b_coef) ** (1 / (params.p - 1)) * f


def _gradient(f: np.ndarray, coeffs: Tuple[float, float, float], kinetic_bands, w: np.ndarray,
              p: float) -> np.ndarray:
    c_mass, c_kin, c_pot = coeffs
    return (2 * c_mass * w * f + 2 * c_kin * apply_bands(kinetic_bands, f)
            + (p + 1) * c_pot * w * np.abs(f) ** (p - 1) * f)


def constrained_minimize_T(params: ModelParams, grid: RadialGrid, idx: VirialIndex,
                           seed_field: Optional[RadialField] = None, max_iter: Optional[int] = None,
                           tol: float = 1e-9, tol_res: Optional[float] = None) -> GroundState:
    """Minimize T^{α,β} on {K^{α,β} = 0} by projected Sobolev-gradient descent.

    The minimizer is polished on the solve grid like the shooting output and
    validated; a step that cannot lower T raises ConvergenceError.
    """
    idx.check_admissible(params)
    max_iter = max_iter or config.MAX_DESCENT_ITERS
    w, p = grid.weights, params.p
    kin = _kinetic_matrix(grid, params.gamma)
    ab = np.zeros((2, grid.n))
    ab[0, 1:] = kin[2][:-1]
    ab[1, :] = kin[1] + w

    def precondition(g: np.ndarray) -> np.ndarray:
        return linalg.solveh_banded(ab, g)

    t_coeffs = T_coefficients(params, idx)
    k_coeffs = virial_coefficients(params, idx)

    def T_of(f: np.ndarray) -> float:
        return T_from_norms(params, idx, *norms(RadialField(grid, f), params))

    if seed_field is None:
        seed = grid.r ** params.sigma * np.exp(-grid.r ** 2 / 4)
    else:
        seed = np.abs(seed_field.values)
    f = _project(np.abs(seed), params, idx, grid)
    t_old = T_of(f)
    history = [t_old]

    for it in range(1, max_iter + 1):
        g_t = _gradient(f, t_coeffs, kin, w, p)
        g_k = _gradient(f, k_coeffs, kin, w, p)
        G = precondition(g_t)
        N = precondition(g_k)
        G = G - (G @ g_k) / (N @ g_k) * N
        tau, accepted = 1.0, None
        for _ in range(40):
            trial = _project(np.abs(f - tau * G), params, idx, grid)
            t_trial = T_of(trial)
            if t_trial < t_old:
                accepted = (trial, t_trial)
                break
            tau /= 2
        if accepted is None:
            # the first-order decrease of a full step already meets the stopping rule
            predicted = float(G @ g_t) / abs(t_old)
            if predicted < tol:
                logger.debug(f"descent stationary at iteration {it} (predicted decrease {predicted:.2e})")
                break
            logger.error(f"Constrained descent on {idx.label} stalled at iteration {it}")
            raise ConvergenceError(f"constrained descent stalled at iteration {it}: no step lowers T",
                                   diagnostics={"T": t_old, "history_tail": history[-10:], "iteration": it,
                                                "predicted_decrease": predicted})
        f, t_new = accepted
        history.append(t_new)
        change = (t_old - t_new) / abs(t_old)
        t_old = t_new
        if change < tol:
            break
    else:
        raise ConvergenceError(f"constrained descent hit {max_iter} iterations",
                               diagnostics={"T": t_old, "history_tail": history[-10:], "iteration": max_iter})

    descent_residual = float(np.max(np.abs(discrete_residual(f, grid, params))))
    amplitude = float(f[0] / grid.r[0] ** params.sigma)
    fine = solve_grid_for(grid)
    start = RadialField(grid, f) if fine == grid else regrid(RadialField(grid, f), fine)
    start = start.with_values(np.abs(start.values.real))
    gs = _settle(params, grid, start, amplitude, tol_res or config.TOL_RES,
                 checks={"iterations": len(history) - 1, "index": idx.label, "T": t_old,
                         "descent_residual": descent_residual},
                 method="minimize")
    gs = _validate(gs, config.TOL_K)
    logger.info(f"Constrained descent on {idx.label}: T={t_old:.12g} after {len(history) - 1} steps, "
                f"residual {descent_residual:.2e} before polish")
    return gs


def save_ground_state(gs: GroundState, directory: Union[str, Path]) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_field_csv(gs.profile, out / "profile.csv")
    if gs.solve_profile is not None:
        save_field_csv(gs.solve_profile, out / "solution.csv")
    (out / "record.json").write_text(gs.record.model_dump_json(indent=2))
    meta = GroundStateMeta(
        params={"d": gs.params.d, "p": gs.params.p, "gamma": gs.params.gamma, "omega": gs.params.omega},
        amplitude=gs.amplitude, residual=gs.residual, truncation_residual=gs.truncation_residual,
        r_level=gs.r_level, method=gs.method, grid=GridMeta(**gs.grid.meta()),
        tolerances={"tol_res": config.TOL_RES, "tol_k": config.TOL_K, "solve_refine": config.SOLVE_REFINE},
        checks=json.loads(json.dumps(gs.checks, default=float)),
    )
    (out / "meta.json").write_text(meta.model_dump_json(indent=2))
    return out


def load_ground_state(directory: Union[str, Path]) -> GroundState:
    src = Path(directory)
    meta = GroundStateMeta.model_validate_json((src / "meta.json").read_text())
    params = make_params(**meta.params)
    profile = load_field_csv(src / "profile.csv", params.d)
    record = FunctionalRecord.model_validate_json((src / "record.json").read_text())
    solution = load_field_csv(src / "solution.csv", params.d) if (src / "solution.csv").exists() else None
    return GroundState(params=params, profile=profile, amplitude=meta.amplitude, residual=meta.residual,
                       record=record, r_level=meta.r_level, truncation_residual=meta.truncation_residual,
                       checks=meta.checks, method=meta.method, solve_profile=solution)
