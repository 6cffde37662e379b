"""Trajectory monitors, localized virial weights and post-run audits."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_trapezoid

from errors import DiscretizationError, InconsistencyError, ParameterDomainError, ResolutionError
from evolution import TrajectoryRecord, philox
from field_core import (
    ModelParams,
    RadialField,
    RadialGrid,
    StateSnapshot,
    VirialIndex,
    grad_sq,
    h1_sq,
    inner,
    kinetic_pairing,
    l2_sq,
    radial_derivative,
    restricted_lp_pow,
)
from functionals import (
    gn_quotient,
    hardy_margin,
    norms,
    radial_sobolev_ratio,
    virial_from_norms,
)
from schemas import AuditReport, CheckResult

logger = logging.getLogger(__name__)

# Quintic smoothstep P(s) = 6s⁵ − 15s⁴ + 10s³.
_SMOOTHSTEP = Polynomial([0, 0, 0, 10, -15, 6])


@dataclass(frozen=True)
class WeightPair:
    """Φ_R, Ψ_R and the analytic Ψ_R' sampled on a grid."""

    R: float
    grid: RadialGrid
    phi: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray

    @property
    def tag(self) -> str:
        return f"{self.R:g}"


def build_weights(grid: RadialGrid, R: float) -> WeightPair:
    """Φ = d on r ≤ R, d·P((2R−r)/R) on the transition, 0 beyond 2R; Ψ = r^{1−d}∫s^{d−1}Φ."""
    if R <= 0 or 2 * R >= grid.r_max:
        raise ParameterDomainError(f"weights need 0 < 2R < r_max, got R={R}, r_max={grid.r_max}")
    d, r = grid.d, grid.r
    transition = _SMOOTHSTEP(Polynomial([2.0, -1.0 / R]))
    integrand = (d * transition * Polynomial.basis(d - 1)).integ()

    inside = r <= R
    ramp = (r > R) & (r < 2 * R)
    phi = np.where(inside, float(d), 0.0)
    phi[ramp] = d * transition(r[ramp])

    moment = np.empty_like(r)
    moment[inside] = r[inside] ** d
    moment[ramp] = R ** d + integrand(r[ramp]) - integrand(R)
    moment[~(inside | ramp)] = R ** d + integrand(2 * R) - integrand(R)
    psi = moment * r ** (1 - d)
    dpsi = (1 - d) * moment * r ** (-d) + phi

    if np.any(np.diff(phi) > 1e-12) or phi.min() < -1e-12 or phi.max() > d + 1e-12:
        raise DiscretizationError("Phi_R must decrease from d to 0")
    if np.any(np.abs(psi[inside] - r[inside]) > 1e-12 * r[inside]):
        raise DiscretizationError("Psi_R must equal r on r <= R")
    if np.any(dpsi > 1 + 1e-10):
        raise DiscretizationError("Psi_R' exceeds 1")
    identity = dpsi + (d - 1) * psi / r - phi
    if np.max(np.abs(identity)) > 1e-8 * d:
        raise DiscretizationError("Psi_R' + (d-1)Psi_R/r != Phi_R")
    return WeightPair(float(R), grid, phi, psi, dpsi)


def virial_I(s: StateSnapshot, w: WeightPair, params: ModelParams):
    """(I¹_R, I²_R) = (2Re∫Ψ∂_r u v̄ + Re∫Φ u v̄, I¹_R + q Re∫u v̄)."""
    weights = s.grid.weights
    du = radial_derivative(s.u)
    vbar = np.conj(s.v.values)
    i1 = (2 * np.sum(weights * w.psi * du * vbar).real
          + np.sum(weights * w.phi * s.u.values * vbar).real)
    i2 = i1 + params.q * inner(s.u, s.v).real
    return float(i1), float(i2)


def phase_space_distance(s: StateSnapshot, gs, theta: float = 0.0) -> float:
    """‖(u, v) − (e^{iθ}Q, iωe^{iθ}Q)‖_{H¹×L²}."""
    if s.grid != gs.grid:
        raise DiscretizationError("snapshot and ground state live on different grids")
    phase = np.exp(1j * theta)
    q = gs.profile.values
    du = RadialField(s.grid, s.u.values - phase * q)
    dv = RadialField(s.grid, s.v.values - 1j * gs.params.omega * phase * q)
    return math.sqrt(h1_sq(du, gs.params.gamma) + l2_sq(dv))


def orbit_distance(s: StateSnapshot, gs) -> float:
    """Distance to the phase orbit of (Q, iωQ), minimized at θ* = arg z."""
    if s.grid != gs.grid:
        raise DiscretizationError("snapshot and ground state live on different grids")
    q = gs.profile
    z = (inner(s.u, q) + kinetic_pairing(s.u, q, gs.params.gamma)
         + gs.params.omega * inner(s.v, q.scale(1j)))
    theta = float(np.angle(z)) if z != 0 else 0.0
    return phase_space_distance(s, gs, theta)


class ConservationMonitor:
    """Norms, energy, charge and the virial functionals at every sample."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.indices = {name: VirialIndex.named(name, params) for name in ("d2", "2pm1", "0m1")}
        self.columns = ["mass", "kinetic", "potential", "E", "C", "L", "H1", "K_d2", "K_2pm1",
                        "K_0m1", "K1", "K", "f", "fprime", "v_sq"]

    def sample(self, s: StateSnapshot) -> Dict[str, float]:
        params = self.params
        mass, kinetic, potential = norms(s.u, params)
        v_sq = l2_sq(s.v)
        pairing = inner(s.u, s.v)
        energy = kinetic / 2 + mass / 2 - potential / (params.p + 1) + v_sq / 2
        row = {"mass": mass, "kinetic": kinetic, "potential": potential, "E": energy,
               "C": pairing.imag, "L": energy + params.omega * pairing.imag,
               "H1": math.sqrt(mass + kinetic + v_sq), "f": mass, "fprime": 2 * pairing.real,
               "v_sq": v_sq}
        for name, idx in self.indices.items():
            row[f"K_{name}"] = virial_from_norms(params, idx, mass, kinetic, potential)
        row["K1"] = mass + kinetic - potential - v_sq
        row["K"] = row["K_d2"] + params.q * row["K1"]
        return row


class OrbitMonitor:
    def __init__(self, gs):
        self.gs = gs
        self.columns = ["orbit_dist"]

    def sample(self, s: StateSnapshot) -> Dict[str, float]:
        return {"orbit_dist": orbit_distance(s, self.gs)}


class VirialMonitor:
    """I¹_R, I²_R and the exterior potential ‖u‖^{p+1}_{L^{p+1}(r≥R)}."""

    def __init__(self, weights: WeightPair, params: ModelParams, tagged: bool = False):
        self.weights = weights
        self.params = params
        suffix = f"@{weights.tag}" if tagged else ""
        self.names = (f"I_R1{suffix}", f"I_R2{suffix}", f"tail_pot{suffix}")
        self.columns = list(self.names)

    def sample(self, s: StateSnapshot) -> Dict[str, float]:
        i1, i2 = virial_I(s, self.weights, self.params)
        tail = restricted_lp_pow(s.u, self.params.p + 1, self.weights.R)
        return dict(zip(self.names, (i1, i2, tail)))


def _virial_columns(traj: TrajectoryRecord, w: WeightPair):
    for suffix in (f"@{w.tag}", ""):
        if f"I_R1{suffix}" in traj:
            return f"I_R1{suffix}", f"I_R2{suffix}", f"tail_pot{suffix}"
    raise KeyError(f"trajectory has no virial columns for R={w.R:g}")


def _require_sampling(traj: TrajectoryRecord, max_spacing: float) -> None:
    if len(traj) < 5:
        raise ResolutionError(f"audit needs at least 5 samples, got {len(traj)}")
    if traj.max_spacing > max_spacing:
        raise ResolutionError(f"sample spacing {traj.max_spacing:.3g} exceeds {max_spacing:.3g}")


def localized_virial_audit(traj: TrajectoryRecord, weights_list: Sequence[WeightPair], params: ModelParams,
                  c0_floor: float = 1e-2, max_spacing: float = 0.05) -> AuditReport:
    """Empirical C_0 in −dI/dt ≤ K + d(p−1)/(p+1)·tail + C_0/R²·mass, for both I¹ and I²."""
    _require_sampling(traj, max_spacing)
    t = traj.t
    tail_coeff = params.d * (params.p - 1) / (params.p + 1)
    mass = traj["mass"]
    report = AuditReport(name="localized_virial")
    fitted: Dict[str, List[float]] = {"1": [], "2": []}
    for w in weights_list:
        c1, c2, ctail = _virial_columns(traj, w)
        for label, col, target in (("1", c1, "K_d2"), ("2", c2, "K")):
            rate = -np.gradient(traj[col], t, edge_order=2)
            rho = (rate - traj[target] - tail_coeff * traj[ctail])[1:-1]
            scaled = rho * w.R ** 2 / np.maximum(mass[1:-1], 1e-300)
            c0 = max(float(np.max(scaled)), 0.0)
            k = int(np.argmax(scaled))
            fitted[label].append(c0)
            report.constants[f"C0_{label}@{w.tag}"] = c0
            report.checks.append(CheckResult(name=f"rho{label}@{w.tag}", status="info",
                                             worst_t=float(t[1:-1][k]), worst_value=float(np.max(rho))))
    for label, values in fitted.items():
        for a, b in zip(values, values[1:]):
            stable = (max(a, b) <= c0_floor) or (min(a, b) > 0 and max(a, b) / min(a, b) <= 2.0)
            ratio = max(a, b) / min(a, b) if min(a, b) > 0 else math.inf
            report.checks.append(CheckResult(name=f"C0_{label}_stable", status="pass" if stable else "fail",
                                             worst_value=ratio, tolerance=2.0,
                                             detail=f"C0 values {a:.4g}, {b:.4g}"))
    report.constants["C0_est"] = max(fitted["1"]) if fitted["1"] else None
    return report


def virial_rate_check(traj: TrajectoryRecord, w: WeightPair, params: ModelParams, delta: float, regime: str,
                      c0: Optional[float] = None, factor: float = 0.9) -> CheckResult:
    """min dI/dt against factor·δ on the samples where the localized bound applies.

    dI/dt ≥ δ − d(p−1)/(p+1)·tail − C_0/R²·mass while K ≤ −δ, so a sample is
    graded only when those exterior terms stay below (1 − factor)·δ. I¹ is
    graded in the mass-supercritical regime and I² otherwise.
    """
    name = "virial_rate"
    tolerance = factor * delta
    if len(traj) < 5:
        return CheckResult(name=name, status="info", tolerance=tolerance, detail="too few samples before blow-up")
    c1, c2, ctail = _virial_columns(traj, w)
    column = c1 if regime == "mass_super" else c2
    t = traj.t
    rate = np.gradient(traj[column], t, edge_order=2)
    tail_coeff = params.d * (params.p - 1) / (params.p + 1)
    exterior = tail_coeff * traj[ctail] + (c0 or 0.0) / w.R ** 2 * traj["mass"]
    usable = exterior <= (1 - factor) * delta
    usable[[0, -1]] = False
    if not usable.any():
        return CheckResult(name=name, status="info", tolerance=tolerance,
                           detail=f"{column}: exterior terms exceed (1-{factor:g})*delta on every sample")
    graded = np.flatnonzero(usable)
    j = int(graded[np.argmin(rate[graded])])
    status = "pass" if rate[j] >= tolerance else "fail"
    return CheckResult(name=name, status=status, worst_t=float(t[j]), worst_value=float(rate[j]),
                       tolerance=tolerance, detail=f"{column}, delta={delta:.4e}, {graded.size} samples graded")


def untruncated_virial_check(traj: TrajectoryRecord, w: WeightPair, t_window: Optional[Sequence[float]] = None,
                             tolerance: float = 0.02, max_tail_share: Optional[float] = None) -> CheckResult:
    """−dI¹/dt against K^{d,2}(u) when Ψ = r, Φ = d on the whole support.

    With max_tail_share only samples whose potential beyond R is at most that
    share of the total are compared.
    """
    c1, _, ctail = _virial_columns(traj, w)
    t = traj.t
    rate = -np.gradient(traj[c1], t, edge_order=2)
    k = traj["K_d2"]
    mask = np.ones(t.size, dtype=bool)
    mask[[0, -1]] = False
    if t_window is not None:
        mask &= (t >= t_window[0]) & (t <= t_window[1])
    if max_tail_share is not None:
        mask &= traj[ctail] <= max_tail_share * traj["potential"]
    if not mask.any():
        raise ResolutionError("empty comparison window")
    scale = max(float(np.max(np.abs(k[mask]))), 1e-300)
    err = np.abs(rate[mask] - k[mask]) / scale
    j = int(np.argmax(err))
    return CheckResult.bound("untruncated_virial", float(err[j]), tolerance, worst_t=float(t[mask][j]))


def _window_integrals(t: np.ndarray, values: np.ndarray, tau: float) -> np.ndarray:
    cum = cumulative_trapezoid(values, t, initial=0.0)
    starts = t[t + tau <= t[-1] + 1e-12]
    ends = np.interp(starts + tau, t, cum)
    return ends - cum[:starts.size]


def second_moment_audit(traj: TrajectoryRecord, params: ModelParams, tol: float = 1e-3,
                   global_run: bool = True) -> AuditReport:
    """Second-moment identity and the bounds it implies for global solutions."""
    p = params.p
    t = traj.t
    f, fp, v_sq, kin = traj["f"], traj["fprime"], traj["v_sq"], traj["kinetic"]
    e0 = float(traj["E"][0])
    report = AuditReport(name="second_moment")
    bound_status = "fail" if global_run else "info"

    rhs = (p - 1) * f + (p + 3) * v_sq + (p - 1) * kin - 2 * (p + 1) * e0
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if len(traj) >= 3:
        fpp = np.gradient(fp, t, edge_order=2)
        resid = np.abs(fpp - rhs)[1:-1] / scale
        j = int(np.argmax(resid))
        report.checks.append(CheckResult.bound("identity", float(resid[j]), tol, worst_t=float(t[1:-1][j])))
        drift = 2 * (p + 1) * float(np.max(np.abs(traj["E"] - e0))) / scale
        report.constants["identity_energy_drift"] = drift

    h = np.maximum((p - 1) * f - 2 * (p + 1) * e0, 0.0)
    running = np.minimum.accumulate(h)
    excess = h[1:] - running[:-1] - tol * scale * (1 + t[1:])
    _append_bound(report, "positive_part_nonincreasing", excess, t[1:], bound_status)

    f_cap = max(float(f[0]), 2 * (p + 1) * e0 / (p - 1))
    _append_bound(report, "mass_bound", f - f_cap - tol * scale, t, bound_status)

    root = math.sqrt((p - 1) * (p + 3))
    b = 2 * (p + 1) * e0 / root
    _append_bound(report, "fprime_upper", fp - b - tol * scale, t, bound_status)
    _append_bound(report, "fprime_lower", min(float(fp[0]), -b) - fp - tol * scale, t, bound_status)

    u0v0 = math.hypot(float(fp[0]) / 2, float(traj["C"][0]))
    F = (p - 1) * f + (p - 1) * kin + (p + 3) * v_sq
    if t[-1] - t[0] >= 1.0:
        window_F = _window_integrals(t, F, 1.0)
        cap = 2 * (p + 1) * e0 * 1.0 + 2 * b + 2 * u0v0
        _append_bound(report, "window_F", window_F - cap - tol * scale, t[:window_F.size], bound_status)
        window_norm = _window_integrals(t, f + kin + v_sq, 1.0)
        _append_bound(report, "window_norm", window_norm - cap / (p - 1) - tol * scale,
                      t[:window_norm.size], bound_status)
        report.constants["window_norm_sup"] = float(np.max(window_norm))

    if e0 < 0:
        report.flags.append("non-global predicted")
        report.checks.append(CheckResult(name="negative_energy", status="info", worst_t=0.0,
                                         worst_value=e0, detail="non-global predicted"))
    return report


def _append_bound(report: AuditReport, name: str, excess: np.ndarray, t: np.ndarray, status_on_fail: str) -> None:
    """Record max(excess); excess ≤ 0 everywhere means the bound holds."""
    if excess.size == 0:
        return
    j = int(np.argmax(excess))
    worst = float(excess[j])
    status = "pass" if worst <= 0 else status_on_fail
    detail = None if worst <= 0 else "mechanism engaged"
    report.checks.append(CheckResult(name=name, status=status, worst_t=float(t[j]), worst_value=worst,
                                     tolerance=0.0, detail=detail))


def margin_delta(gs, lam: float, params: Optional[ModelParams] = None, regime: Optional[str] = None) -> float:
    """Blow-up margin of the data (λQ, iλωQ), λ > 1."""
    params = params or gs.params
    if lam <= 1:
        raise ParameterDomainError(f"margin needs lambda > 1, got {lam}")
    rec = gs.record
    d, p, q, w = params.d, params.p, params.q, params.omega
    k2 = 1 - w ** 2
    # L(λQ, iλωQ) = S(λQ); C(λQ, iλωQ) = −ωλ²‖Q‖²
    level = lam ** 2 * (k2 / 2 * rec.mass + rec.kinetic / 2) - lam ** (p + 1) * rec.potential / (p + 1)
    charge = -w * lam ** 2 * rec.mass
    if regime is None:
        if params.regime == "mass_sub" and params.omega_c is not None and math.isclose(abs(w), params.omega_c):
            regime = "endpoint"
        else:
            regime = "mass_sub" if params.regime == "mass_sub" else "mass_super"

    if regime == "mass_super":
        delta = d * (p - 1) / 2 * (gs.r_level - level)
    elif regime == "mass_sub":
        # δ₁ + δ₂ with r^{2,p−1} = S(Q)
        delta = (q + 2) * (gs.r_level - level) + q * (-w * charge - (q + 2) * w ** 2 / k2 * gs.r_level)
    elif regime == "endpoint":
        delta = -q * w * charge - (q + 2) * level
    else:
        raise ParameterDomainError(f"unknown regime '{regime}'")
    if not delta > 0:
        raise InconsistencyError(f"blow-up margin {delta:.3e} <= 0 at lambda={lam} ({regime})")
    return float(delta)


def membership_audit(traj: TrajectoryRecord, params: ModelParams, idx_name: str, r_level: float,
                     band: float = 1e-6) -> CheckResult:
    """Sign pattern (L < r, sign K) never flips along the trajectory."""
    scale = max(abs(r_level), 1.0)
    L, K = traj["L"], traj[f"K_{idx_name}"]
    inside = L < r_level - band * scale
    if not inside[0]:
        return CheckResult(name=f"invariant_set_{idx_name}", status="info", worst_t=0.0,
                           worst_value=float(L[0] - r_level), detail="initial data outside {L < r}")
    sign0 = 1.0 if K[0] >= 0 else -1.0
    bad = (~inside) | (sign0 * K < -band * scale)
    if bad.any():
        j = int(np.argmax(bad))
        return CheckResult(name=f"invariant_set_{idx_name}", status="fail", worst_t=float(traj.t[j]),
                           worst_value=float(K[j]), tolerance=band * scale)
    side = "plus" if sign0 > 0 else "minus"
    return CheckResult(name=f"invariant_set_{idx_name}", status="pass", worst_value=float(np.min(sign0 * K)),
                       tolerance=band * scale, detail=side)


def random_radial_corpus(grid: RadialGrid, n: int, seed: int, n_bumps: int = 3) -> List[RadialField]:
    """Seeded compactly supported radial fields, defined independently of the grid spacing."""
    rng = philox(seed)
    reach = grid.r_max / 2
    r = grid.r
    corpus = []
    for _ in range(n):
        values = np.zeros(grid.n, dtype=complex)
        for _ in range(n_bumps):
            center = rng.uniform(0.0, 0.6 * reach)
            width = rng.uniform(0.5, 0.4 * reach)
            coeff = rng.normal() + 1j * rng.normal()
            x = (r - center) / width
            values += coeff * np.where(np.abs(x) < 1, (1 - x ** 2) ** 4, 0.0)
        corpus.append(RadialField(grid, values))
    return corpus


def inequality_battery(corpus: Sequence[RadialField], params: ModelParams, radii: Sequence[float] = (1.0, 2.0, 4.0),
                       c_gn0: Optional[float] = None, hardy_slack: float = 1e-8) -> AuditReport:
    """Hardy, restricted radial Sobolev and Gagliardo–Nirenberg over a corpus."""
    report = AuditReport(name="inequalities")
    # Hardy margin relative to ‖∇f‖²
    margins = np.array([hardy_margin(f) / max(grad_sq(f), 1e-300) for f in corpus])
    violations = int(np.sum(margins < -hardy_slack))
    report.checks.append(CheckResult(name="hardy", status="pass" if violations == 0 else "fail",
                                     worst_value=float(violations), tolerance=0.0,
                                     detail=f"min relative margin {margins.min():.3e}"))

    ratios = [radial_sobolev_ratio(f, params, R) for f in corpus for R in radii]
    report.constants["radial_sobolev_C"] = float(max(ratios))

    gamma0 = ModelParams(params.d, params.p, 0.0, params.omega)
    if c_gn0 is None:
        c_gn0 = 1.0 / min(gn_quotient(f, gamma0) for f in corpus)
        report.flags.append("C_GN estimated from the corpus")
    report.constants["C_GN"] = c_gn0
    quotients = np.array([gn_quotient(f, params) for f in corpus])
    worst = float(quotients.min() * c_gn0)
    report.checks.append(CheckResult(name="gagliardo_nirenberg", status="pass" if worst >= 1 - 1e-3 else "fail",
                                     worst_value=worst, tolerance=1 - 1e-3,
                                     detail="min J(f)·C_GN(0) over the corpus"))
    report.constants["hardy_min_margin"] = float(margins.min())
    return report
