"""Scalar functionals of the NLKG_γ action, energy and virial family."""

import logging
import math
from typing import Dict, NamedTuple, Optional, Tuple

from errors import ParameterDomainError
from field_core import (
    ModelParams,
    RadialField,
    StateSnapshot,
    VirialIndex,
    grad_sq,
    hardy_sum,
    inner,
    kinetic_gamma,
    l2_sq,
    lp_pow,
    restricted_lp_pow,
    restricted_mass,
    rescale,
)
from schemas import FunctionalRecord

logger = logging.getLogger(__name__)

CANONICAL = ("d2", "2pm1", "0m1")


class StabilityLevel(NamedTuple):
    value: float
    slope: float
    curvature: float


def norms(f: RadialField, params: ModelParams) -> Tuple[float, float, float]:
    """(‖f‖², ‖(−Δ_γ)^{1/2}f‖², ‖f‖^{p+1}_{p+1})."""
    return l2_sq(f), kinetic_gamma(f, params.gamma), lp_pow(f, params.p + 1)


def action_from_norms(params: ModelParams, mass: float, kinetic: float, potential: float) -> float:
    return (1 - params.omega ** 2) / 2 * mass + kinetic / 2 - potential / (params.p + 1)


def action_S(f: RadialField, params: ModelParams) -> float:
    """S_{ω,γ}(f)."""
    return action_from_norms(params, *norms(f, params))


def virial_coefficients(params: ModelParams, idx: VirialIndex) -> Tuple[float, float, float]:
    """Coefficients of mass, kinetic and potential in K^{α,β}."""
    d, p, a, b = params.d, params.p, idx.alpha, idx.beta
    c_mass = (2 * a - d * b) * (1 - params.omega ** 2) / 2
    c_kin = (2 * a - (d - 2) * b) / 2
    c_pot = -((p + 1) * a - d * b) / (p + 1)
    return c_mass, c_kin, c_pot


def virial_from_norms(params: ModelParams, idx: VirialIndex,
                      mass: float, kinetic: float, potential: float) -> float:
    c_mass, c_kin, c_pot = virial_coefficients(params, idx)
    return c_mass * mass + c_kin * kinetic + c_pot * potential


def virial_K(f: RadialField, params: ModelParams, idx: VirialIndex,
             require_admissible: bool = False) -> float:
    """K^{α,β}(f), the λ-derivative at 0 of S(e^{αλ} f(e^{βλ}·))."""
    if require_admissible:
        idx.check_admissible(params)
    return virial_from_norms(params, idx, *norms(f, params))


def T_from_norms(params: ModelParams, idx: VirialIndex,
                 mass: float, kinetic: float, potential: float) -> float:
    s = action_from_norms(params, mass, kinetic, potential)
    return s - virial_from_norms(params, idx, mass, kinetic, potential) / params.mu_bar(idx)


def functional_T(f: RadialField, params: ModelParams, idx: VirialIndex) -> float:
    """T^{α,β} = S − K^{α,β}/μ̄; defined on admissible indices only."""
    idx.check_admissible(params)
    return T_from_norms(params, idx, *norms(f, params))


def T_coefficients(params: ModelParams, idx: VirialIndex) -> Tuple[float, float, float]:
    """Coefficients of mass, kinetic and potential in T^{α,β}."""
    mu = params.mu_bar(idx)
    c_mass, c_kin, c_pot = virial_coefficients(params, idx)
    return ((1 - params.omega ** 2) / 2 - c_mass / mu,
            0.5 - c_kin / mu,
            -1 / (params.p + 1) - c_pot / mu)


def energy_charge(s: StateSnapshot, params: ModelParams) -> Tuple[float, float]:
    """(E_γ, C) of a phase-space point."""
    mass, kinetic, potential = norms(s.u, params)
    energy = kinetic / 2 + mass / 2 - potential / (params.p + 1) + l2_sq(s.v) / 2
    charge = inner(s.u, s.v).imag
    return energy, charge


def functional_L(s: StateSnapshot, params: ModelParams) -> float:
    energy, charge = energy_charge(s, params)
    return energy + params.omega * charge


def functional_L_split(s: StateSnapshot, params: ModelParams) -> float:
    """S(u) + ½‖v − iωu‖², the second expression of L."""
    shifted = s.v.with_values(s.v.values - 1j * params.omega * s.u.values)
    return action_S(s.u, params) + l2_sq(shifted) / 2


def functional_K1_K(s: StateSnapshot, params: ModelParams) -> Tuple[float, float]:
    mass, kinetic, potential = norms(s.u, params)
    k1 = mass + kinetic - potential - l2_sq(s.v)
    k_d2 = virial_from_norms(params, VirialIndex.named("d2", params), mass, kinetic, potential)
    return k1, k_d2 + params.q * k1


def gn_quotient(f: RadialField, params: ModelParams) -> float:
    """Weinstein-type quotient J(f); inf J = 1/C_GN."""
    mass, kinetic, potential = norms(f, params)
    if mass == 0 or potential == 0:
        raise ParameterDomainError("GN quotient is undefined for the zero field")
    d, p = params.d, params.p
    mass_exp = (p + 1 - d * (p - 1) / 2) / 2
    kin_exp = d * (p - 1) / 4
    return mass ** mass_exp * kinetic ** kin_exp / potential


def _record_from_norms(params: ModelParams, mass: float, kinetic: float, potential: float,
                       energy: float, charge: float) -> Dict[str, Optional[float]]:
    fields: Dict[str, Optional[float]] = {}
    for name in CANONICAL:
        idx = VirialIndex.named(name, params)
        fields[f"K_{name}"] = virial_from_norms(params, idx, mass, kinetic, potential)
        fields[f"T_{name}"] = (T_from_norms(params, idx, mass, kinetic, potential)
                               if idx.admissible(params) else None)
    fields.update(mass=mass, kinetic=kinetic, potential=potential,
                  S=action_from_norms(params, mass, kinetic, potential),
                  E=energy, C=charge, L=energy + params.omega * charge)
    return fields


def functional_record(s: StateSnapshot, params: ModelParams) -> FunctionalRecord:
    mass, kinetic, potential = norms(s.u, params)
    energy = kinetic / 2 + mass / 2 - potential / (params.p + 1) + l2_sq(s.v) / 2
    charge = inner(s.u, s.v).imag
    return FunctionalRecord(**_record_from_norms(params, mass, kinetic, potential, energy, charge))


def record_for_profile(f: RadialField, params: ModelParams) -> FunctionalRecord:
    """Record of the standing-wave data (f, iωf)."""
    return functional_record(StateSnapshot(f, f.scale(1j * params.omega)), params)


def recompute_record_fields(record: FunctionalRecord, params: ModelParams) -> Dict[str, Optional[float]]:
    fields = _record_from_norms(params, record.mass, record.kinetic, record.potential,
                                record.E, record.C)
    return {k: v for k, v in fields.items() if k.startswith(("K_", "T_"))}


def scaled_action(f: RadialField, params: ModelParams, idx: VirialIndex, lam: float) -> float:
    return action_S(rescale(f, idx.alpha, idx.beta, lam), params)


def scaling_factors(params: ModelParams, idx: VirialIndex, lam: float) -> Tuple[float, float, float]:
    """Growth of (mass, kinetic, potential) along e^{αλ} f(e^{βλ}·)."""
    d, p, a, b = params.d, params.p, idx.alpha, idx.beta
    return (math.exp((2 * a - d * b) * lam),
            math.exp((2 * a - (d - 2) * b) * lam),
            math.exp(((p + 1) * a - d * b) * lam))


def radial_sobolev_ratio(f: RadialField, params: ModelParams, R: float) -> float:
    """‖f‖^{p+1}_{L^{p+1}(r≥R)} over R^{−(d−1)(p−1)/2}‖f‖^{(p+3)/2}‖∇f‖^{(p−1)/2} on r ≥ R."""
    d, p = params.d, params.p
    lhs = restricted_lp_pow(f, p + 1, R)
    rhs = (R ** (-(d - 1) * (p - 1) / 2)
           * restricted_mass(f, R) ** ((p + 3) / 4)
           * grad_sq(f, r_min=R) ** ((p - 1) / 4))
    if rhs == 0:
        return 0.0
    return lhs / rhs


def hardy_margin(f: RadialField) -> float:
    """‖∇f‖² − ((d−2)/2)² ∫|f|²/r²; non-negative for every field."""
    d = f.grid.d
    return grad_sq(f) - ((d - 2) / 2) ** 2 * hardy_sum(f)


def membership(s: StateSnapshot, params: ModelParams, idx: VirialIndex,
               r_level: float, band: float = 1e-6) -> str:
    """'plus' or 'minus' inside {L < r}, split by the sign of K; 'outside' otherwise.

    Within the band around K = 0 the T dichotomy decides: T < r is the plus
    side.
    """
    scale = max(abs(r_level), 1.0)
    if functional_L(s, params) >= r_level - band * scale:
        return "outside"
    k = virial_K(s.u, params, idx)
    if k > band * scale:
        return "plus"
    if k < -band * scale:
        return "minus"
    if l2_sq(s.u) == 0 or not idx.admissible(params):
        return "plus"
    return "plus" if functional_T(s.u, params, idx) < r_level else "minus"


def stability_level(params: ModelParams, s0: float) -> StabilityLevel:
    """r_ω = (1−ω²)^e S_0 with e = (p+1)/(p−1) − d/2, and its ω-derivatives."""
    e = (params.p + 1) / (params.p - 1) - params.d / 2
    w = params.omega
    base = 1 - w ** 2
    value = base ** e * s0
    slope = -2 * w * e * base ** (e - 1) * s0
    curvature = 2 * e * base ** (e - 2) * ((2 * e - 1) * w ** 2 - 1) * s0
    return StabilityLevel(value, slope, curvature)

