"""Radial discretization of d-dimensional space, quadrature and Δ_γ = Δ − γ/|x|².

Fields live on a staggered grid r_i = (i + 1/2) h, so no node sits at the
origin. The kinetic quadratic form is built from face differences, which makes
it the exact summation-by-parts partner of the conservative stencil used for
Δ_γ.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from errors import DiscretizationError, ParameterDomainError

logger = logging.getLogger(__name__)

# Slack for the closed constraints of the admissible index set.
_CONSTRAINT_SLACK = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """The tuple (d, p, γ, ω) and its derived constants."""

    d: int
    p: float
    gamma: float
    omega: float

    @property
    def hardy_constant(self) -> float:
        return ((self.d - 2) / 2) ** 2

    @property
    def rho(self) -> float:
        return (self.d - 2) / 2 - math.sqrt(self.hardy_constant + self.gamma)

    @property
    def sigma(self) -> float:
        return -self.rho

    @property
    def nu(self) -> float:
        """Order of the modified Bessel tail, σ + (d−2)/2."""
        return math.sqrt(self.hardy_constant + self.gamma)

    @property
    def omega_c(self) -> Optional[float]:
        denom = 4 - (self.d - 1) * (self.p - 1)
        if denom <= 0:
            return None
        return math.sqrt((self.p - 1) / denom)

    @property
    def q(self) -> float:
        return 4 / (self.p - 1) - self.d

    @property
    def kappa(self) -> float:
        return math.sqrt(1 - self.omega ** 2)

    @property
    def mass_critical_p(self) -> float:
        return 1 + 4 / self.d

    @property
    def regime(self) -> str:
        if abs(self.p - self.mass_critical_p) <= 1e-12:
            return "mass_critical"
        return "mass_sub" if self.p < self.mass_critical_p else "mass_super"

    @property
    def conditional_regime(self) -> bool:
        """d ≥ 6 configurations where well-posedness is assumed, not proved."""
        return self.d >= 6 and 1 + 2 / (self.d - 2) < self.p < 1 + 4 / (self.d + 1)

    def mu_bar(self, idx: "VirialIndex") -> float:
        if idx.beta >= 0:
            return (self.p + 1) * idx.alpha - self.d * idx.beta
        return 2 * idx.alpha - self.d * idx.beta

    def with_omega(self, omega: float) -> "ModelParams":
        return make_params(self.d, self.p, self.gamma, omega)

    def require_positive_gamma(self) -> None:
        if self.gamma <= 0:
            raise ParameterDomainError(f"gamma > 0 required here, got gamma={self.gamma}")

    def to_dict(self) -> Dict[str, Any]:
        return {"d": self.d, "p": self.p, "gamma": self.gamma, "omega": self.omega,
                "omega_c": self.omega_c, "rho": self.rho, "sigma": self.sigma,
                "q": self.q, "regime": self.regime}


@dataclass(frozen=True)
class VirialIndex:
    """Scaling direction (α, β) of the family e^{αλ} f(e^{βλ}·)."""

    alpha: float
    beta: float
    name: Optional[str] = None

    def __post_init__(self):
        if self.alpha == 0 and self.beta == 0:
            raise ParameterDomainError("(alpha, beta) = (0, 0) is not a scaling direction")

    @classmethod
    def named(cls, name: str, params: ModelParams) -> "VirialIndex":
        """Canonical indices d2, 2pm1, 0m1 and the Nehari index 10."""
        if name == "d2":
            return cls(float(params.d), 2.0, name)
        if name == "2pm1":
            return cls(2.0, params.p - 1, name)
        if name == "0m1":
            return cls(0.0, -1.0, name)
        if name == "10":
            return cls(1.0, 0.0, name)
        raise ParameterDomainError(f"unknown virial index '{name}' (expected d2, 2pm1, 0m1 or 10)")

    @property
    def label(self) -> str:
        return self.name or f"({self.alpha:g},{self.beta:g})"

    def violations(self, params: ModelParams) -> List[str]:
        d, p, a, b = params.d, params.p, self.alpha, self.beta
        found = []
        if a < -_CONSTRAINT_SLACK:
            found.append("alpha >= 0")
        if 2 * a - d * b < -_CONSTRAINT_SLACK:
            found.append("2*alpha - d*beta >= 0")
        if 2 * a - (d - 2) * b <= 0:
            found.append("2*alpha - (d-2)*beta > 0")
        if (p - 1) * a - 2 * b < -_CONSTRAINT_SLACK:
            found.append("(p-1)*alpha - 2*beta >= 0")
        return found

    def admissible(self, params: ModelParams) -> bool:
        return not self.violations(params)

    def check_admissible(self, params: ModelParams) -> None:
        found = self.violations(params)
        if found:
            raise ParameterDomainError(
                f"index {self.label} violates {', '.join(found)} for d={params.d}, p={params.p}")
        if (params.p + 1) * self.alpha - params.d * self.beta <= 0:
            raise ParameterDomainError(f"index {self.label}: (p+1)*alpha - d*beta must be positive")


@dataclass(frozen=True)
class RadialGrid:
    """Staggered radial grid with d-dimensional quadrature weights."""

    d: int
    r_max: float
    n: int

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def faces(self) -> np.ndarray:
        """Outer face r_{i+1/2} of every cell; the last one is r_max."""
        return (np.arange(self.n) + 1.0) * self.h

    @cached_property
    def sphere_area(self) -> float:
        return 2 * math.pi ** (self.d / 2) / special.gamma(self.d / 2)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.sphere_area * self.r ** (self.d - 1) * self.h

    @cached_property
    def face_weights(self) -> np.ndarray:
        return self.sphere_area * self.faces ** (self.d - 1) * self.h

    def scaled(self, s: float) -> "RadialGrid":
        """Grid with every length multiplied by s."""
        return RadialGrid(self.d, self.r_max * s, self.n)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.d, self.r_max, self.n * factor)

    def meta(self) -> Dict[str, Any]:
        return {"d": self.d, "h": self.h, "r_max": self.r_max, "n": self.n}


@dataclass(frozen=True)
class RadialField:
    """Complex samples of a radial function at the grid nodes."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise DiscretizationError(
                f"field has {values.shape} samples, grid has {self.grid.n} nodes")
        ensure_finite(values, "field samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n, dtype=complex))

    @classmethod
    def from_function(cls, grid: RadialGrid, fn) -> "RadialField":
        return cls(grid, fn(grid.r))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values)

    def scale(self, c: complex) -> "RadialField":
        return RadialField(self.grid, c * self.values)


@dataclass(frozen=True)
class StateSnapshot:
    """Phase-space point (u, ∂_t u) at time t."""

    u: RadialField
    v: RadialField
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise DiscretizationError("u and v must share one grid")

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid


def ensure_finite(values: np.ndarray, what: str = "values") -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values)))
        raise DiscretizationError(f"non-finite {what} (first at node {bad})")


def make_params(d: int, p: float, gamma: float, omega: float) -> ModelParams:
    """Validate (d, p, γ, ω) and build ModelParams."""
    if int(d) != d or d < 3:
        raise ParameterDomainError(f"d must be an integer >= 3, got {d}")
    d = int(d)
    p_max = 1 + 4 / (d - 2)
    if not 1 < p <= p_max + _CONSTRAINT_SLACK:
        raise ParameterDomainError(f"1 < p <= 1 + 4/(d-2) = {p_max:g} violated by p={p}")
    if gamma <= -((d - 2) / 2) ** 2:
        raise ParameterDomainError(f"gamma > -((d-2)/2)^2 = {-((d - 2) / 2) ** 2:g} violated by gamma={gamma}")
    if not 1 - omega ** 2 > 0:
        raise ParameterDomainError(f"1 - omega^2 > 0 violated by omega={omega}")
    return ModelParams(d, float(p), float(gamma), float(omega))


def make_grid(d: int, r_max: float, n: int) -> RadialGrid:
    """Staggered grid with h = r_max / n."""
    if n < 16:
        raise ParameterDomainError(f"n >= 16 required, got {n}")
    if r_max <= 0:
        raise ParameterDomainError(f"r_max > 0 required, got {r_max}")
    return RadialGrid(int(d), float(r_max), int(n))


def l2_sq(f: RadialField) -> float:
    return float(np.sum(f.grid.weights * np.abs(f.values) ** 2))


def lp_pow(f: RadialField, q: float) -> float:
    if q < 1:
        raise ParameterDomainError(f"q >= 1 required, got {q}")
    return float(np.sum(f.grid.weights * np.abs(f.values) ** q))


def inner(f: RadialField, g: RadialField) -> complex:
    """Complex L² pairing Σ w f ḡ."""
    return complex(np.sum(f.grid.weights * f.values * np.conj(g.values)))


def _face_differences(values: np.ndarray) -> np.ndarray:
    """f_{i+1} − f_i for every cell, with the Dirichlet value f_N = 0."""
    return np.diff(np.append(values, 0.0))


def restricted_mass(f: RadialField, r_min: float) -> float:
    mask = f.grid.r >= r_min
    return float(np.sum(f.grid.weights[mask] * np.abs(f.values[mask]) ** 2))


def restricted_lp_pow(f: RadialField, q: float, r_min: float) -> float:
    mask = f.grid.r >= r_min
    return float(np.sum(f.grid.weights[mask] * np.abs(f.values[mask]) ** q))


def grad_sq(f: RadialField, r_min: Optional[float] = None) -> float:
    """‖∇f‖², optionally restricted to faces with r ≥ r_min."""
    grid = f.grid
    terms = grid.face_weights * np.abs(_face_differences(f.values)) ** 2 / grid.h ** 2
    if r_min is not None:
        terms = terms[grid.faces >= r_min]
    return float(np.sum(terms))


def hardy_sum(f: RadialField) -> float:
    """Σ w r^{-2} |f|²."""
    grid = f.grid
    return float(np.sum(grid.weights * np.abs(f.values) ** 2 / grid.r ** 2))


def kinetic_gamma(f: RadialField, gamma: float, tol: float = 1e-12) -> float:
    """‖(−Δ_γ)^{1/2} f‖²."""
    gradient = grad_sq(f)
    value = gradient + gamma * hardy_sum(f)
    if value < -tol * max(gradient, 1.0):
        raise DiscretizationError(f"kinetic form is negative ({value:.3e}) for gamma={gamma}")
    return value


def kinetic_pairing(f: RadialField, g: RadialField, gamma: float) -> complex:
    """Sesquilinear form whose diagonal is kinetic_gamma."""
    grid = f.grid
    df = _face_differences(f.values)
    dg = _face_differences(g.values)
    grad = np.sum(grid.face_weights * df * np.conj(dg)) / grid.h ** 2
    pot = gamma * np.sum(grid.weights * f.values * np.conj(g.values) / grid.r ** 2)
    return complex(grad + pot)


def h1_sq(f: RadialField, gamma: float) -> float:
    return l2_sq(f) + kinetic_gamma(f, gamma)


def laplacian_bands(grid: RadialGrid, gamma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients (lower, diag, upper) of the conservative Δ_γ stencil.

    lower[0] is zero (no flux through the origin) and upper[-1] multiplies the
    Dirichlet value f_N = 0.
    """
    d, h, r = grid.d, grid.h, grid.r
    outer = grid.faces
    inner_faces = np.concatenate(([0.0], outer[:-1]))
    scale = r ** (1 - d) / h ** 2
    upper = scale * outer ** (d - 1)
    lower = scale * inner_faces ** (d - 1)
    diag = -(upper + lower) - gamma / r ** 2
    return lower, diag, upper


def banded(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Pack a tridiagonal matrix into scipy.linalg.solve_banded layout."""
    ab = np.zeros((3, diag.size), dtype=np.result_type(lower, diag, upper))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return ab


def apply_bands(bands: Tuple[np.ndarray, np.ndarray, np.ndarray], values: np.ndarray) -> np.ndarray:
    lower, diag, upper = bands
    out = diag * values
    out[:-1] += upper[:-1] * values[1:]
    out[1:] += lower[1:] * values[:-1]
    return out


def apply_laplacian_gamma(f: RadialField, gamma: float) -> RadialField:
    """Δ_γ f with zero inner flux and f_N = 0."""
    return RadialField(f.grid, apply_bands(laplacian_bands(f.grid, gamma), f.values))


def radial_derivative(f: RadialField) -> np.ndarray:
    """∂_r f at the nodes; one-sided second order at both ends."""
    return np.gradient(f.values, f.grid.h, edge_order=2)


def momentum(s: StateSnapshot) -> np.ndarray:
    """Re∫ ∇u ∂_t ū dx; every component vanishes for radial fields."""
    return np.zeros(s.grid.d)


def rescale(f: RadialField, alpha: float, beta: float, lam: float) -> RadialField:
    """e^{αλ} f(e^{βλ}·), exact on the dilated grid."""
    grid = f.grid.scaled(math.exp(-beta * lam))
    return RadialField(grid, math.exp(alpha * lam) * f.values)


def regrid(f: RadialField, target: RadialGrid) -> RadialField:
    """Cubic-spline resampling onto another grid; zero beyond the source domain."""
    if target.d != f.grid.d:
        raise ParameterDomainError("regrid cannot change the dimension")
    src = f.grid.r
    re = CubicSpline(src, f.values.real)(target.r)
    im = CubicSpline(src, f.values.imag)(target.r)
    out = re + 1j * im
    out[target.r > f.grid.r_max] = 0.0
    logger.debug(f"regrid n={f.grid.n} r_max={f.grid.r_max:g} -> n={target.n} r_max={target.r_max:g}")
    return RadialField(target, out)


def restrict(f: RadialField, target: RadialGrid) -> RadialField:
    """Injection onto a coarser grid whose nodes are a subset of f.grid's.

    Refining by an odd factor m nests the staggered nodes: coarse node i sits on
    fine node m*i + m//2.
    """
    m, rem = divmod(f.grid.n, target.n)
    if (target.d != f.grid.d or rem or m % 2 == 0
            or not math.isclose(target.r_max, f.grid.r_max, rel_tol=1e-12)):
        raise ParameterDomainError(
            f"cannot restrict n={f.grid.n} onto n={target.n}: need the same domain and an odd ratio")
    return RadialField(target, f.values[m // 2::m].copy())


def save_field_csv(f: RadialField, path: Union[str, Path]) -> None:
    """Write r,re,im rows with full double precision."""
    data = np.column_stack([f.grid.r, f.values.real, f.values.imag])
    np.savetxt(path, data, delimiter=",", header="r,re,im", comments="", fmt="%.17g")


def load_field_csv(path: Union[str, Path], d: int) -> RadialField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = data.shape[0]
    h = 2 * data[0, 0]
    grid = make_grid(d, h * n, n)
    if not np.allclose(grid.r, data[:, 0], rtol=1e-12, atol=0.0):
        raise DiscretizationError(f"{path} is not on a staggered grid")
    logger.debug(f"loaded {path} (n={n}, r_max={grid.r_max:g})")
    return RadialField(grid, data[:, 1] + 1j * data[:, 2])


def save_grid_meta(grid: RadialGrid, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(grid.meta(), fh, indent=2)
