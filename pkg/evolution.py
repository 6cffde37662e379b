"""Störmer–Verlet integration of u_tt = Δ_γ u − u + |u|^{p−1}u for radial fields."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from config import config
from errors import DiscretizationError, MonitorAbort, ParameterDomainError
from field_core import (
    ModelParams,
    RadialField,
    RadialGrid,
    StateSnapshot,
    apply_bands,
    h1_sq,
    kinetic_gamma,
    l2_sq,
    laplacian_bands,
)
from schemas import Verdict

logger = logging.getLogger(__name__)

# Column order of trajectory CSV files; anything else follows in registration order.
CANONICAL_COLUMNS = ("mass", "kinetic", "potential", "E", "C", "H1", "orbit_dist", "K_d2", "K1",
                     "I_R1", "I_R2", "f", "fprime", "v_sq")


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    cfl: float
    blowup_h1_factor: float
    blowup_amp: float
    monitor_stride: int
    growth_factor: float = 10.0

    @classmethod
    def for_grid(cls, grid: RadialGrid, params: ModelParams, t_end: Optional[float] = None,
                 cfl: Optional[float] = None, sample_spacing: Optional[float] = None,
                 blowup_h1_factor: Optional[float] = None, blowup_amp: Optional[float] = None,
                 growth_factor: Optional[float] = None) -> "EvolutionConfig":
        """dt = cfl·h/(2 sqrt(max(γ,1))) and a stride giving the requested sample spacing."""
        cfl = cfl or config.CFL
        dt = cfl * grid.h / (2 * math.sqrt(max(params.gamma, 1.0)))
        spacing = sample_spacing or config.SAMPLE_SPACING
        return cls(dt=dt, t_end=t_end or config.T_END, cfl=cfl,
                   blowup_h1_factor=blowup_h1_factor or config.BLOWUP_H1_FACTOR,
                   blowup_amp=blowup_amp or config.BLOWUP_AMP,
                   monitor_stride=max(1, int(round(spacing / dt))),
                   growth_factor=growth_factor or config.GROWTH_FACTOR)

    def validate(self, grid: RadialGrid, params: ModelParams) -> None:
        if not 0 < self.cfl < 1:
            raise ParameterDomainError(f"cfl must lie in (0, 1), got {self.cfl}")
        guard = self.cfl * grid.h / (2 * math.sqrt(max(params.gamma, 1.0)))
        if self.dt > self.cfl * grid.h * (1 + 1e-12) or self.dt > guard * (1 + 1e-12):
            raise ParameterDomainError(f"dt={self.dt:.4g} exceeds the stability guard {guard:.4g}")
        if self.monitor_stride < 1 or self.t_end <= 0:
            raise ParameterDomainError("monitor_stride >= 1 and t_end > 0 required")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def halved(self) -> "EvolutionConfig":
        """Same horizon and sample times with half the step."""
        return EvolutionConfig(self.dt / 2, self.t_end, self.cfl, self.blowup_h1_factor,
                               self.blowup_amp, 2 * self.monitor_stride, self.growth_factor)


@dataclass
class TrajectoryRecord:
    """Sample times and named monitor columns of one run."""

    columns: List[str]
    dt: float = 0.0
    stride: int = 1
    times: List[float] = field(default_factory=list)
    rows: List[List[float]] = field(default_factory=list)

    def append(self, t: float, values: Dict[str, float]) -> None:
        if self.times and t <= self.times[-1]:
            raise DiscretizationError(f"sample time {t} does not increase")
        self.times.append(float(t))
        self.rows.append([float(values.get(c, math.nan)) for c in self.columns])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def __len__(self) -> int:
        return len(self.times)

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        j = self.columns.index(name)
        return np.asarray([row[j] for row in self.rows])

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.t))) if len(self) > 1 else 0.0

    def ordered_columns(self) -> List[str]:
        known = [c for c in CANONICAL_COLUMNS if c in self.columns]
        return known + [c for c in self.columns if c not in known]

    def until(self, t_max: float) -> "TrajectoryRecord":
        """Samples with t ≤ t_max."""
        keep = [i for i, t in enumerate(self.times) if t <= t_max]
        return TrajectoryRecord(list(self.columns), self.dt, self.stride,
                                [self.times[i] for i in keep], [list(self.rows[i]) for i in keep])

    def to_csv(self, path: Union[str, Path]) -> None:
        cols = self.ordered_columns()
        data = np.column_stack([self.t] + [self[c] for c in cols]) if len(self) else np.empty((0, len(cols) + 1))
        np.savetxt(path, data, delimiter=",", header=",".join(["t"] + cols), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TrajectoryRecord":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        rec = cls(header[1:])
        rec.times = data[:, 0].tolist()
        rec.rows = data[:, 1:].tolist()
        return rec


def nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^{p−1}u, evaluated as exp((p−1) log|u|)·u and 0 where u = 0."""
    mag = np.abs(u)
    out = np.zeros_like(u)
    nz = mag > 0
    out[nz] = np.exp((p - 1) * np.log(mag[nz])) * u[nz]
    return out


@lru_cache(maxsize=16)
def _bands(grid: RadialGrid, gamma: float):
    return laplacian_bands(grid, gamma)


def _acceleration(u: np.ndarray, bands, p: float, nonlinear: bool) -> np.ndarray:
    acc = apply_bands(bands, u) - u
    if nonlinear:
        acc += nonlinearity(u, p)
    return acc


def _kdk(u: np.ndarray, v: np.ndarray, acc: np.ndarray, dt: float, bands, p: float,
         nonlinear: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    v_half = v + 0.5 * dt * acc
    u_new = u + dt * v_half
    acc_new = _acceleration(u_new, bands, p, nonlinear)
    return u_new, v_half + 0.5 * dt * acc_new, acc_new


def step(s: StateSnapshot, params: ModelParams, dt: float, nonlinear: bool = True) -> StateSnapshot:
    """One kick-drift-kick update; a negative dt steps backward."""
    bands = _bands(s.grid, params.gamma)
    u, v = s.u.values.copy(), s.v.values.copy()
    acc = _acceleration(u, bands, params.p, nonlinear)
    u, v, _ = _kdk(u, v, acc, dt, bands, params.p, nonlinear)
    return StateSnapshot(RadialField(s.grid, u), RadialField(s.grid, v), s.t + dt)


def h1_l2_norm(s: StateSnapshot, gamma: float) -> float:
    """‖(u, v)‖_{H¹×L²}."""
    return math.sqrt(h1_sq(s.u, gamma) + l2_sq(s.v))


def linear_energy(s: StateSnapshot, params: ModelParams, dt: float = 0.0) -> float:
    """½(‖v‖² + ⟨u, Ku⟩) with K = 1 − Δ_γ, less dt²/8 ‖Ku‖².

    With dt = 0 this is the energy of the linear equation; with the step size
    it is the quadratic form the linear Verlet map preserves exactly.
    """
    grid = s.grid
    ku = s.u.values - apply_bands(_bands(grid, params.gamma), s.u.values)
    quad = l2_sq(s.u) + kinetic_gamma(s.u, params.gamma)
    shadow = float(np.sum(grid.weights * np.abs(ku) ** 2))
    return 0.5 * (l2_sq(s.v) + quad - dt ** 2 / 4 * shadow)


def discrete_mode(grid: RadialGrid, gamma: float, k: int = 0) -> Tuple[float, RadialField]:
    """k-th eigenpair of −Δ_γ on the grid, normalized in L²."""
    lower, diag, upper = laplacian_bands(grid, gamma)
    w = grid.weights
    off = np.sqrt(w[:-1] / w[1:]) * upper[:-1]
    vals, vecs = linalg.eigh_tridiagonal(-diag, -off, select="i", select_range=(k, k))
    mode = vecs[:, 0] / np.sqrt(w)
    mode /= math.sqrt(float(np.sum(w * mode ** 2)))
    return float(vals[0]), RadialField(grid, mode)


def random_radial_bumps(grid: RadialGrid, rng: np.random.Generator, n_bumps: int = 4,
                        reach: Optional[float] = None) -> np.ndarray:
    """Sum of Gaussian bumps with complex coefficients inside r ≤ reach."""
    reach = reach or min(10.0, grid.r_max / 4)
    r = grid.r
    out = np.zeros(grid.n, dtype=complex)
    for _ in range(n_bumps):
        center = rng.uniform(0.0, reach)
        width = rng.uniform(0.5, 2.0)
        coeff = rng.normal() + 1j * rng.normal()
        out += coeff * np.exp(-((r - center) / width) ** 2)
    return out


def compact_bump(grid: RadialGrid, center: float, width: float, amplitude: float = 1.0) -> RadialField:
    """amplitude·(1 − ((r−c)/w)²)⁴ on |r − c| < w, zero elsewhere."""
    x = (grid.r - center) / width
    return RadialField(grid, amplitude * np.where(np.abs(x) < 1, (1 - x ** 2) ** 4, 0.0))


def philox(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator used for every perturbation corpus."""
    return np.random.Generator(np.random.Philox(seed))


def make_lambda_data(gs, lam: float) -> StateSnapshot:
    """(λQ, iλωQ)."""
    if lam <= 0:
        raise ParameterDomainError(f"lambda must be positive, got {lam}")
    q = gs.profile
    return StateSnapshot(q.scale(lam), q.scale(1j * lam * gs.params.omega), 0.0)


def make_perturbed_data(gs, delta: float, seed: int) -> StateSnapshot:
    """(Q + δη₁/‖η₁‖_{H¹}, iωQ + δη₂/‖η₂‖_{L²}) with seeded smooth bumps."""
    if delta < 0:
        raise ParameterDomainError(f"delta must be non-negative, got {delta}")
    grid, q, gamma = gs.grid, gs.profile, gs.params.gamma
    rng = philox(seed)
    eta1 = RadialField(grid, random_radial_bumps(grid, rng))
    eta2 = RadialField(grid, random_radial_bumps(grid, rng))
    u = q.values + delta * eta1.values / math.sqrt(h1_sq(eta1, gamma))
    v = 1j * gs.params.omega * q.values + delta * eta2.values / math.sqrt(l2_sq(eta2))
    return StateSnapshot(RadialField(grid, u), RadialField(grid, v), 0.0)


def finite_propagation_check(init: StateSnapshot, final: StateSnapshot, support: float,
                             margin: float = 1.0) -> float:
    """max|u| beyond support + t + margin relative to the peak of u."""
    r = final.grid.r
    outside = r > support + (final.t - init.t) + margin
    peak = float(np.max(np.abs(final.u.values)))
    if not outside.any() or peak == 0:
        return 0.0
    return float(np.max(np.abs(final.u.values[outside]))) / peak


def _sample(record: TrajectoryRecord, monitors: Sequence, snap: StateSnapshot) -> None:
    values: Dict[str, float] = {}
    for monitor in monitors:
        try:
            values.update(monitor.sample(snap))
        except Exception as e:
            logger.error(f"Monitor {type(monitor).__name__} failed at t={snap.t:.4f}: {e}")
            raise MonitorAbort(f"monitor {type(monitor).__name__} failed at t={snap.t:.4f}: {e}",
                               partial=record) from e
    record.append(snap.t, values)


def evolve(init: StateSnapshot, params: ModelParams, cfg: EvolutionConfig,
           monitors: Iterable = (), nonlinear: bool = True) -> Tuple[TrajectoryRecord, Verdict]:
    """Integrate to t_end or the first blow-up trigger, sampling monitors every stride."""
    from monitors import ConservationMonitor

    grid = init.grid
    cfg.validate(grid, params)
    monitors = list(monitors)
    if not any(isinstance(m, ConservationMonitor) for m in monitors):
        monitors.insert(0, ConservationMonitor(params))
    columns: List[str] = []
    for m in monitors:
        columns.extend(c for c in m.columns if c not in columns)
    record = TrajectoryRecord(columns, cfg.dt, cfg.monitor_stride)

    h1_0 = h1_l2_norm(init, params.gamma)
    sup_h1 = h1_0
    bands = _bands(grid, params.gamma)
    u, v = init.u.values.copy(), init.v.values.copy()
    acc = _acceleration(u, bands, params.p, nonlinear)
    _sample(record, monitors, init)

    n_steps = cfg.n_steps
    for n in range(1, n_steps + 1):
        t = init.t + n * cfg.dt
        u, v, acc = _kdk(u, v, acc, cfg.dt, bands, params.p, nonlinear)
        amp = float(np.max(np.abs(u)))
        if not (math.isfinite(amp) and np.all(np.isfinite(v))):
            return record, _blowup(t, "non_finite", sup_h1)
        if amp > cfg.blowup_amp:
            return record, _blowup(t, "amplitude", sup_h1)
        if n % cfg.monitor_stride and n != n_steps:
            continue
        try:
            snap = StateSnapshot(RadialField(grid, u), RadialField(grid, v), t)
            norm = h1_l2_norm(snap, params.gamma)
        except DiscretizationError:
            return record, _blowup(t, "non_finite", sup_h1)
        sup_h1 = max(sup_h1, norm)
        _sample(record, monitors, snap)
        if h1_0 > 0 and norm > cfg.blowup_h1_factor * h1_0:
            return record, _blowup(t, "h1_factor", sup_h1)

    t_end = init.t + n_steps * cfg.dt
    if h1_0 == 0 or sup_h1 <= cfg.growth_factor * h1_0:
        verdict = Verdict(kind="GlobalBounded", sup_h1=sup_h1, t_end=t_end)
    else:
        verdict = Verdict(kind="Undecided", sup_h1=sup_h1, t_end=t_end)
    logger.info(f"Evolution finished: {verdict.kind} (sup H1 {sup_h1:.4g}, initial {h1_0:.4g})")
    return record, verdict


def _blowup(t: float, trigger: str, sup_h1: float) -> Verdict:
    logger.info(f"Blow-up trigger '{trigger}' at t={t:.4f}")
    return Verdict(kind="BlowUp", t_star=t, trigger=trigger, sup_h1=sup_h1)
