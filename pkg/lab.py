"""Experiment orchestration: named experiments, sweeps and report artifacts."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from errors import (
    CharacterizationError,
    MonitorAbort,
    NumericalError,
    ParameterDomainError,
    ResolutionError,
)
from evolution import (
    EvolutionConfig,
    TrajectoryRecord,
    evolve,
    h1_l2_norm,
    make_lambda_data,
    make_perturbed_data,
)
from field_core import ModelParams, RadialGrid, VirialIndex, make_grid, make_params, save_grid_meta
from functionals import stability_level
from ground_state import (
    GroundState,
    classifier_monotone,
    constrained_minimize_T,
    extrapolated_pohozaev,
    find_ground_state,
    gn_constant_estimate,
    lagrange_degeneracy_check,
    mass_critical_closed_form,
    mass_critical_nu,
    save_ground_state,
    scan_amplitudes,
    validation_checks,
)
from monitors import (
    ConservationMonitor,
    OrbitMonitor,
    VirialMonitor,
    build_weights,
    inequality_battery,
    localized_virial_audit,
    margin_delta,
    membership_audit,
    random_radial_corpus,
    second_moment_audit,
    untruncated_virial_check,
    virial_rate_check,
)
from schemas import CheckResult, ExperimentConfig, ExperimentReport, Verdict

logger = logging.getLogger(__name__)

EXERCISES = {
    "ground-state": "ground-state existence and the Pohozaev identities K(Q) = 0",
    "evolve": "energy and charge conservation of the Verlet flow; standing-wave persistence",
    "stability": "orbital stability of radial ground states for p < 1+4/d and omega_c < |omega| < 1",
    "instability": "very strong instability via the localized virial argument",
    "scaling-law": "r_omega = (1-omega^2)^((p+1)/(p-1) - d/2) S_0 and its convexity above omega_c",
    "identities": "Pohozaev suite, variational characterization and Lagrange-multiplier signs",
    "inequalities": "Hardy, restricted radial Sobolev and Gagliardo-Nirenberg inequalities",
    "second-moment": "second-moment identity and the a priori bounds of global solutions",
}

# Experiments that retry once at doubled resolution before reporting failure.
THEOREM_GUIDED = ("stability", "instability", "scaling-law")

CROSS_METHOD_TOL = 1e-5
SCALING_TOL = 1e-4
DRIFT_TOL = 1e-5
ORDER_BAND = (3.5, 4.5)
STANDING_WAVE_TOL = 1e-3
MARGIN_FACTOR = 0.9
UNTRUNCATED_TAIL_SHARE = 1e-3
SOBOLEV_REFINE_TOL = 1e-2
CURVATURE_STEP = 0.02


@dataclass(frozen=True)
class RunJob:
    """One independent evolution of a sweep."""

    kind: str
    value: float
    seed: int
    gs: GroundState
    evo: EvolutionConfig
    run_dir: str
    radii: Tuple[float, ...] = ()

    @property
    def sort_key(self) -> Tuple[float, int]:
        return (self.value, self.seed)

    @property
    def key(self) -> str:
        if self.kind == "lambda":
            return f"lambda={self.value:g}"
        return f"delta={self.value:g}_seed={self.seed}"


@dataclass
class RunResult:
    key: str
    sort_key: Tuple[float, int]
    value: float
    seed: int
    verdict: Optional[Verdict]
    record: TrajectoryRecord
    h1_initial: float
    error: Optional[str] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> Dict[str, Any]:
        out = {"key": self.key, "value": self.value, "seed": self.seed,
               "verdict": self.verdict.model_dump() if self.verdict else None, "error": self.error}
        out.update(self.summary)
        return out


def execute_job(job: RunJob) -> RunResult:
    """Evolve one initial datum with the monitors its experiment needs."""
    gs, params = job.gs, job.gs.params
    if job.kind == "lambda":
        init = make_lambda_data(gs, job.value)
    else:
        init = make_perturbed_data(gs, job.value, job.seed)
    monitors: List[Any] = [ConservationMonitor(params), OrbitMonitor(gs)]
    for R in job.radii:
        monitors.append(VirialMonitor(build_weights(gs.grid, R), params, tagged=True))

    run_dir = Path(job.run_dir) / job.key
    run_dir.mkdir(parents=True, exist_ok=True)
    h1_0 = h1_l2_norm(init, params.gamma)
    try:
        record, verdict = evolve(init, params, job.evo, monitors)
        error = None
    except MonitorAbort as e:
        logger.error(f"Run {job.key} aborted: {e}")
        record, verdict, error = e.partial, None, str(e)

    record.to_csv(run_dir / "trajectory.csv")
    if verdict is not None:
        (run_dir / "verdict.json").write_text(verdict.model_dump_json(indent=2))

    summary: Dict[str, Any] = {}
    if len(record):
        orbit = record["orbit_dist"]
        summary["sup_orbit_dist"] = float(np.nanmax(orbit))
        summary["h1_growth"] = float(np.max(record["H1"]) / h1_0) if h1_0 > 0 else 0.0
        energy, charge = record["E"], record["C"]
        summary["energy_drift"] = _relative_drift(energy)
        summary["charge_drift"] = _relative_drift(charge, scale=max(abs(charge[0]), float(record["mass"][0])))
    return RunResult(job.key, job.sort_key, job.value, job.seed, verdict, record, h1_0, error, summary)


def _relative_drift(series: np.ndarray, scale: Optional[float] = None) -> float:
    scale = scale if scale is not None else abs(float(series[0]))
    return float(np.max(np.abs(series - series[0]))) / max(scale, 1e-300)


def dispatch(jobs: Sequence[RunJob], workers: int = 1) -> List[RunResult]:
    """Run jobs sequentially or on a process pool; results sorted by job key."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_job, jobs))
    else:
        results = [execute_job(job) for job in jobs]
    return sorted(results, key=lambda r: r.sort_key)


def resolve_params(cfg: ExperimentConfig) -> ModelParams:
    block = cfg.params
    omega = block.omega
    if omega == "omega_c":
        base = make_params(block.d, block.p, block.gamma, 0.0)
        if base.omega_c is None:
            raise ParameterDomainError(f"omega_c is undefined for d={block.d}, p={block.p}")
        omega = base.omega_c
    return make_params(block.d, block.p, block.gamma, float(omega))


def build_grid(cfg: ExperimentConfig) -> RadialGrid:
    return make_grid(cfg.params.d, cfg.grid.r_max, cfg.grid.n)


def evolution_config(cfg: ExperimentConfig, grid: RadialGrid, params: ModelParams) -> EvolutionConfig:
    evo = cfg.evolution
    return EvolutionConfig.for_grid(grid, params, t_end=evo.t_end, cfl=evo.cfl,
                                    sample_spacing=evo.sample_spacing, blowup_h1_factor=evo.blowup_h1_factor,
                                    blowup_amp=evo.blowup_amp, growth_factor=evo.growth_factor)


def _with_n(cfg: ExperimentConfig, n: int) -> ExperimentConfig:
    return cfg.model_copy(update={"grid": cfg.grid.model_copy(update={"n": n})})


class LabRunner:
    """Routes an experiment config to its handler and writes the artifacts."""

    def __init__(self):
        self._ground_states: Dict[Tuple[ModelParams, RadialGrid], GroundState] = {}

    def run(self, cfg: ExperimentConfig) -> ExperimentReport:
        handler = self._handler(cfg.experiment)
        out = Path(cfg.out_dir) / cfg.experiment
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running experiment '{cfg.experiment}' into {out}")

        report = handler(cfg, out)
        if not report.passed and cfg.experiment in THEOREM_GUIDED:
            logger.warning(f"Experiment '{cfg.experiment}' failed at n={cfg.grid.n}; retrying at n={2 * cfg.grid.n}")
            first = report
            report = handler(_with_n(cfg, 2 * cfg.grid.n), out)
            report.retried = True
            report.notes.append(f"failed at n={cfg.grid.n} ({_failed_names(first)}); retried at n={2 * cfg.grid.n}")

        report.write(out / "report.json")
        status = "passed" if report.passed else "FAILED"
        logger.info(f"Experiment '{cfg.experiment}' {status}; report at {out / 'report.json'}")
        return report

    def _handler(self, name: str) -> Callable[[ExperimentConfig, Path], ExperimentReport]:
        if name == "ground-state":
            return self._handle_ground_state
        elif name == "evolve":
            return self._handle_evolve
        elif name == "stability":
            return self._handle_stability
        elif name == "instability":
            return self._handle_instability
        elif name == "scaling-law":
            return self._handle_scaling_law
        elif name == "identities":
            return self._handle_identities
        elif name == "inequalities":
            return self._handle_inequalities
        elif name == "second-moment":
            return self._handle_second_moment
        raise ParameterDomainError(f"unknown experiment '{name}'")

    def _new_report(self, cfg: ExperimentConfig, params: ModelParams, **tolerances: float) -> ExperimentReport:
        return ExperimentReport(experiment=cfg.experiment, exercises=EXERCISES[cfg.experiment],
                                params=params.to_dict(), tolerances=tolerances,
                                conditional_regime=params.conditional_regime)

    def _ground_state(self, params: ModelParams, grid: RadialGrid) -> GroundState:
        key = (params, grid)
        if key not in self._ground_states:
            self._ground_states[key] = find_ground_state(params, grid)
        return self._ground_states[key]

    def _handle_ground_state(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        report = self._new_report(cfg, params, tol_res=config.TOL_RES, tol_k=config.TOL_K,
                                  tol_k_extrapolated=config.TOL_K_EXTRAPOLATED)
        gs = self._ground_state(params, grid)
        save_ground_state(gs, out / "ground-state")
        save_grid_meta(grid, out / "ground-state" / "grid.json")
        report.checks.append(CheckResult.bound("residual", gs.residual, config.TOL_RES,
                                               detail=f"solve grid n={gs.solution.grid.n}"))
        report.checks.append(CheckResult.bound("grid_residual", gs.checks["grid_residual"], config.TOL_RES))
        report.checks.extend(validation_checks(gs))
        if "tail_rate" in gs.checks:
            report.constants["tail_rate"] = gs.checks["tail_rate"]
            report.constants["kappa"] = params.kappa
        report.constants.update(S=gs.r_level, amplitude=gs.amplitude, omega_c=params.omega_c,
                                truncation_residual=gs.truncation_residual)
        scan = scan_amplitudes(params, grid, 0.5 * gs.amplitude, 1.5 * gs.amplitude)
        report.checks.append(CheckResult(name="classifier_monotone",
                                         status="pass" if classifier_monotone(scan) else "fail",
                                         detail=f"{len(scan)} shots on [a/2, 3a/2]"))

        if cfg.method == "minimize":
            idx = VirialIndex.named(cfg.index, params)
            report.checks.append(self._cross_method(gs, idx))
        logger.info(f"Ground state archived under {out / 'ground-state'}")
        return report

    def _cross_method(self, gs: GroundState, idx: VirialIndex) -> CheckResult:
        name = f"cross_method_{idx.label}"
        if not idx.admissible(gs.params):
            return CheckResult(name=name, status="info", detail="index not admissible for these parameters")
        try:
            minimized = constrained_minimize_T(gs.params, gs.grid, idx)
        except NumericalError as e:
            return CheckResult(name=name, status="fail", detail=str(e))
        rel = abs(minimized.r_level - gs.r_level) / abs(gs.r_level)
        return CheckResult.bound(name, rel, CROSS_METHOD_TOL, detail=f"S_min={minimized.r_level:.12g}")

    def _handle_evolve(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        report = self._new_report(cfg, params, drift=DRIFT_TOL, orbit=STANDING_WAVE_TOL,
                                  order_low=ORDER_BAND[0], order_high=ORDER_BAND[1])
        gs = self._ground_state(params, grid)
        evo = evolution_config(cfg, grid, params)
        jobs = [RunJob("lambda", lam, 0, gs, evo, str(out / "runs")) for lam in cfg.sweep.lambdas]
        results = dispatch(jobs, cfg.workers)
        for res in results:
            report.runs.append(res.row())
            if res.verdict is None:
                report.checks.append(CheckResult(name=f"{res.key}:monitors", status="fail", detail=res.error))
                continue
            if res.verdict.kind != "BlowUp":
                report.checks.append(CheckResult.bound(f"{res.key}:energy_drift", res.summary["energy_drift"], DRIFT_TOL))
                report.checks.append(CheckResult.bound(f"{res.key}:charge_drift", res.summary["charge_drift"], DRIFT_TOL))
            if res.value == 1.0:
                report.checks.append(CheckResult.bound(f"{res.key}:orbit_dist", res.summary["sup_orbit_dist"],
                                                       STANDING_WAVE_TOL))
                report.checks.append(self._energy_order(gs, evo, res, out))
        return report

    def _energy_order(self, gs: GroundState, evo: EvolutionConfig, res: RunResult, out: Path) -> CheckResult:
        """Halving dt divides the energy drift by about four."""
        fine = execute_job(RunJob("lambda", res.value, 1, gs, evo.halved(), str(out / "runs-halved")))
        coarse_drift = res.summary["energy_drift"]
        fine_drift = fine.summary.get("energy_drift", math.nan)
        if fine_drift < 1e-13:
            return CheckResult(name="energy_drift_order", status="info", worst_value=coarse_drift,
                               detail="drift at round-off level")
        ratio = coarse_drift / fine_drift
        low, high = ORDER_BAND
        return CheckResult(name="energy_drift_order", status="pass" if low <= ratio <= high else "fail",
                           worst_value=ratio, tolerance=high, detail=f"drifts {coarse_drift:.3e} / {fine_drift:.3e}")

    def _handle_stability(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        omega_c = params.omega_c
        if params.regime != "mass_sub" or omega_c is None or not omega_c < abs(params.omega) < 1:
            raise ParameterDomainError(
                f"stability needs p < 1+4/d and omega_c < |omega| < 1 (omega={params.omega}, omega_c={omega_c})")
        eps = cfg.sweep.epsilon
        report = self._new_report(cfg, params, epsilon=eps, control=STANDING_WAVE_TOL)
        gs = self._ground_state(params, grid)
        evo = evolution_config(cfg, grid, params)
        run_dir = str(out / f"runs-n{grid.n}")
        jobs = [RunJob("perturbed", 0.0, 0, gs, evo, run_dir)]
        jobs += [RunJob("perturbed", delta, seed, gs, evo, run_dir)
                 for delta in cfg.sweep.deltas if delta > 0 for seed in cfg.sweep.seeds]

        for res in dispatch(jobs, cfg.workers):
            report.runs.append(res.row())
            if res.verdict is None:
                report.checks.append(CheckResult(name=f"{res.key}:monitors", status="fail", detail=res.error))
                continue
            bound = STANDING_WAVE_TOL if res.value == 0 else eps
            if res.verdict.kind != "GlobalBounded":
                report.checks.append(CheckResult(name=f"{res.key}:verdict", status="fail",
                                                 worst_t=res.verdict.t_star, detail=res.verdict.kind))
                continue
            report.checks.append(CheckResult.bound(f"{res.key}:orbit_dist", res.summary["sup_orbit_dist"], bound))
            audit = second_moment_audit(res.record, params, global_run=True)
            audit.name = f"second_moment:{res.key}"
            report.audits.append(audit)

        report.checks.append(self._sandwich(gs, eps))
        return report

    def _sandwich(self, gs: GroundState, eps: float) -> CheckResult:
        """L_{ω±ε}(Q, iωQ) against r_{ω±ε}; strict convexity keeps both below."""
        params, rec = gs.params, gs.record
        e = (params.p + 1) / (params.p - 1) - params.d / 2
        s0 = gs.r_level / (1 - params.omega ** 2) ** e
        worst = -math.inf
        for sign in (1.0, -1.0):
            w = params.omega + sign * eps
            if not abs(w) < 1:
                continue
            level = stability_level(params.with_omega(w), s0).value
            worst = max(worst, rec.E + w * rec.C - level)
        return CheckResult(name="near_norm_sandwich", status="info", worst_value=worst,
                           detail="max over omega±eps of L(Q, i omega Q) - r")

    def _handle_instability(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        omega_c = params.omega_c
        endpoint = omega_c is not None and math.isclose(abs(params.omega), omega_c, rel_tol=1e-12)
        if params.regime == "mass_sub" and not (endpoint or abs(params.omega) < omega_c):
            raise ParameterDomainError(
                f"instability needs p >= 1+4/d or |omega| <= omega_c (omega={params.omega}, omega_c={omega_c})")
        regime = "endpoint" if params.regime == "mass_sub" and endpoint else (
            "mass_sub" if params.regime == "mass_sub" else "mass_super")
        report = self._new_report(cfg, params, margin_factor=MARGIN_FACTOR, virial=0.02,
                                  growth_factor=cfg.evolution.growth_factor)
        report.notes.append(f"margin regime: {regime}")
        gs = self._ground_state(params, grid)
        evo = evolution_config(cfg, grid, params)
        radii = tuple(sorted(R for R in cfg.sweep.radii if 2 * R < grid.r_max))
        if not radii:
            raise ParameterDomainError(f"no virial radius satisfies 2R < r_max = {grid.r_max}")
        weights = [build_weights(grid, R) for R in radii]
        run_dir = str(out / f"runs-n{grid.n}")
        lambdas = sorted(set(cfg.sweep.lambdas) | {1.0})
        jobs = [RunJob("lambda", lam, 0, gs, evo, run_dir, radii) for lam in lambdas]

        for res in dispatch(jobs, cfg.workers):
            row = res.row()
            report.runs.append(row)
            if res.verdict is None:
                report.checks.append(CheckResult(name=f"{res.key}:monitors", status="fail", detail=res.error))
                continue
            if res.value == 1.0:
                report.checks.append(CheckResult(name=f"{res.key}:control", status="info",
                                                 worst_value=res.summary.get("sup_orbit_dist"),
                                                 detail=res.verdict.kind))
                continue
            delta = margin_delta(gs, res.value, params, regime)
            row["margin_delta"] = delta
            report.checks.append(self._blowup_check(res, cfg.evolution.growth_factor))
            t_star = res.verdict.t_star or res.record.t[-1]
            pre = res.record.until(0.8 * t_star)
            c0 = None
            try:
                audit = localized_virial_audit(pre, weights, params)
                audit.name = f"localized_virial:{res.key}"
                report.audits.append(audit)
                c0 = audit.constants.get(f"C0_{'1' if regime == 'mass_super' else '2'}@{weights[-1].tag}")
            except ResolutionError as e:
                report.checks.append(CheckResult(name=f"{res.key}:localized_virial", status="info", detail=str(e)))
            rate = virial_rate_check(pre, weights[-1], params, delta, regime, c0, MARGIN_FACTOR)
            rate.name = f"{res.key}:{rate.name}"
            report.checks.append(rate)
            try:
                check = untruncated_virial_check(res.record, weights[-1], (0.0, 0.8 * t_star),
                                                 max_tail_share=UNTRUNCATED_TAIL_SHARE)
            except ResolutionError as e:
                check = CheckResult(name="untruncated_virial", status="info",
                                    detail=f"no sample with the solution inside R: {e}")
            check.name = f"{res.key}:{check.name}"
            report.checks.append(check)
            moment_audit = second_moment_audit(res.record, params, global_run=False)
            moment_audit.name = f"second_moment:{res.key}"
            report.audits.append(moment_audit)
        return report

    def _blowup_check(self, res: RunResult, growth_factor: float) -> CheckResult:
        verdict = res.verdict
        name = f"{res.key}:blowup"
        if verdict.kind == "BlowUp":
            return CheckResult(name=name, status="pass", worst_t=verdict.t_star, detail=verdict.trigger)
        growth = res.summary.get("h1_growth", 0.0)
        if growth >= growth_factor:
            return CheckResult(name=name, status="pass", worst_value=growth, tolerance=growth_factor,
                               detail="Undecided: H1 growth at horizon")
        return CheckResult(name=name, status="fail", worst_value=growth, tolerance=growth_factor,
                           detail=verdict.kind)

    def _handle_scaling_law(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        base, grid = resolve_params(cfg), build_grid(cfg)
        omegas = sorted(set(abs(w) for w in cfg.sweep.omegas))
        if not all(0 <= w < 1 for w in omegas):
            raise ParameterDomainError("scaling-law omegas must lie in [0, 1)")
        e = (base.p + 1) / (base.p - 1) - base.d / 2
        report = self._new_report(cfg, base, scaling=SCALING_TOL)
        report.constants["exponent"] = e

        levels = []
        for w in omegas:
            gs = self._ground_state(base.with_omega(w), grid)
            normalized = gs.r_level / (1 - w ** 2) ** e
            levels.append(gs.r_level)
            report.runs.append({"omega": w, "S": gs.r_level, "normalized": normalized})
        ref = report.runs[0]["normalized"]
        for row in report.runs:
            row["ratio"] = row["normalized"] / ref
        worst = max(abs(row["ratio"] - 1) for row in report.runs)
        report.checks.append(CheckResult.bound("normalized_constancy", worst, SCALING_TOL))
        decreasing = all(b < a for a, b in zip(levels, levels[1:]))
        report.checks.append(CheckResult(name="r_omega_decreasing", status="pass" if decreasing else "fail"))

        omega_c = base.omega_c
        if base.regime == "mass_sub" and omega_c is not None:
            for w in (w for w in omegas if omega_c < w < 1 - CURVATURE_STEP):
                stencil = [self._ground_state(base.with_omega(x), grid).r_level
                           for x in (w - CURVATURE_STEP, w, w + CURVATURE_STEP)]
                second = stencil[0] - 2 * stencil[1] + stencil[2]
                report.checks.append(CheckResult(name=f"convexity@{w:g}", status="pass" if second > 0 else "fail",
                                                 worst_value=second, tolerance=0.0))
            s0 = report.runs[0]["normalized"]
            report.constants["curvature_sign_change"] = omega_c
            report.constants["closed_form_curvature@omega_c"] = stability_level(base.with_omega(omega_c), s0).curvature
        return report

    def _handle_identities(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        report = self._new_report(cfg, params, tol_k=config.TOL_K, tol_k_extrapolated=config.TOL_K_EXTRAPOLATED,
                                  cross_method=CROSS_METHOD_TOL)
        gs = self._ground_state(params, grid)
        coarse = self._ground_state(params, make_grid(grid.d, grid.r_max, grid.n // 2))
        report.checks.extend(validation_checks(gs))
        for name, value in extrapolated_pohozaev(coarse, gs).items():
            report.checks.append(CheckResult.bound(f"pohozaev_extrapolated_{name}", value, config.TOL_K_EXTRAPOLATED))
        report.checks.append(CheckResult(name="record_consistent",
                                         status="pass" if gs.record.consistent(params, 1e-12) else "fail"))
        t_0m1 = gs.record.T_0m1
        if t_0m1 is not None:
            rel = abs(t_0m1 - gs.record.kinetic / params.d) / gs.record.kinetic
            report.checks.append(CheckResult.bound("T_0m1_is_kinetic_over_d", rel, config.TOL_K))

        for name in cfg.sweep.indices:
            idx = VirialIndex.named(name, params)
            try:
                value = lagrange_degeneracy_check(gs, idx)
                report.checks.append(CheckResult(name=f"lagrange_{name}", status="pass", worst_value=value))
            except CharacterizationError as e:
                report.checks.append(CheckResult(name=f"lagrange_{name}", status="fail", detail=str(e)))
            report.checks.append(self._cross_method(gs, idx))

        if params.regime == "mass_critical":
            closed = mass_critical_closed_form(gs)
            rel = abs(closed - gs.r_level) / gs.r_level
            report.checks.append(CheckResult.bound("mass_critical_closed_form", rel, 1e-2))
            report.constants["nu"] = mass_critical_nu(gs)
        return report

    def _handle_inequalities(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        report = self._new_report(cfg, params, gn=1e-3, sobolev_refinement=SOBOLEV_REFINE_TOL)
        radii = (1.0, 2.0, 4.0)
        c_gn0 = gn_constant_estimate(params.d, params.p, grid)
        corpus = random_radial_corpus(grid, cfg.sweep.corpus_size, cfg.seed)
        audit = inequality_battery(corpus, params, radii, c_gn0=c_gn0)
        report.audits.append(audit)

        fine = random_radial_corpus(grid.refined(), cfg.sweep.corpus_size, cfg.seed)
        fine_audit = inequality_battery(fine, params, radii, c_gn0=c_gn0)
        coarse_c = audit.constants["radial_sobolev_C"]
        fine_c = fine_audit.constants["radial_sobolev_C"]
        rel = abs(coarse_c - fine_c) / fine_c
        report.checks.append(CheckResult.bound("radial_sobolev_refinement", rel, SOBOLEV_REFINE_TOL,
                                               detail=f"C={coarse_c:.6g} (n), {fine_c:.6g} (2n)"))
        report.constants.update(C_GN0=c_gn0, radial_sobolev_C=fine_c)

        if params.regime == "mass_critical":
            gs = self._ground_state(params, grid)
            closed = mass_critical_closed_form(gs)
            rel = abs(closed - gs.r_level) / gs.r_level
            report.checks.append(CheckResult.bound("mass_critical_closed_form", rel, 1e-2))
            report.constants["closed_form_with_C_GN0"] = mass_critical_closed_form(gs, c_gn0)
        return report

    def _handle_second_moment(self, cfg: ExperimentConfig, out: Path) -> ExperimentReport:
        params, grid = resolve_params(cfg), build_grid(cfg)
        report = self._new_report(cfg, params, identity=1e-3)
        gs = self._ground_state(params, grid)
        evo = evolution_config(cfg, grid, params)
        run_dir = str(out / "runs")
        lam_neg = self._negative_energy_lambda(gs)
        report.constants["negative_energy_lambda"] = lam_neg
        jobs = [RunJob("lambda", lam, 0, gs, evo, run_dir) for lam in sorted(set(cfg.sweep.lambdas) | {lam_neg})]

        for res in dispatch(jobs, cfg.workers):
            report.runs.append(res.row())
            if res.verdict is None:
                report.checks.append(CheckResult(name=f"{res.key}:monitors", status="fail", detail=res.error))
                continue
            global_run = res.verdict.kind == "GlobalBounded"
            audit = second_moment_audit(res.record, params, global_run=global_run)
            audit.name = f"second_moment:{res.key}"
            report.audits.append(audit)
            if res.value == lam_neg:
                flagged = "non-global predicted" in audit.flags
                blew_up = res.verdict.kind == "BlowUp"
                report.checks.append(CheckResult(name="negative_energy_flagged",
                                                 status="pass" if flagged and blew_up else "fail",
                                                 worst_t=res.verdict.t_star, detail=res.verdict.kind))
            if global_run:
                idx = "0m1" if params.regime == "mass_sub" else "d2"
                report.checks.append(membership_audit(res.record, params, idx, gs.r_level))
        return report

    @staticmethod
    def _negative_energy_lambda(gs: GroundState) -> float:
        """λ with E(λQ, iλωQ) < 0: 1.5 times the root of the energy along the ray."""
        rec, params = gs.record, gs.params
        quad = (1 + params.omega ** 2) * rec.mass / 2 + rec.kinetic / 2
        root = (quad * (params.p + 1) / rec.potential) ** (1 / (params.p - 1))
        return float(round(1.5 * root, 6))


def _failed_names(report: ExperimentReport) -> str:
    names = [c.name for c in report.checks if c.status == "fail"]
    names += [f"{a.name}/{c.name}" for a in report.audits for c in a.checks if c.status == "fail"]
    return ", ".join(names[:5])


def _run_named(name: str, cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment != name:
        cfg = cfg.model_copy(update={"experiment": name})
    return LabRunner().run(cfg)


def run_ground_state(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("ground-state", cfg)


def run_evolve(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("evolve", cfg)


def run_stability(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("stability", cfg)


def run_instability(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("instability", cfg)


def run_scaling_law(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("scaling-law", cfg)


def run_identities(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("identities", cfg)


def run_inequalities(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("inequalities", cfg)


def run_second_moment(cfg: ExperimentConfig) -> ExperimentReport:
    return _run_named("second-moment", cfg)
