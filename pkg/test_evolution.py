"""Tests for the Verlet integrator, initial data and trajectory records."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import MonitorAbort, ParameterDomainError
from evolution import (
    EvolutionConfig,
    TrajectoryRecord,
    compact_bump,
    discrete_mode,
    evolve,
    finite_propagation_check,
    h1_l2_norm,
    linear_energy,
    make_lambda_data,
    make_perturbed_data,
    nonlinearity,
    philox,
    random_radial_bumps,
    step,
)
from field_core import RadialField, StateSnapshot, apply_laplacian_gamma, inner, make_grid, make_params
from functionals import energy_charge
from monitors import OrbitMonitor


@pytest.fixture
def small_grid():
    return make_grid(3, 20.0, 400)


def random_state(grid, seed=7, scale=0.3):
    rng = philox(seed)
    u = RadialField(grid, scale * random_radial_bumps(grid, rng))
    v = RadialField(grid, scale * random_radial_bumps(grid, rng))
    return StateSnapshot(u, v)


def test_nonlinearity_handles_zeros():
    u = np.array([0.0, 2.0, -1.0 + 1.0j])
    out = nonlinearity(u, 3.0)
    assert_allclose(out, np.abs(u) ** 2 * u, rtol=1e-14)
    assert out[0] == 0


def test_shadow_energy_is_exact_for_the_linear_map(small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)
    cfg = EvolutionConfig.for_grid(small_grid, params, t_end=1.0, cfl=0.8)
    s = random_state(small_grid)
    start = linear_energy(s, params, cfg.dt)
    for _ in range(300):
        s = step(s, params, cfg.dt, nonlinear=False)
    assert_allclose(linear_energy(s, params, cfg.dt), start, rtol=1e-11)


def test_linear_energy_of_a_mode(small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)
    lam, mode = discrete_mode(small_grid, params.gamma)
    assert lam > 0
    lap = apply_laplacian_gamma(mode, params.gamma)
    assert_allclose(lap.values.real, -lam * mode.values.real, atol=1e-7 * lam)
    s = StateSnapshot(mode, RadialField.zeros(small_grid))
    assert_allclose(linear_energy(s, params), 0.5 * (1 + lam), rtol=1e-10)


def test_charge_is_conserved(small_grid):
    params = make_params(3, 3.0, 1.0, 0.2)
    cfg = EvolutionConfig.for_grid(small_grid, params)
    s = random_state(small_grid)
    _, c0 = energy_charge(s, params)
    for _ in range(200):
        s = step(s, params, cfg.dt)
    _, c1 = energy_charge(s, params)
    scale = abs(inner(s.u, s.u))
    assert abs(c1 - c0) <= 1e-11 * scale


def test_step_is_time_reversible(small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)
    cfg = EvolutionConfig.for_grid(small_grid, params)
    s0 = random_state(small_grid)
    s = s0
    for _ in range(100):
        s = step(s, params, cfg.dt)
    for _ in range(100):
        s = step(s, params, -cfg.dt)
    assert_allclose(s.u.values, s0.u.values, atol=1e-10)
    assert_allclose(s.v.values, s0.v.values, atol=1e-10)


def test_evolution_config_guard(small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)
    cfg = EvolutionConfig.for_grid(small_grid, params)
    assert cfg.dt <= cfg.cfl * small_grid.h
    bad = EvolutionConfig(dt=small_grid.h, t_end=1.0, cfl=0.4, blowup_h1_factor=1e3,
                          blowup_amp=1e6, monitor_stride=1)
    with pytest.raises(ParameterDomainError):
        bad.validate(small_grid, params)
    halved = cfg.halved()
    assert halved.dt == cfg.dt / 2
    assert halved.monitor_stride == 2 * cfg.monitor_stride


def test_standing_wave_persists(cubic_gs):
    params = cubic_gs.params
    cfg = EvolutionConfig.for_grid(cubic_gs.grid, params, t_end=2.0, sample_spacing=0.1)
    record, verdict = evolve(make_lambda_data(cubic_gs, 1.0), params, cfg, [OrbitMonitor(cubic_gs)])
    assert verdict.kind == "GlobalBounded"
    assert record["orbit_dist"].max() <= 1e-3
    energy = record["E"]
    assert np.max(np.abs(energy - energy[0])) <= 1e-5 * abs(energy[0])
    assert record.max_spacing <= 0.11


def test_negative_energy_data_blows_up(cubic_gs):
    params = cubic_gs.params
    init = make_lambda_data(cubic_gs, 2.0)
    energy, _ = energy_charge(init, params)
    assert energy < 0
    cfg = EvolutionConfig.for_grid(cubic_gs.grid, params, t_end=20.0, sample_spacing=0.05)
    _, verdict = evolve(init, params, cfg)
    assert verdict.kind == "BlowUp"
    assert verdict.trigger in ("h1_factor", "amplitude", "non_finite")
    assert verdict.t_star < 20.0


def test_perturbed_data(cubic_gs):
    a = make_perturbed_data(cubic_gs, 1e-2, 3)
    b = make_perturbed_data(cubic_gs, 1e-2, 3)
    c = make_perturbed_data(cubic_gs, 1e-2, 4)
    assert np.array_equal(a.u.values, b.u.values)
    assert not np.array_equal(a.u.values, c.u.values)
    zero = make_perturbed_data(cubic_gs, 0.0, 3)
    assert np.array_equal(zero.u.values, cubic_gs.profile.values)
    with pytest.raises(ParameterDomainError):
        make_perturbed_data(cubic_gs, -1.0, 0)
    with pytest.raises(ParameterDomainError):
        make_lambda_data(cubic_gs, 0.0)


def test_finite_propagation():
    grid = make_grid(3, 30.0, 600)
    params = make_params(3, 3.0, 0.0, 0.0)
    bump = compact_bump(grid, center=5.0, width=2.0, amplitude=0.2)
    init = StateSnapshot(bump, RadialField.zeros(grid))
    cfg = EvolutionConfig.for_grid(grid, params)
    s = init
    for _ in range(int(round(4.0 / cfg.dt))):
        s = step(s, params, cfg.dt)
    assert finite_propagation_check(init, s, support=7.0, margin=1.0) < 1e-3


def test_monitor_failure_keeps_partial_record(small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)

    class Failing:
        columns = ["boom"]

        def __init__(self):
            self.calls = 0

        def sample(self, snap):
            self.calls += 1
            if self.calls > 3:
                raise RuntimeError("boom")
            return {"boom": 0.0}

    cfg = EvolutionConfig.for_grid(small_grid, params, t_end=1.0, sample_spacing=0.05)
    with pytest.raises(MonitorAbort) as info:
        evolve(random_state(small_grid), params, cfg, [Failing()])
    assert isinstance(info.value.partial, TrajectoryRecord)
    assert len(info.value.partial) == 3


def test_trajectory_csv(tmp_path, small_grid):
    params = make_params(3, 3.0, 1.0, 0.0)
    cfg = EvolutionConfig.for_grid(small_grid, params, t_end=0.5, sample_spacing=0.1)
    record, verdict = evolve(random_state(small_grid), params, cfg)
    assert verdict.kind == "GlobalBounded"
    path = tmp_path / "trajectory.csv"
    record.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "mass", "kinetic"]
    back = TrajectoryRecord.from_csv(path)
    assert_allclose(back["E"], record["E"], rtol=0)
    assert len(record.until(0.25)) == 3
    assert math.isclose(h1_l2_norm(random_state(small_grid), params.gamma), record["H1"][0])
