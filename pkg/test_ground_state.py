"""Tests for the shooting solver, the polish and the variational path."""

import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from config import config
from errors import ConvergenceError, ParameterDomainError, ResolutionError
from field_core import VirialIndex, make_grid, make_params
from functionals import action_S, gn_quotient
from ground_state import (
    CROSSES,
    REBOUNDS,
    classifier_monotone,
    constrained_minimize_T,
    discrete_residual,
    extrapolated_pohozaev,
    find_ground_state,
    fit_tail_rate,
    lagrange_degeneracy_check,
    load_ground_state,
    mass_critical_closed_form,
    pohozaev_suite,
    rescale_omega,
    save_ground_state,
    series_coefficients,
    shoot,
    validation_checks,
)


def test_shoot_classifies_extreme_amplitudes(cubic_params):
    assert shoot(cubic_params, 50.0, 20.0).classification == CROSSES
    assert shoot(cubic_params, 1e-3, 60.0).classification == REBOUNDS


def test_shoot_rejects_bad_amplitude(cubic_params):
    with pytest.raises(ParameterDomainError):
        shoot(cubic_params, -1.0, 20.0)


@pytest.mark.parametrize("args", [(3, 3.0, 1.0, 0.5), (4, 2.0, 2.0, 0.3), (3, 2.0, 0.0, 0.0)])
def test_series_cancels_the_leading_linear_term(args):
    params = make_params(*args)
    sigma, d, gamma = params.sigma, params.d, params.gamma
    k2 = 1 - params.omega ** 2
    c2, _ = series_coefficients(params)
    assert math.isclose(c2, k2 / (2 * (2 * sigma + d)))
    r = np.array([0.2, 0.5, 1.0])
    q = r ** sigma + c2 * r ** (sigma + 2)
    dq = sigma * r ** (sigma - 1) + c2 * (sigma + 2) * r ** (sigma + 1)
    d2q = sigma * (sigma - 1) * r ** (sigma - 2) + c2 * (sigma + 2) * (sigma + 1) * r ** sigma
    linear = d2q + (d - 1) / r * dq - gamma / r ** 2 * q - k2 * q
    # only the r^{σ+2} remainder survives
    assert_allclose(linear, -k2 * c2 * r ** (sigma + 2), rtol=1e-9)


def test_ground_state_residual_and_shape(cubic_gs):
    assert cubic_gs.residual <= 1e-8
    q = cubic_gs.q
    assert q.min() >= 0
    assert cubic_gs.checks["monotone_tail"]
    assert np.max(np.abs(discrete_residual(q, cubic_gs.grid, cubic_gs.params))) <= 1e-8
    assert cubic_gs.checks["grid_residual"] <= 1e-8
    assert cubic_gs.truncation_residual is not None


def test_solution_lives_on_the_nested_refinement(cubic_gs):
    m = config.SOLVE_REFINE
    solution = cubic_gs.solution
    assert solution.grid == cubic_gs.grid.refined(m)
    assert cubic_gs.checks["solve_n"] == cubic_gs.grid.n * m
    assert np.max(np.abs(discrete_residual(solution.real, solution.grid, cubic_gs.params))) <= 1e-8
    # the working profile and the solution agree at the shared nodes up to discretization error
    shared = solution.real[m // 2::m]
    away = cubic_gs.grid.r >= 0.5
    assert_allclose(cubic_gs.q[away], shared[away], atol=1e-2 * shared.max())


def test_nehari_identity_is_exact_on_the_grid(cubic_gs):
    # kinetic = −⟨Δ_γQ, Q⟩ exactly, so K^{1,0}(Q) only sees the polish residual
    assert pohozaev_suite(cubic_gs)["10"] <= 1e-8


def test_pohozaev_suite_at_reduced_resolution(cubic_gs, quadratic_gs):
    for gs in (cubic_gs, quadratic_gs):
        suite = pohozaev_suite(gs)
        assert max(suite["d2"], suite["0m1"]) <= 1e-5
    assert pohozaev_suite(quadratic_gs)["2pm1"] <= 1e-5


@pytest.mark.parametrize("args", [
    (3, 3.0, 1.0, 0.5),
    (3, 2.0, 1.0, 0.3),
    (4, 2.0, 2.0, 0.0),
    (3, 7 / 3, 1.0, 0.2),
])
def test_raw_pohozaev_meets_tolerance_at_working_resolution(args):
    params = make_params(*args)
    gs = find_ground_state(params, make_grid(params.d, 40.0, 4096))
    assert gs.residual <= 1e-8
    suite = gs.checks["pohozaev"]
    worst = max(suite, key=suite.get)
    assert suite[worst] <= 1e-6, f"{worst}: {suite[worst]:.3e}"
    assert gs.checks["pohozaev_ok"]
    assert all(c.status == "pass" for c in validation_checks(gs) if c.name.startswith("pohozaev_"))


def test_failed_invariants_become_failed_checks(cubic_gs):
    broken = replace(cubic_gs, checks={**cubic_gs.checks, "monotone_tail": False, "tail_bound_ok": False,
                                       "pohozaev": {**cubic_gs.checks["pohozaev"], "d2": 1e-3}})
    by_name = {c.name: c for c in validation_checks(broken)}
    assert by_name["pohozaev_d2"].status == "fail"
    assert by_name["monotone_tail"].status == "fail"
    assert by_name["tail_bound"].status == "fail"
    assert by_name["pohozaev_0m1"].status == "pass"
    healthy = {c.name: c.status for c in validation_checks(cubic_gs)}
    assert healthy["tail_bound"] == "pass"
    assert "tail_sharp" in healthy


def test_richardson_improves_pohozaev(cubic_params, cubic_gs):
    coarse = find_ground_state(cubic_params, make_grid(3, 20.0, 512))
    extrapolated = extrapolated_pohozaev(coarse, cubic_gs)
    raw = pohozaev_suite(coarse)
    for name in ("d2", "0m1"):
        assert extrapolated[name] < raw[name]
    with pytest.raises(ResolutionError):
        extrapolated_pohozaev(cubic_gs, cubic_gs)


def test_classical_cubic_ground_state_converges_at_second_order():
    params = make_params(3, 3.0, 0.0, 0.0)
    states = [find_ground_state(params, make_grid(3, 16.0, n)) for n in (256, 512, 1024)]
    amplitudes = [gs.amplitude for gs in states]
    assert_allclose(amplitudes, amplitudes[-1], rtol=1e-8)
    assert_allclose(amplitudes[-1], 4.3373877, rtol=1e-4)
    mass = [gs.record.mass for gs in states]
    ratio = (mass[0] - mass[1]) / (mass[1] - mass[2])
    assert 3.0 <= ratio <= 5.0, ratio


def test_profile_vanishes_like_r_sigma():
    params = make_params(3, 3.0, 1.0, 0.0)
    gs = find_ground_state(params, make_grid(3, 12.0, 1024))
    solution = gs.solution
    r, q = solution.grid.r, solution.real
    window = (r >= 0.03) & (r <= 0.15)
    slope, _ = np.polyfit(np.log(r[window]), np.log(q[window]), 1)
    assert math.isclose(params.sigma, (math.sqrt(5) - 1) / 2)
    assert_allclose(slope, params.sigma, rtol=0.02)


def test_action_equals_kinetic_over_d(cubic_gs):
    rec = cubic_gs.record
    assert_allclose(rec.S, rec.kinetic / cubic_gs.params.d, rtol=1e-5)
    assert_allclose(rec.T_0m1, rec.S, rtol=1e-5)
    assert_allclose(cubic_gs.r_level, action_S(cubic_gs.solution, cubic_gs.params), rtol=1e-14)


def test_scan_log_is_monotone(cubic_gs):
    assert classifier_monotone(list(cubic_gs.scan_log))
    assert not classifier_monotone([{"a": 1.0, "classification": CROSSES},
                                    {"a": 2.0, "classification": REBOUNDS}])


def test_tail_decays_at_kappa(cubic_gs):
    slope = fit_tail_rate(cubic_gs.profile)
    assert_allclose(slope, -cubic_gs.params.kappa, rtol=0.05)


def test_lagrange_sign_for_characterizing_index(cubic_gs, quadratic_gs):
    assert lagrange_degeneracy_check(cubic_gs, VirialIndex.named("0m1", cubic_gs.params)) < 0
    assert lagrange_degeneracy_check(cubic_gs, VirialIndex.named("d2", cubic_gs.params)) < 0
    assert lagrange_degeneracy_check(quadratic_gs, VirialIndex.named("2pm1", quadratic_gs.params)) < 0


def test_lagrange_pairing_uses_the_derived_factors(cubic_gs, quadratic_gs):
    rec = cubic_gs.record
    value = lagrange_degeneracy_check(cubic_gs, VirialIndex.named("0m1", cubic_gs.params))
    assert_allclose(value, -(cubic_gs.params.d - 2) * rec.kinetic, rtol=1e-12)
    params, rec = quadratic_gs.params, quadratic_gs.record
    d, p, k2 = params.d, params.p, 1 - params.omega ** 2
    kappa = 4 - (d - 2) * (p - 1)
    expected = ((4 - d * (p - 1)) * k2 / 2 * (4 - d * (p - 1) - kappa) * rec.mass
                + (4 - (d - 2) * (p - 1)) / 2 * (4 - (d - 2) * (p - 1) - kappa) * rec.kinetic
                - (2 * (p + 1) - d * (p - 1)) / (p + 1) * (2 * (p + 1) - d * (p - 1) - kappa) * rec.potential)
    assert_allclose(lagrange_degeneracy_check(quadratic_gs, VirialIndex.named("2pm1", params)), expected,
                    rtol=1e-12)


def test_rescale_omega_is_exact():
    params = make_params(3, 3.0, 1.0, 0.0)
    base = find_ground_state(params, make_grid(3, 18.0, 768))
    moved = rescale_omega(base, 0.6)
    e = (params.p + 1) / (params.p - 1) - params.d / 2
    assert_allclose(moved.r_level, (1 - 0.36) ** e * base.r_level, rtol=1e-12)
    assert moved.residual <= 1e-8
    assert moved.checks["grid_residual"] <= 1e-8
    assert moved.solution.grid.n == base.solution.grid.n
    assert moved.params.omega == 0.6
    with pytest.raises(ParameterDomainError):
        rescale_omega(moved, 0.2)
    with pytest.raises(ResolutionError):
        rescale_omega(base, 0.6, target_grid=make_grid(3, 18.0, 96))


def test_rescale_onto_target_grid_is_polished():
    params = make_params(3, 3.0, 1.0, 0.0)
    base = find_ground_state(params, make_grid(3, 18.0, 512))
    target = make_grid(3, 18.0, 640)
    moved = rescale_omega(base, 0.5, target_grid=target)
    assert moved.grid == target
    assert moved.residual <= 1e-8
    assert moved.checks["grid_residual"] <= 1e-8
    assert "pohozaev" in moved.checks


def test_descent_fixed_point_from_shooting_output(cubic_gs):
    idx = VirialIndex.named("10", cubic_gs.params)
    out = constrained_minimize_T(cubic_gs.params, cubic_gs.grid, idx, seed_field=cubic_gs.profile)
    assert out.checks["iterations"] <= 5
    assert_allclose(out.r_level, cubic_gs.r_level, rtol=1e-8)


def test_descent_from_default_seed_agrees_with_shooting():
    params = make_params(3, 3.0, 1.0, 0.5)
    grid = make_grid(3, 16.0, 384)
    shot = find_ground_state(params, grid)
    idx = VirialIndex.named("10", params)
    out = constrained_minimize_T(params, grid, idx)
    assert out.method == "minimize"
    assert out.residual <= config.TOL_RES
    assert out.checks["grid_residual"] <= config.TOL_RES
    assert "pohozaev" in out.checks and "descent_residual" in out.checks
    assert_allclose(out.r_level, shot.r_level, rtol=1e-9)


def test_descent_that_cannot_meet_its_tolerance_raises():
    params = make_params(3, 3.0, 1.0, 0.5)
    grid = make_grid(3, 16.0, 384)
    idx = VirialIndex.named("0m1", params)
    # tol = 0 can only end in a stall or at the iteration cap
    with pytest.raises(ConvergenceError) as excinfo:
        constrained_minimize_T(params, grid, idx, max_iter=400, tol=0.0)
    assert "T" in excinfo.value.diagnostics
    assert excinfo.value.diagnostics["history_tail"]


def test_mass_critical_closed_form_matches_level(cubic_gs):
    params = make_params(3, 1 + 4 / 3, 1.0, 0.2)
    gs = find_ground_state(params, make_grid(3, 20.0, 1024))
    closed = mass_critical_closed_form(gs)
    assert_allclose(closed, gs.r_level, rtol=1e-2)
    with pytest.raises(ParameterDomainError):
        mass_critical_closed_form(cubic_gs)


def test_ground_state_archive(tmp_path, cubic_gs):
    save_ground_state(cubic_gs, tmp_path / "gs")
    assert (tmp_path / "gs" / "solution.csv").exists()
    back = load_ground_state(tmp_path / "gs")
    assert back.params == cubic_gs.params
    assert back.grid == cubic_gs.grid
    assert_allclose(back.q, cubic_gs.q, rtol=0, atol=0)
    assert_allclose(back.solution.values, cubic_gs.solution.values, rtol=0, atol=0)
    assert math.isclose(back.r_level, cubic_gs.r_level)
    assert back.record == cubic_gs.record


def test_find_ground_state_rejects_critical_power():
    params = make_params(3, 5.0, 1.0, 0.0)
    with pytest.raises(ParameterDomainError):
        find_ground_state(params, make_grid(3, 10.0, 128))


def test_gn_quotient_of_ground_state_is_finite(cubic_gs):
    assert 0 < gn_quotient(cubic_gs.profile, cubic_gs.params) < math.inf
