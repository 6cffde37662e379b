"""Tests for the trajectory monitors, virial weights and post-run audits."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import InconsistencyError, ParameterDomainError, ResolutionError
from evolution import EvolutionConfig, TrajectoryRecord, compact_bump, evolve, make_lambda_data
from field_core import RadialField, StateSnapshot, make_grid, make_params
from functionals import energy_charge
from monitors import (
    ConservationMonitor,
    VirialMonitor,
    build_weights,
    inequality_battery,
    localized_virial_audit,
    margin_delta,
    membership_audit,
    orbit_distance,
    phase_space_distance,
    random_radial_corpus,
    second_moment_audit,
    untruncated_virial_check,
    virial_rate_check,
)


@pytest.fixture(scope="module")
def bump_run():
    grid = make_grid(3, 40.0, 1024)
    params = make_params(3, 3.0, 1.0, 0.0)
    init = StateSnapshot(compact_bump(grid, center=6.0, width=2.0, amplitude=0.5), RadialField.zeros(grid))
    weights = [build_weights(grid, R) for R in (10.0, 15.0)]
    monitors = [VirialMonitor(w, params, tagged=True) for w in weights]
    cfg = EvolutionConfig.for_grid(grid, params, t_end=2.0, sample_spacing=0.02)
    record, verdict = evolve(init, params, cfg, monitors)
    return params, weights, record, verdict


def test_weights_shape():
    grid = make_grid(3, 40.0, 1024)
    w = build_weights(grid, 5.0)
    r = grid.r
    assert_allclose(w.psi[r <= 5.0], r[r <= 5.0], rtol=1e-12)
    assert np.all(w.phi[r <= 5.0] == 3.0)
    assert np.all(w.phi[r >= 10.0] == 0.0)
    assert np.all(np.diff(w.phi) <= 1e-12)
    assert w.dpsi.max() <= 1 + 1e-10
    assert w.tag == "5"
    with pytest.raises(ParameterDomainError):
        build_weights(grid, 20.0)


def test_untruncated_virial_identity(bump_run):
    params, weights, record, verdict = bump_run
    assert verdict.kind == "GlobalBounded"
    assert "I_R1@15" in record
    check = untruncated_virial_check(record, weights[-1])
    assert check.status == "pass", check


def test_localized_virial_constants(bump_run):
    params, weights, record, _ = bump_run
    audit = localized_virial_audit(record, weights, params)
    assert {"C0_1@10", "C0_1@15", "C0_2@10", "C0_2@15"} <= set(audit.constants)
    assert audit.constants["C0_est"] == max(audit.constants["C0_1@10"], audit.constants["C0_1@15"])
    short = record.until(2 * record.t[1])
    with pytest.raises(ResolutionError):
        localized_virial_audit(short, weights, params)


def test_conservation_monitor_matches_functionals(cubic_gs):
    s = make_lambda_data(cubic_gs, 0.9)
    row = ConservationMonitor(cubic_gs.params).sample(s)
    energy, charge = energy_charge(s, cubic_gs.params)
    assert_allclose(row["E"], energy, rtol=1e-12)
    assert_allclose(row["C"], charge, rtol=1e-12)
    assert_allclose(row["K"], row["K_d2"] + cubic_gs.params.q * row["K1"], rtol=1e-12)


def test_orbit_distance_ignores_phase(cubic_gs):
    theta = 0.7
    phase = np.exp(1j * theta)
    q = cubic_gs.profile
    s = StateSnapshot(q.scale(phase), q.scale(1j * cubic_gs.params.omega * phase))
    assert orbit_distance(s, cubic_gs) <= 1e-10
    assert phase_space_distance(s, cubic_gs, theta) <= 1e-10
    assert phase_space_distance(s, cubic_gs, 0.0) > 0.1


def test_second_moment_audit_on_standing_wave(cubic_gs):
    params = cubic_gs.params
    cfg = EvolutionConfig.for_grid(cubic_gs.grid, params, t_end=1.5, sample_spacing=0.05)
    record, verdict = evolve(make_lambda_data(cubic_gs, 1.0), params, cfg)
    assert verdict.kind == "GlobalBounded"
    audit = second_moment_audit(record, params)
    assert audit.passed, [c for c in audit.checks if c.status == "fail"]
    assert "non-global predicted" not in audit.flags
    assert audit.check("identity").status == "pass"


def negative_energy_record():
    # f = 1 + 20t², E = −1, and kinetic = v_sq chosen so f'' matches the identity exactly
    rec = TrajectoryRecord(["f", "fprime", "v_sq", "kinetic", "E", "C"])
    for t in np.linspace(0.0, 0.5, 26):
        share = (30 - 40 * t ** 2) / 8
        rec.append(t, {"f": 1 + 20 * t ** 2, "fprime": 40 * t, "v_sq": share, "kinetic": share,
                       "E": -1.0, "C": 0.0})
    return rec


def test_negative_energy_is_flagged():
    params = make_params(3, 3.0, 1.0, 0.0)
    rec = negative_energy_record()
    audit = second_moment_audit(rec, params, global_run=False)
    assert "non-global predicted" in audit.flags
    assert audit.check("negative_energy").status == "info"
    assert audit.check("identity").status == "pass"
    assert audit.passed
    engaged = audit.check("positive_part_nonincreasing")
    assert engaged.status == "info"
    assert engaged.detail == "mechanism engaged"
    assert not second_moment_audit(rec, params, global_run=True).passed


def test_margin_delta_regimes(cubic_gs, quadratic_gs):
    assert margin_delta(cubic_gs, 1.05) > 0
    assert margin_delta(quadratic_gs, 1.05) > 0
    with pytest.raises(ParameterDomainError):
        margin_delta(cubic_gs, 1.0)
    with pytest.raises(ParameterDomainError):
        margin_delta(cubic_gs, 1.05, regime="critical")


def test_margin_delta_rejects_negative_margin(cubic_gs):
    # the endpoint formula is meaningless away from omega_c and comes out negative here
    with pytest.raises(InconsistencyError):
        margin_delta(cubic_gs, 1.05, regime="endpoint")


def membership_record(L, K):
    rec = TrajectoryRecord(["L", "K_d2"])
    for i, (a, b) in enumerate(zip(L, K)):
        rec.append(0.1 * i, {"L": a, "K_d2": b})
    return rec


def test_membership_audit():
    params = make_params(3, 3.0, 1.0, 0.0)
    held = membership_audit(membership_record([0.5] * 5, [1.0, 0.8, 0.6, 0.7, 0.9]), params, "d2", 1.0)
    assert held.status == "pass"
    assert held.detail == "plus"
    flipped = membership_audit(membership_record([0.5] * 5, [-1.0, -0.5, 0.2, -0.1, -0.3]), params, "d2", 1.0)
    assert flipped.status == "fail"
    assert flipped.worst_t == pytest.approx(0.2)
    outside = membership_audit(membership_record([1.5] * 5, [1.0] * 5), params, "d2", 1.0)
    assert outside.status == "info"


def test_membership_is_invariant_below_the_level(cubic_gs):
    params = cubic_gs.params
    cfg = EvolutionConfig.for_grid(cubic_gs.grid, params, t_end=1.0, sample_spacing=0.05)
    record, _ = evolve(make_lambda_data(cubic_gs, 0.9), params, cfg)
    check = membership_audit(record, params, "d2", cubic_gs.r_level)
    assert check.status == "pass"
    assert check.detail == "plus"


def test_random_corpus_is_seeded_and_compact():
    grid = make_grid(3, 20.0, 400)
    a = random_radial_corpus(grid, 4, seed=5)
    b = random_radial_corpus(grid, 4, seed=5)
    c = random_radial_corpus(grid, 4, seed=6)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert not np.array_equal(a[0].values, c[0].values)
    far = grid.r >= grid.r_max / 2
    assert all(not f.values[far].any() for f in a)


def test_inequality_battery_on_corpus():
    grid = make_grid(3, 20.0, 400)
    params = make_params(3, 3.0, 1.0, 0.0)
    corpus = random_radial_corpus(grid, 10, seed=0)
    audit = inequality_battery(corpus, params)
    assert audit.check("hardy").status == "pass"
    assert audit.check("gagliardo_nirenberg").status == "pass"
    assert "C_GN estimated from the corpus" in audit.flags
    assert audit.constants["radial_sobolev_C"] > 0
    assert audit.constants["hardy_min_margin"] > 0


def rate_record(tail, n=11, slope1=2.0, slope2=0.5):
    rec = TrajectoryRecord(["I_R1@5", "I_R2@5", "tail_pot@5", "mass"])
    for t in np.linspace(0.0, 1.0, n):
        rec.append(t, {"I_R1@5": slope1 * t, "I_R2@5": slope2 * t, "tail_pot@5": tail, "mass": 1.0})
    return rec


@pytest.mark.parametrize("regime, status", [("mass_super", "pass"), ("mass_sub", "fail"), ("endpoint", "fail")])
def test_virial_rate_grades_the_regime_column(regime, status):
    params = make_params(3, 3.0, 1.0, 0.0)
    w = build_weights(make_grid(3, 40.0, 400), 5.0)
    check = virial_rate_check(rate_record(0.01), w, params, delta=1.0, regime=regime)
    assert check.status == status
    assert check.tolerance == pytest.approx(0.9)
    assert check.worst_value == pytest.approx(2.0 if regime == "mass_super" else 0.5)
    assert "9 samples graded" in check.detail


def test_virial_rate_skips_samples_with_heavy_exterior():
    params = make_params(3, 3.0, 1.0, 0.0)
    w = build_weights(make_grid(3, 40.0, 400), 5.0)
    # 1.5 * tail alone exceeds 0.1 * delta
    assert virial_rate_check(rate_record(1.0), w, params, 1.0, "mass_sub").status == "info"
    # C_0 / R² · mass = 2 exceeds it as well
    assert virial_rate_check(rate_record(0.0), w, params, 1.0, "mass_super", c0=50.0).status == "info"
    assert virial_rate_check(rate_record(0.0, n=4), w, params, 1.0, "mass_super").status == "info"


def tail_record():
    rec = TrajectoryRecord(["I_R1", "I_R2", "tail_pot", "potential", "K_d2"])
    for t in np.linspace(0.0, 1.0, 21):
        late = t > 0.72
        rec.append(t, {"I_R1": -t ** 2, "I_R2": 0.0, "tail_pot": 0.5 if late else 0.0, "potential": 1.0,
                       "K_d2": 2 * t + (1.0 if late else 0.0)})
    return rec


def test_untruncated_check_drops_samples_with_mass_beyond_R():
    w = build_weights(make_grid(3, 40.0, 400), 5.0)
    rec = tail_record()
    assert untruncated_virial_check(rec, w).status == "fail"
    kept = untruncated_virial_check(rec, w, max_tail_share=1e-3)
    assert kept.status == "pass"
    assert kept.worst_t < 0.72
    with pytest.raises(ResolutionError):
        untruncated_virial_check(rec, w, t_window=(0.75, 1.0), max_tail_share=1e-3)


def test_mass_sub_margin_is_the_sum_of_both_parts(quadratic_gs):
    lam = 1.05
    # off the identity r = S(Q) the two parts no longer collapse into one expression
    gs = replace(quadratic_gs, r_level=quadratic_gs.r_level * (1 + 1e-3))
    params, rec = gs.params, gs.record
    p, q, w = params.p, params.q, params.omega
    k2 = 1 - w ** 2
    level = lam ** 2 * (k2 / 2 * rec.mass + rec.kinetic / 2) - lam ** (p + 1) * rec.potential / (p + 1)
    first = (q + 2) * (gs.r_level - level)
    second = q * (w ** 2 * lam ** 2 * rec.mass - (q + 2) * w ** 2 / k2 * gs.r_level)
    assert params.regime == "mass_sub"
    assert margin_delta(gs, lam) == pytest.approx(first + second, rel=1e-12)
