import math

import numpy as np
import pytest

from src.errors import CFLViolation, HistoryGapError, ParameterError, PicardDivergenceError, SolverAbort
from src.evolution import (
    EquationSpec,
    SolverState,
    SteadyVelocity,
    VelocityHistory,
    VelocitySource,
    check_divergence_free,
    divergence_coefficients,
    etd_step,
    mollify_velocity,
    picard_solve,
    picard_time_bound,
    prescribed_velocity,
    run_backward,
    run_forward,
    shear_velocity,
    sqg_velocity,
)
from src.initial_conditions import random_smooth_field, single_mode
from src.molecule_lab import transfer_residual
from src.spectral_core import Field, dealias, inner, semigroup_step

PRESCRIBED = dict(velocity_source=VelocitySource.PRESCRIBED)


def constant_velocity(grid, c):
    return SteadyVelocity([Field.constant(grid, c), Field.zeros(grid)])


# ----- EquationSpec -----
@pytest.mark.parametrize("alpha", [0.0, -0.1, 0.6])
def test_alpha_window(alpha):
    with pytest.raises(ValueError, match="alpha"):
        EquationSpec(alpha=alpha)


def test_spec_rejects_unknown_velocity_kind_and_negative_viscosity():
    with pytest.raises(ValueError):
        EquationSpec(prescribed_velocity="vortex")
    with pytest.raises(ValueError):
        EquationSpec(epsilon_visc=-1.0)
    with pytest.raises(ValueError):
        EquationSpec(cfl_limit=0.0)


# ----- Velocities -----
def test_sqg_velocity_of_sine(grid32):
    theta = Field.from_function(grid32, lambda x1, x2: np.sin(x1))
    u1, u2 = sqg_velocity(theta)
    x1, _ = grid32.coordinates()
    assert np.max(np.abs(u1.values)) < 1e-13
    np.testing.assert_allclose(u2.values, -np.cos(x1) * np.ones(grid32.shape), atol=1e-13)


def test_sqg_velocity_is_divergence_free(smooth_field):
    v = sqg_velocity(smooth_field)
    assert np.max(np.abs(divergence_coefficients(v))) < 1e-12
    check_divergence_free(v)


def test_sqg_velocity_of_constant_vanishes(grid32):
    for component in sqg_velocity(Field.constant(grid32, 4.0)):
        assert np.max(np.abs(component.values)) < 1e-14


def test_mollifier_keeps_constants_and_sup_norm(grid32):
    constant = (Field.constant(grid32, 2.0), Field.constant(grid32, -1.0))
    smoothed = mollify_velocity(constant, 0.3)
    np.testing.assert_allclose(smoothed[0].values, 2.0, atol=1e-14)
    np.testing.assert_allclose(smoothed[1].values, -1.0, atol=1e-14)

    shear = shear_velocity(grid32)
    for eps in (0.05, 0.2, 1.0):
        out = mollify_velocity(shear, eps)
        assert np.max(np.abs(out[0].values)) <= np.max(np.abs(shear[0].values)) + 1e-10


def test_mollifier_small_width_limit(grid32):
    shear = shear_velocity(grid32)
    out = mollify_velocity(shear, 1e-2)
    assert np.max(np.abs(out[0].values - shear[0].values)) < 1e-4
    with pytest.raises(ParameterError):
        mollify_velocity(shear, 0.0)


def test_prescribed_velocities_are_divergence_free(grid32):
    for kind in ("zero", "shear", "cellular"):
        v = prescribed_velocity(grid32, EquationSpec(prescribed_velocity=kind, **PRESCRIBED))
        check_divergence_free(v.at(0.0))
    assert prescribed_velocity(grid32, EquationSpec(prescribed_velocity="shear")).sup_norm() == pytest.approx(1.0)


# ----- Stepping -----
def test_pure_dissipation_step_is_exact(grid32):
    spec = EquationSpec(alpha=0.25, epsilon_visc=0.01, **PRESCRIBED)
    mode = single_mode(grid32, (2, 1))
    state = etd_step(SolverState(theta=mode, time=0.0, step_count=0, dt=0.01), spec)
    factor = math.exp(-0.01 * (5.0 ** 0.25 + 0.01 * 5.0))
    np.testing.assert_allclose(state.theta.values, factor * mode.values, atol=1e-14)
    assert state.step_count == 1
    assert state.time == pytest.approx(0.01)


def test_zero_velocity_run_matches_closed_form(grid32):
    spec = EquationSpec(alpha=0.4, **PRESCRIBED)
    mode = single_mode(grid32, (3, 0), phase="cos")
    result = run_forward(mode, spec, t_end=0.5, dt=1e-2)
    expected = math.exp(-0.5 * 3.0 ** 0.8) * mode.values
    np.testing.assert_allclose(result.state.theta.values, expected, atol=1e-8)


def test_constant_data_is_stationary(grid32):
    result = run_forward(Field.constant(grid32, 0.7), EquationSpec(), t_end=0.05, dt=1e-2)
    np.testing.assert_allclose(result.state.theta.values, 0.7, atol=1e-14)


def test_sqg_run_conserves_mean_and_l2(grid32, rng):
    theta0 = random_smooth_field(grid32, rng, mean_zero=False)
    norms = []
    result = run_forward(
        theta0,
        EquationSpec(alpha=0.25),
        t_end=0.05,
        dt=1e-3,
        observers=[lambda s: norms.append(math.sqrt(inner(s.theta, s.theta))) or None],
    )
    assert result.state.theta.mean() == pytest.approx(dealias(theta0).mean(), abs=1e-12)
    assert all(b <= a * (1.0 + 1e-10) for a, b in zip(norms, norms[1:]))
    assert result.records == []


def test_pure_transport_translates(grid32):
    spec = EquationSpec(include_dissipation=False, **PRESCRIBED)
    theta0 = Field.from_function(grid32, lambda x1, x2: np.sin(x1))
    result = run_forward(theta0, spec, t_end=0.1, dt=1e-3, velocity=constant_velocity(grid32, 1.0))
    x1, _ = grid32.coordinates()
    np.testing.assert_allclose(result.state.theta.values, np.sin(x1 - 0.1) * np.ones(grid32.shape), atol=1e-6)


def test_cfl_violation_reports_advisory_dt(grid32):
    spec = EquationSpec(**PRESCRIBED)
    state = SolverState(theta=single_mode(grid32, (1, 1)), time=0.0, step_count=0, dt=0.1)
    with pytest.raises(CFLViolation) as info:
        etd_step(state, spec, constant_velocity(grid32, 1.0))
    assert 0 < info.value.advisory_dt < 0.1


def test_step_is_second_order_in_time(smooth_field):
    spec = EquationSpec(alpha=0.25, **PRESCRIBED)
    shear = SteadyVelocity(shear_velocity(smooth_field.grid))

    def solve(dt):
        return run_forward(smooth_field, spec, t_end=0.2, dt=dt, velocity=shear).state.theta

    reference = solve(0.000625)
    errors = []
    for dt in (0.01, 0.005):
        diff = solve(dt) - reference
        errors.append(math.sqrt(inner(diff, diff)))
    assert 3.0 <= errors[0] / errors[1] <= 5.0


def test_non_finite_step_aborts_with_last_good_state(grid32):
    spec = EquationSpec(cfl_limit=1e300, **PRESCRIBED)
    state = SolverState(theta=Field.constant(grid32, 1e200), time=0.0, step_count=0, dt=1e-3)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(SolverAbort) as info:
            etd_step(state, spec, constant_velocity(grid32, 1e150))
    assert info.value.last_good is state


def test_observers_see_every_step_and_dt_is_adjusted(grid32):
    spec = EquationSpec(**PRESCRIBED)
    result = run_forward(
        single_mode(grid32, (1, 0)), spec, t_end=0.1, dt=0.03, observers=[lambda s: {"seen": 1.0}]
    )
    assert len(result.records) == 4
    assert result.records[0]["time"] == 0.0
    assert result.state.dt == pytest.approx(0.1 / 3)
    assert result.state.time == pytest.approx(0.1)


def test_nonpositive_horizon_rejected(grid32):
    with pytest.raises(ParameterError):
        run_forward(Field.zeros(grid32), EquationSpec(), t_end=0.0, dt=1e-3)
    with pytest.raises(ParameterError):
        run_forward(Field.zeros(grid32), EquationSpec(), t_end=1.0, dt=-1e-3)


# ----- Velocity history -----
def test_history_interpolates_and_rejects_gaps(grid32):
    history = VelocityHistory(grid32, dt=0.1)
    with pytest.raises(HistoryGapError):
        history.at(0.0)
    history.record(0.0, (Field.constant(grid32, 1.0), Field.zeros(grid32)))
    history.record(0.1, (Field.constant(grid32, 3.0), Field.zeros(grid32)))
    np.testing.assert_allclose(history.at(0.05)[0].values, 2.0)
    assert history.covers(0.0, 0.1)
    assert not history.covers(0.0, 0.2)
    with pytest.raises(HistoryGapError):
        history.at(0.2)
    with pytest.raises(ParameterError):
        history.record(0.1, (Field.zeros(grid32), Field.zeros(grid32)))

    history.record(0.5, (Field.zeros(grid32), Field.zeros(grid32)))
    with pytest.raises(HistoryGapError):
        history.at(0.3)


def test_forward_run_records_history(grid32, smooth_field):
    result = run_forward(smooth_field, EquationSpec(), t_end=0.01, dt=5e-3, record_history=True)
    assert len(result.history) == 3
    assert result.history.covers(0.0, 0.01)


# ----- Backward runs -----
def test_backward_at_time_zero_is_identity(smooth_field):
    state = run_backward(smooth_field, None, EquationSpec(), t=0.0, dt=1e-2)
    np.testing.assert_allclose(state.theta.values, dealias(smooth_field).values, atol=1e-14)


def test_backward_without_velocity_is_fractional_heat_flow(smooth_field):
    spec = EquationSpec(alpha=0.3, **PRESCRIBED)
    state = run_backward(smooth_field, None, spec, t=0.2, dt=1e-2)
    expected = semigroup_step(dealias(smooth_field), 0.2, 0.6)
    np.testing.assert_allclose(state.theta.values, expected.values, atol=1e-12)


def test_backward_needs_covering_history(grid32, smooth_field):
    history = VelocityHistory(grid32, dt=0.01)
    history.record(0.0, (Field.zeros(grid32), Field.zeros(grid32)))
    with pytest.raises(HistoryGapError):
        run_backward(smooth_field, history, EquationSpec(), t=0.1, dt=0.01)


def test_duality_with_steady_shear(grid32, rng):
    spec = EquationSpec(alpha=0.25, **PRESCRIBED)
    theta0 = random_smooth_field(grid32, rng)
    psi0 = random_smooth_field(grid32, rng)
    shear = SteadyVelocity(shear_velocity(grid32))
    assert transfer_residual(theta0, psi0, spec, t=0.1, dt=5e-3, velocity=shear) < 1e-3


# ----- Picard -----
@pytest.fixture
def picard_spec():
    return EquationSpec(alpha=0.25, epsilon_visc=0.1, **PRESCRIBED)


def test_picard_rejects_long_horizon(picard_spec, smooth_field):
    t_bound = picard_time_bound(picard_spec, 0.0)
    with pytest.raises(ParameterError, match="contraction"):
        picard_solve(smooth_field, None, picard_spec, 2.0 * t_bound, n_quad=8)
    with pytest.raises(ParameterError):
        picard_solve(smooth_field, None, picard_spec.model_copy(update={"epsilon_visc": 0.0}), 0.01, n_quad=8)


def test_picard_of_zero_stays_zero(picard_spec, grid32):
    out, report = picard_solve(Field.zeros(grid32), None, picard_spec, 0.05, n_quad=8)
    assert report.converged
    assert np.max(np.abs(out.values)) == 0.0


def test_picard_converges_to_the_semigroup(picard_spec, smooth_field):
    t_prime = picard_time_bound(picard_spec, 0.0)
    out, report = picard_solve(smooth_field, None, picard_spec, t_prime, n_quad=32)
    assert report.converged
    assert report.bound_value <= 0.5 + 1e-9
    assert max(report.ratios) <= 0.5
    exact = semigroup_step(dealias(smooth_field), t_prime, 0.5, picard_spec.epsilon_visc)
    error = math.sqrt(inner(out - exact, out - exact))
    assert error <= 1e-3 * math.sqrt(inner(exact, exact))


def test_picard_divergence_is_reported(picard_spec, grid32):
    with pytest.raises(PicardDivergenceError) as info:
        picard_solve(single_mode(grid32, (1, 0)), None, picard_spec, 20.0, n_quad=64, enforce_bound=False)
    assert len(info.value.ratios) >= 3
    assert all(r > 1.0 for r in info.value.ratios[-3:])


def test_picard_with_shear_matches_the_time_stepper(picard_spec, smooth_field):
    shear = SteadyVelocity(shear_velocity(smooth_field.grid))
    t_prime = picard_time_bound(picard_spec, 1.0)
    out, report = picard_solve(smooth_field, shear, picard_spec, t_prime, n_quad=32)
    assert report.converged
    assert report.bound_value <= 0.5 + 1e-9
    stepped = run_forward(smooth_field, picard_spec, t_prime, t_prime / 20, velocity=shear).state.theta
    diff = out - stepped
    assert math.sqrt(inner(diff, diff)) <= 1e-4 * math.sqrt(inner(stepped, stepped))
