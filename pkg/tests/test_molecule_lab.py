import math

import numpy as np
import pytest

from src.errors import (
    ConstructionError,
    MaximumPrincipleRegime,
    MoleculeConditionError,
    ParameterError,
    ResolutionError,
)
from src.evolution import EquationSpec, SteadyVelocity, VelocitySource, run_backward, shear_velocity
from src.initial_conditions import random_smooth_field, shifted_bump
from src.molecule_lab import (
    LedgerParams,
    MoleculeLedger,
    MoleculeSpec,
    big_molecule_bound,
    center_velocity,
    concentration_integral,
    g_sequence,
    gamma_of_sigma,
    iteration_schedule,
    make_molecule,
    molecule_center,
    run_molecule_experiment,
    target_g,
    transfer_experiment,
    transfer_residual,
    validate_molecule,
)
from src.spectral_core import Field, Grid, dealias


@pytest.fixture
def molecule_grid():
    # box length 40 r for r = 0.1
    return Grid(dim=2, points_per_axis=64, box_length=4.0)


@pytest.fixture
def ledger():
    spec = MoleculeSpec(r=0.1).validate_against(0.25, 2)
    return MoleculeLedger.start(spec, LedgerParams(K=5.0), 0.25, 2)


# ----- Parameter windows -----
def test_gamma_of_sigma():
    assert gamma_of_sigma(2, 0.9) == pytest.approx(2.0 / 9.0)
    assert gamma_of_sigma(2, 1.0 - 1e-12) == pytest.approx(0.0, abs=1e-10)


def test_validate_against_fills_gamma():
    spec = MoleculeSpec(r=0.05).validate_against(0.25, 2)
    assert spec.gamma == pytest.approx(2.0 / 9.0)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(sigma=0.5), "sigma"),
        (dict(sigma=0.8 + 1e-9), "omega"),
        (dict(omega=0.6), "omega"),
        (dict(gamma=0.3), "gamma"),
        (dict(x0=(1.0,)), "x0"),
    ],
)
def test_validate_against_rejects(kwargs, match):
    with pytest.raises(MoleculeConditionError, match=match):
        MoleculeSpec(**kwargs).validate_against(0.25, 2)


def test_molecule_spec_field_checks():
    with pytest.raises(ValueError):
        MoleculeSpec(r=0.0)
    with pytest.raises(ValueError):
        MoleculeSpec(profile="gaussian")


# ----- Construction -----
def test_make_molecule_is_valid(molecule_grid):
    spec = MoleculeSpec(r=0.1)
    psi = make_molecule(spec, molecule_grid)
    report = validate_molecule(psi, spec)
    assert report.passed, report.violations
    assert report.moment <= report.moment_tolerance
    assert np.max(psi.values) > 0 > np.min(psi.values)


def test_saturated_molecule_fills_concentration_bound(molecule_grid):
    spec = MoleculeSpec(r=0.1, safety=1.0)
    psi = make_molecule(spec, molecule_grid, saturate=True)
    report = validate_molecule(psi, spec)
    assert report.passed, report.violations
    assert report.concentration >= 0.98 * report.concentration_bound


def test_make_molecule_needs_room(grid32):
    with pytest.raises(ConstructionError):
        make_molecule(MoleculeSpec(r=0.5), grid32)


def test_validate_molecule_flags_height(molecule_grid):
    spec = MoleculeSpec(r=0.1)
    assert validate_molecule(Field.zeros(molecule_grid), spec).passed
    psi = make_molecule(spec, molecule_grid)
    report = validate_molecule(psi * (10.0 / spec.safety), spec)
    assert "height" in report.violations


def test_concentration_integral(molecule_grid):
    center = molecule_center(MoleculeSpec(), molecule_grid)
    assert concentration_integral(Field.zeros(molecule_grid), center, 0.4) == 0.0

    spike = np.zeros(molecule_grid.shape)
    spike[32, 32] = 1.0
    assert concentration_integral(Field(molecule_grid, spike), center, 0.4) == 0.0

    bump = shifted_bump(molecule_grid, center=center, width=0.3)
    shifted = Field(molecule_grid, np.roll(bump.values, (5, -3), axis=(0, 1)))
    moved = (center[0] + 5 * molecule_grid.spacing, center[1] - 3 * molecule_grid.spacing)
    assert concentration_integral(shifted, moved, 0.4) == pytest.approx(
        concentration_integral(bump, center, 0.4), rel=1e-10
    )
    with pytest.raises(ParameterError):
        concentration_integral(bump, center, 1.0)


def test_center_velocity(grid32):
    center = (np.pi, 0.0)
    constant = (Field.constant(grid32, 2.0), Field.constant(grid32, -1.0))
    assert center_velocity(constant, center, 0.5) == pytest.approx((2.0, -1.0))
    mean = center_velocity(shear_velocity(grid32), center, 0.5)
    assert mean == pytest.approx((0.0, 0.0), abs=1e-12)
    with pytest.raises(ResolutionError):
        center_velocity(constant, center, 1.5 * grid32.spacing)


def test_big_molecule_bound(grid32):
    psi = Field.from_function(grid32, lambda x1, x2: np.sin(x1))
    report = big_molecule_bound(psi, psi * 0.5, MoleculeSpec(r=2.0))
    assert report.holds
    assert report.bound == pytest.approx(report.l1_initial)
    with pytest.raises(ParameterError):
        big_molecule_bound(psi, psi, MoleculeSpec(r=0.5))


def test_big_molecule_bound_after_backward_evolution():
    grid = Grid(dim=2, points_per_axis=128, box_length=40.0)
    spec = MoleculeSpec(r=1.0).validate_against(0.25, 2)
    psi0 = dealias(make_molecule(spec, grid))
    eq = EquationSpec(alpha=0.25, velocity_source=VelocitySource.PRESCRIBED)
    psi_t = run_backward(psi0, SteadyVelocity(shear_velocity(grid)), eq, 0.05, 1e-3).theta
    report = big_molecule_bound(psi0, psi_t, spec, rtol=1e-2)
    assert report.holds
    assert 0.0 < report.l1_final
    assert report.constant == pytest.approx(report.l1_initial)


# ----- Ledger arithmetic -----
def test_target_g(ledger):
    assert target_g(ledger, 0, 0.01) == pytest.approx(0.15)
    with_time = ledger.model_copy(update={"times": [0.01]})
    assert target_g(with_time, 1, 0.0) == pytest.approx(target_g(ledger, 0, 0.01))
    with pytest.raises(ParameterError):
        target_g(ledger, 2, 0.01)
    with pytest.raises(MaximumPrincipleRegime):
        target_g(ledger, 0, 1.0)


def test_g_sequence(ledger):
    assert g_sequence(ledger, [0.0, 0.0, 0.0]) == pytest.approx([0.1, 0.1, 0.1])
    values = g_sequence(ledger, [0.01] + [0.001] * 10)
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_f_value_starts_at_molecule_scale(ledger):
    assert ledger.f_value(0.0) == pytest.approx(0.1 ** ((2 + ledger.gamma) / (2 + ledger.omega)))
    assert ledger.f_value(0.1) > ledger.f_value(0.0)


def test_iteration_schedule():
    schedule = iteration_schedule(MoleculeSpec(r=0.1), LedgerParams(eta=0.1, delta_stop=0.05))
    assert schedule.times[0] == pytest.approx(0.01)
    assert schedule.times[1] == pytest.approx(0.001)
    assert schedule.stop_index == 40
    assert 0.05 - 1e-12 <= schedule.total <= 0.05 + 0.001

    near_one = iteration_schedule(MoleculeSpec(r=0.9), LedgerParams(eta=0.1, delta_stop=0.05))
    assert near_one.stop_index < schedule.stop_index


def test_ledger_experiment_without_velocity(molecule_grid):
    result = run_molecule_experiment(MoleculeSpec(r=0.1), None, alpha=0.25, dt=1e-3, grid=molecule_grid)
    assert result.mu == 0.0
    assert result.kmin <= 1e2
    assert result.c0 >= 1e-3
    assert result.checks_passed
    assert len(result.rows) == 41
    sums = [row["sum_s"] for row in result.rows]
    assert all(b > a for a, b in zip(sums, sums[1:]))
    for row in result.rows:
        if not math.isnan(row["conc_bound"]):
            assert row["conc"] <= row["conc_bound"]


def test_ledger_experiment_with_shear(molecule_grid):
    velocity = SteadyVelocity(shear_velocity(molecule_grid))
    result = run_molecule_experiment(MoleculeSpec(r=0.1), velocity, alpha=0.25, dt=1e-3, grid=molecule_grid)
    assert result.mu > 0.0
    assert math.isfinite(result.kmin)
    assert result.kmin >= 0.0
    assert result.c0 > 0.0
    assert len(result.rows) == 41
    assert result.ledger.K == result.kmin


# ----- Transfer identity -----
def test_transfer_without_velocity_is_exact(molecule_grid, rng):
    spec = EquationSpec(alpha=0.25, velocity_source=VelocitySource.PRESCRIBED)
    theta0 = random_smooth_field(molecule_grid, rng)
    psi0 = make_molecule(MoleculeSpec(r=0.1), molecule_grid)
    assert transfer_residual(theta0, psi0, spec, t=0.1, dt=1e-2) < 1e-8
    assert transfer_residual(theta0, psi0, spec, t=0.0, dt=1e-2) == 0.0


def test_transfer_report_duality_bound(molecule_grid, rng):
    spec = EquationSpec(alpha=0.25)
    theta0 = random_smooth_field(molecule_grid, rng)
    psi0 = make_molecule(MoleculeSpec(r=0.1), molecule_grid)
    report = transfer_experiment(theta0, psi0, spec, t=0.05, dt=1e-3)
    assert report.duality_holds
    with pytest.raises(ParameterError):
        transfer_experiment(theta0, Field.zeros(Grid(dim=2, points_per_axis=32)), spec, t=0.05, dt=1e-3)
