# src/nodes/transfer.py
import logging

from src.evolution import EquationSpec, VelocitySource
from src.initial_conditions import random_smooth_field
from src.molecule_lab import MoleculeSpec, make_molecule, transfer_experiment, validate_molecule
from src.schemas import DiagnosticsRecord, PresetOutcome, RunConfig
from src.spectral_core import Grid

logger = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-3
MIN_REDUCTION = 3.0
ZERO_VELOCITY_LIMIT = 1e-8


def default_config() -> RunConfig:
    return RunConfig(
        preset="transfer",
        # box of 40 r, fine enough that the bumps keep their nominal width r / 4
        grid=Grid(dim=2, points_per_axis=256, box_length=2.0),
        equation=EquationSpec(alpha=0.25, velocity_source=VelocitySource.SQG_COUPLED),
        molecule=MoleculeSpec(r=0.05),
        dt=5e-4,
        t_end=0.1,
    )


def _row(report, step: int, label: str) -> DiagnosticsRecord:
    return DiagnosticsRecord(time=report.t, step=step, run=label, **report.model_dump(exclude={"t"}))


def run(ctx) -> PresetOutcome:
    config = ctx.config
    grid = config.grid
    spec = config.equation
    molecule_spec = (config.molecule or MoleculeSpec()).validate_against(spec.alpha, grid.dim)
    outcome = PresetOutcome()

    psi0 = make_molecule(molecule_spec, grid)
    check = validate_molecule(psi0, molecule_spec)
    outcome.add("molecule_valid", check.passed, check.concentration, check.concentration_bound,
                "violations: " + (", ".join(check.violations) or "none"))
    outcome.snapshots["molecule"] = psi0

    theta0 = random_smooth_field(grid, ctx.rng(1))
    coarse = transfer_experiment(theta0, psi0, spec, config.t_end, config.dt)
    fine = transfer_experiment(theta0, psi0, spec, config.t_end, config.dt / 2)
    outcome.records += [_row(coarse, 0, f"dt{config.dt:g}"), _row(fine, 1, f"dt{config.dt / 2:g}")]

    outcome.add("transfer_residual", coarse.residual <= RESIDUAL_LIMIT, coarse.residual, RESIDUAL_LIMIT,
                f"|<theta(t), psi0> - <theta0, psi(t)>| / (||theta0||_inf ||psi0||_1) at dt = {config.dt:g}")
    reduction = coarse.residual / fine.residual if fine.residual > 0 else float("inf")
    outcome.add("transfer_convergence", reduction >= MIN_REDUCTION, reduction, MIN_REDUCTION,
                "residual reduction when dt halves")
    outcome.add("duality_bound", coarse.duality_holds and fine.duality_holds, coarse.forward_pairing,
                coarse.duality_bound, "|<theta(t), psi0>| <= ||theta0||_inf ||psi(t)||_1 + residual")

    still = spec.model_copy(update={"velocity_source": VelocitySource.PRESCRIBED, "prescribed_velocity": "zero"})
    at_rest = transfer_experiment(theta0, psi0, still, config.t_end, config.dt)
    outcome.records.append(_row(at_rest, 2, "v0"))
    outcome.add("transfer_zero_velocity", at_rest.residual < ZERO_VELOCITY_LIMIT, at_rest.residual,
                ZERO_VELOCITY_LIMIT, "both pairings equal <theta0, e^(-t L) psi0> when v = 0")

    logger.info(f"transfer: residual {coarse.residual:.3e} -> {fine.residual:.3e} (x{reduction:.2f}), "
                f"v=0 {at_rest.residual:.3e}")
    outcome.summary = {"residual_dt": coarse.residual, "residual_dt_half": fine.residual, "reduction": reduction}
    return outcome
