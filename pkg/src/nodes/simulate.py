# src/nodes/simulate.py
import logging
import math

from src.analysis import norm_report
from src.evolution import VelocitySource, prescribed_velocity, run_forward
from src.initial_conditions import build_initial_condition
from src.molecule_lab import make_molecule, transfer_experiment, validate_molecule
from src.monitors import EnergyBalanceMonitor, MaximumPrincipleMonitor, SnapshotRecorder
from src.nodes.common import tag_records
from src.schemas import PresetOutcome, RunConfig

logger = logging.getLogger(__name__)

GROWTH_TOL = 1e-8


def default_config() -> RunConfig:
    return RunConfig(preset="simulate")


def run(ctx) -> PresetOutcome:
    """Forward run of whatever the config describes, with the standard monitors."""
    config = ctx.config
    spec = config.equation
    grid = config.grid
    every = config.output.csv_every
    velocity = prescribed_velocity(grid, spec) if spec.velocity_source is VelocitySource.PRESCRIBED else None
    theta0 = build_initial_condition(config.initial_condition, grid, ctx.rng(1))
    outcome = PresetOutcome()

    def norms(state):
        if state.step_count % every == 0:
            return norm_report(state.theta, alpha=spec.alpha).as_row()
        return None

    max_principle = MaximumPrincipleMonitor((1.0, 2.0, math.inf), GROWTH_TOL, every)
    energy = EnergyBalanceMonitor(spec.alpha, spec.epsilon_visc, every)
    snapshots = SnapshotRecorder(config.output.snapshot_every)
    result = run_forward(
        theta0, spec, config.t_end, config.dt,
        observers=[norms, energy, max_principle, snapshots], velocity=velocity,
    )
    outcome.records = tag_records(result.records)
    outcome.snapshots = dict(snapshots.snapshots)
    outcome.snapshots["theta_final"] = result.state.theta

    for p in max_principle.ps:
        label = "inf" if math.isinf(p) else f"{p:g}"
        outcome.add(f"max_principle_L{label}", max_principle.passed(p), max_principle.relative_growth(p),
                    GROWTH_TOL, "largest per-step growth relative to the initial norm")
    outcome.summary = {"max_energy_balance_residual": energy.max_residual, "steps": result.state.step_count}

    if config.molecule is not None:
        molecule_spec = config.molecule.validate_against(spec.alpha, grid.dim)
        psi0 = make_molecule(molecule_spec, grid)
        check = validate_molecule(psi0, molecule_spec)
        outcome.add("molecule_valid", check.passed, check.concentration, check.concentration_bound,
                    "violations: " + (", ".join(check.violations) or "none"))
        report = transfer_experiment(theta0, psi0, spec, config.t_end, config.dt, velocity=velocity)
        outcome.add("duality_bound", report.duality_holds, report.forward_pairing, report.duality_bound,
                    "|<theta(t), psi0>| <= ||theta0||_inf ||psi(t)||_1 + residual")
        outcome.summary["transfer_residual"] = report.residual
    logger.info(f"simulate: {result.state.step_count} steps, energy residual {energy.max_residual:.3e}")
    return outcome
