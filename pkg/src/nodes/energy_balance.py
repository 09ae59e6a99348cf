# src/nodes/energy_balance.py
import logging

from src.evolution import EquationSpec, VelocitySource, run_forward
from src.initial_conditions import random_smooth_field
from src.monitors import EnergyBalanceMonitor
from src.nodes.common import tag_records
from src.schemas import PresetOutcome, RunConfig
from src.spectral_core import Grid

logger = logging.getLogger(__name__)

# second order: halving dt divides the residual by about 4
EXPECTED_RATIO = 4.0
RATIO_TOLERANCE = 0.3


def default_config() -> RunConfig:
    return RunConfig(
        preset="energy_balance",
        grid=Grid(dim=2, points_per_axis=64),
        equation=EquationSpec(alpha=0.25, epsilon_visc=0.01, velocity_source=VelocitySource.SQG_COUPLED),
        dt=2e-3,
        t_end=0.2,
    )


def run(ctx) -> PresetOutcome:
    config = ctx.config
    spec = config.equation
    theta0 = random_smooth_field(config.grid, ctx.rng(1))
    outcome = PresetOutcome()

    residuals = []
    for dt in (config.dt, config.dt / 2, config.dt / 4):
        monitor = EnergyBalanceMonitor(spec.alpha, spec.epsilon_visc, config.output.csv_every)
        result = run_forward(theta0, spec, config.t_end, dt, observers=[monitor])
        outcome.records += tag_records(result.records, run=f"dt{dt:g}")
        residuals.append(monitor.max_residual)
        outcome.summary[f"K_dt{dt:g}"] = monitor.max_residual / dt ** 2
        logger.info(f"dt={dt:g}: max residual {monitor.max_residual:.3e}, K={monitor.max_residual / dt ** 2:.4g}")

    lo, hi = EXPECTED_RATIO * (1 - RATIO_TOLERANCE), EXPECTED_RATIO * (1 + RATIO_TOLERANCE)
    for i in range(len(residuals) - 1):
        ratio = residuals[i] / residuals[i + 1] if residuals[i + 1] > 0 else float("inf")
        outcome.add(
            f"energy_ratio_halving_{i + 1}",
            lo <= ratio <= hi,
            ratio,
            EXPECTED_RATIO,
            f"max residual ratio between consecutive dt halvings, accepted in [{lo:.2f}, {hi:.2f}]",
        )
    return outcome
