# src/nodes/sqg_maxprinciple.py
import logging
import math

from src.evolution import EquationSpec, VelocitySource, run_forward
from src.initial_conditions import random_smooth_field, shifted_bump
from src.monitors import MaximumPrincipleMonitor, PositivityMonitor
from src.nodes.common import tag_records
from src.schemas import OutputSpec, PresetOutcome, RunConfig
from src.spectral_core import Grid

logger = logging.getLogger(__name__)

P_VALUES = (1.0, 2.0, 4.0, math.inf)
GROWTH_TOL = 1e-8
POSITIVITY_TOL = 1e-10


def default_config() -> RunConfig:
    return RunConfig(
        preset="sqg_maxprinciple",
        grid=Grid(dim=2, points_per_axis=128),
        equation=EquationSpec(alpha=0.25, velocity_source=VelocitySource.SQG_COUPLED),
        dt=1e-3,
        t_end=1.0,
        output=OutputSpec(csv_every=10),
    )


def run(ctx) -> PresetOutcome:
    config = ctx.config
    every = config.output.csv_every
    outcome = PresetOutcome()

    for alpha in ctx.sweep("equation.alpha", (0.25, 0.5), config.equation.alpha):
        spec = config.equation.model_copy(update={"alpha": alpha, "velocity_source": VelocitySource.SQG_COUPLED})
        tag = f"a{alpha:g}"

        theta0 = random_smooth_field(config.grid, ctx.rng(1))
        lp_monitor = MaximumPrincipleMonitor(P_VALUES, GROWTH_TOL, every, alpha=alpha, epsilon=spec.epsilon_visc)
        result = run_forward(theta0, spec, config.t_end, config.dt, observers=[lp_monitor])
        outcome.records += tag_records(result.records, run=f"maxprinciple_{tag}")
        outcome.snapshots[f"maxprinciple_{tag}_final"] = result.state.theta
        for p in P_VALUES:
            label = "inf" if math.isinf(p) else f"{p:g}"
            outcome.add(
                f"max_principle_L{label}_{tag}",
                lp_monitor.passed(p),
                lp_monitor.relative_growth(p),
                GROWTH_TOL,
                "largest per-step growth of ||theta||_p relative to ||theta_0||_p",
            )
        outcome.summary[f"lp_balance_{tag}"] = {
            f"p{p:g}": lp_monitor.balance_residual(p) for p in lp_monitor.balance_ps
        }

        bump = shifted_bump(config.grid)
        positivity = PositivityMonitor(0.0, 1.0, POSITIVITY_TOL, every)
        result = run_forward(bump, spec, config.t_end, config.dt, observers=[positivity])
        outcome.records += tag_records(result.records, run=f"positivity_{tag}")
        outcome.add(
            f"positivity_{tag}",
            positivity.passed,
            min(positivity.worst_min, 1.0 - positivity.worst_max),
            -POSITIVITY_TOL,
            "worst of min(theta) and 1 - max(theta) over all steps",
        )
        logger.info(f"alpha={alpha}: range [{positivity.worst_min:.3e}, {positivity.worst_max:.6f}]")

    return outcome
