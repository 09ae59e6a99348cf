# src/nodes/linfty_truncation.py
"""
Truncation study: theta_0^R = theta_0 * 1_B(c, R) for R = L/8 and 2R under a
prescribed shear. Reports how far the two solutions differ on the central
half-box and the localized L^p size of the truncated solution.
"""
import logging
import math

import numpy as np

from src.analysis import lp_norm
from src.evolution import EquationSpec, VelocitySource, prescribed_velocity, run_forward
from src.initial_conditions import random_smooth_field, smooth_indicator, truncated_data
from src.monitors import MaximumPrincipleMonitor
from src.nodes.common import tag_records
from src.schemas import OutputSpec, PresetOutcome, RunConfig
from src.spectral_core import Field, Grid

logger = logging.getLogger(__name__)

RADIUS_FRACTION = 1.0 / 8.0
# tanh edge width relative to R; keeps the cutoff resolved at N = 128
EDGE_FRACTION = 0.2
LOCAL_P = (2.0, 4.0)
GROWTH_TOL = 1e-8


def default_config() -> RunConfig:
    return RunConfig(
        preset="linfty_truncation",
        grid=Grid(dim=2, points_per_axis=128),
        equation=EquationSpec(
            alpha=0.25,
            velocity_source=VelocitySource.PRESCRIBED,
            prescribed_velocity="shear",
            velocity_amplitude=1.0,
        ),
        dt=1e-3,
        t_end=0.5,
        output=OutputSpec(csv_every=10),
    )


def run(ctx) -> PresetOutcome:
    config = ctx.config
    grid = config.grid
    spec = config.equation.model_copy(update={"velocity_source": VelocitySource.PRESCRIBED})
    velocity = prescribed_velocity(grid, spec)
    base = random_smooth_field(grid, ctx.rng(1))
    radius = RADIUS_FRACTION * grid.box_length
    outcome = PresetOutcome()

    finals = {}
    for label, R in (("R", radius), ("2R", 2.0 * radius)):
        theta0 = truncated_data(base, R, transition=EDGE_FRACTION * R)
        monitor = MaximumPrincipleMonitor((2.0, math.inf), GROWTH_TOL, every=config.output.csv_every)
        result = run_forward(theta0, spec, config.t_end, config.dt, observers=[monitor], velocity=velocity)
        outcome.records += tag_records(result.records, run=label)
        finals[label] = result.state.theta
        initial_linf = lp_norm(theta0, math.inf)
        final_linf = lp_norm(result.state.theta, math.inf)
        outcome.add(f"max_principle_L2_{label}", monitor.passed(2.0), monitor.relative_growth(2.0), GROWTH_TOL,
                    "largest per-step growth of ||theta||_2 relative to the initial norm")
        outcome.add(f"linf_bound_{label}", final_linf <= initial_linf * (1.0 + 1e-8), final_linf, initial_linf,
                    "||theta^R(t)||_inf <= ||theta_0^R||_inf")
        outcome.snapshots[f"theta_{label}_final"] = result.state.theta

    # central half-box, |x_i - c_i| <= L/4 on every axis
    center = 0.5 * grid.box_length
    half_box = np.all([np.abs(x - center) <= 0.25 * grid.box_length for x in grid.coordinates()], axis=0)
    difference = np.abs(finals["R"].values - finals["2R"].values)
    gap = float(difference[np.broadcast_to(half_box, grid.shape)].max())

    cutoff = Field(grid, smooth_indicator(grid, 2.0 * radius, transition=EDGE_FRACTION * radius))
    localized = {f"p{p:g}": lp_norm(cutoff * finals["R"], p) for p in LOCAL_P}

    outcome.summary = {
        "radius": radius,
        "linf_difference_half_box": gap,
        "localized_lp_R": localized,
    }
    logger.info(f"truncation: |theta^R - theta^2R| on the half-box = {gap:.4e}, localized {localized}")
    return outcome
