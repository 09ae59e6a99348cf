# src/nodes/picard.py
import logging

from src.analysis import lp_norm
from src.errors import PicardDivergenceError
from src.evolution import (
    EquationSpec,
    SteadyVelocity,
    VelocitySource,
    picard_solve,
    picard_time_bound,
    run_forward,
    shear_velocity,
)
from src.initial_conditions import random_smooth_field
from src.schemas import DiagnosticsRecord, PresetOutcome, RunConfig
from src.spectral_core import Grid

logger = logging.getLogger(__name__)

N_QUAD = 32
MAX_ITER = 40
RATIO_LIMIT = 0.5
# factor on the quadrature error estimate; the floor covers the iteration tolerance
AGREEMENT_FACTOR = 10.0
AGREEMENT_FLOOR = 1e-9
SCAN_FACTORS = (1, 2, 4, 8, 16)


def default_config() -> RunConfig:
    return RunConfig(
        preset="picard",
        grid=Grid(dim=2, points_per_axis=64),
        equation=EquationSpec(
            alpha=0.25,
            epsilon_visc=0.1,
            velocity_source=VelocitySource.PRESCRIBED,
            prescribed_velocity="shear",
            velocity_amplitude=1.0,
            mollify_eps=0.05,
        ),
    )


def _record(report, label: str, start_step: int):
    rows = []
    for i, distance in enumerate(report.distances):
        ratio = report.ratios[i - 1] if i > 0 else None
        rows.append(
            DiagnosticsRecord(time=report.t_prime, step=start_step + i, run=label,
                              iteration=i + 1, distance=distance, ratio=ratio)
        )
    return rows


def run(ctx) -> PresetOutcome:
    config = ctx.config
    spec = config.equation.model_copy(update={"velocity_source": VelocitySource.PRESCRIBED})
    grid = config.grid
    velocity = SteadyVelocity(shear_velocity(grid, spec.velocity_amplitude))
    theta0 = random_smooth_field(grid, ctx.rng(1))
    outcome = PresetOutcome()

    t_prime = picard_time_bound(spec, velocity.sup_norm())
    logger.info(f"picard: admissible t' = {t_prime:.6g} with C = {spec.contraction_constant}")
    theta, report = picard_solve(theta0, velocity, spec, t_prime, N_QUAD, MAX_ITER)
    outcome.records += _record(report, "bound", 0)

    worst_ratio = max(report.ratios, default=0.0)
    outcome.add("contraction_ratios", worst_ratio <= RATIO_LIMIT, worst_ratio, RATIO_LIMIT,
                "largest successive-iterate ratio after the first iteration")
    outcome.add("picard_converged", report.converged, report.iterations, MAX_ITER,
                "iterations to reach distance < 1e-10")

    # trapezoid error is O(h^2): e(n) ~ (4/3) |theta_n - theta_2n|
    fine, _ = picard_solve(theta0, velocity, spec, t_prime, 2 * N_QUAD, MAX_ITER)
    quadrature_error = 4.0 / 3.0 * lp_norm(theta - fine, 2)
    reference = run_forward(theta0, spec, t_prime, t_prime / (8 * N_QUAD), velocity=velocity).state.theta
    mismatch = lp_norm(theta - reference, 2)
    allowed = AGREEMENT_FACTOR * quadrature_error + AGREEMENT_FLOOR * lp_norm(reference, 2)
    outcome.add("matches_etd_reference", mismatch <= allowed, mismatch, allowed,
                f"L2 distance to the ETD run at dt = t'/{8 * N_QUAD}; quadrature estimate {quadrature_error:.3e}")

    # empirical range of contraction beyond the analytic bound
    scan = {}
    step = len(outcome.records)
    for factor in SCAN_FACTORS:
        trial = factor * t_prime
        try:
            _, trial_report = picard_solve(theta0, velocity, spec, trial, N_QUAD, MAX_ITER, enforce_bound=False)
            scan[f"{factor}x"] = {
                "t_prime": trial,
                "max_ratio": max(trial_report.ratios, default=0.0),
                "converged": trial_report.converged,
                "bound_value": trial_report.bound_value,
            }
            outcome.records += _record(trial_report, f"scan_{factor}x", step)
            step += len(trial_report.distances)
        except PicardDivergenceError as e:
            scan[f"{factor}x"] = {"t_prime": trial, "max_ratio": max(e.ratios), "converged": False}
            logger.warning(f"picard scan: diverged at t' = {trial:.4g}")
    contracting = [v["t_prime"] for v in scan.values() if v["max_ratio"] <= RATIO_LIMIT and v["converged"]]
    outcome.summary = {
        "t_prime_bound": t_prime,
        "bound_value": report.bound_value,
        "quadrature_error": quadrature_error,
        "etd_mismatch": mismatch,
        "scan": scan,
        "largest_contracting_t_prime": max(contracting, default=None),
    }
    return outcome
