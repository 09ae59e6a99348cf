# src/nodes/holder_boundedness.py
"""
Hölder regularity from bounded, discontinuous data.

The C^gamma seminorm of theta(t) is compared between N and 2N started from the
same trigonometric polynomial. Molecule pairings run at 2N on one box of 40 r per
radius; the data keep their box-relative pattern with amplitude scaled by the
box length, and pairings are divided by ||theta_0||_inf.
"""
import logging
import math

from src.analysis import holder_seminorm, inner_product, lp_norm
from src.evolution import EquationSpec, VelocitySource, run_backward, run_forward
from src.initial_conditions import rough_patches, spectral_resample
from src.molecule_lab import WRAPAROUND_FACTOR, MoleculeSpec, make_molecule
from src.monitors import WraparoundMonitor
from src.schemas import DiagnosticsRecord, PresetOutcome, RunConfig
from src.spectral_core import Grid, dealias

logger = logging.getLogger(__name__)

HOLDER_GAMMA = 0.2
STABILITY = 0.10
RADII = (0.02, 0.05, 0.1, 0.2, 0.5)


def default_config() -> RunConfig:
    return RunConfig(
        preset="holder_boundedness",
        grid=Grid(dim=2, points_per_axis=128, box_length=WRAPAROUND_FACTOR * max(RADII)),
        equation=EquationSpec(alpha=0.25, velocity_source=VelocitySource.SQG_COUPLED),
        molecule=MoleculeSpec(),
        dt=1e-3,
        t_end=0.5,
    )


def run(ctx) -> PresetOutcome:
    outcome = PresetOutcome()
    seminorms = _refinement(ctx, outcome)
    pairings = _pairings(ctx, outcome)
    outcome.summary = {"holder_seminorm": seminorms, **pairings}
    return outcome


def _refinement(ctx, outcome: PresetOutcome) -> dict:
    config = ctx.config
    spec = config.equation
    coarse_grid = config.grid
    fine_grid = ctx.grid(points_per_axis=2 * coarse_grid.points_per_axis)

    # both runs start from the dealiased coarse polynomial
    theta0 = dealias(rough_patches(coarse_grid, ctx.rng(1)))
    coarse = run_forward(theta0, spec, config.t_end, config.dt)
    fine = run_forward(spectral_resample(theta0, fine_grid), spec, config.t_end, config.dt)

    seminorms = {}
    for label, result in (("coarse", coarse), ("fine", fine)):
        value = holder_seminorm(result.state.theta, HOLDER_GAMMA)
        seminorms[label] = value
        outcome.records.append(
            DiagnosticsRecord(time=result.state.time, step=result.state.step_count, run=label,
                              points_per_axis=result.state.theta.grid.points_per_axis, holder_seminorm=value)
        )
    change = abs(seminorms["fine"] - seminorms["coarse"]) / seminorms["coarse"]
    outcome.add("holder_resolution_stable", change <= STABILITY, change, STABILITY,
                f"relative change of the C^{HOLDER_GAMMA:g} seminorm at t = {config.t_end:g}, "
                f"N {coarse_grid.points_per_axis} -> {fine_grid.points_per_axis}")
    outcome.snapshots["theta_coarse_final"] = coarse.state.theta
    logger.info(f"holder: seminorm {seminorms['coarse']:.4g} -> {seminorms['fine']:.4g}")
    return seminorms


def _pairings(ctx, outcome: PresetOutcome) -> dict:
    config = ctx.config
    spec = config.equation
    reference_length = config.grid.box_length
    base = (config.molecule or MoleculeSpec()).validate_against(spec.alpha, config.grid.dim)
    wraparound = WraparoundMonitor()

    pairings, l1_norms = {}, {}
    for index, r in enumerate(RADII):
        grid = ctx.grid(box_length=WRAPAROUND_FACTOR * r, points_per_axis=2 * config.grid.points_per_axis)
        theta0 = dealias(rough_patches(grid, ctx.rng(1), amplitude=grid.box_length / reference_length))
        theta0_linf = lp_norm(theta0, math.inf)
        forward = run_forward(theta0, spec, config.t_end, config.dt, record_history=True)

        psi0 = make_molecule(base.model_copy(update={"r": r, "x0": None}), grid)
        psi_t = run_backward(psi0, forward.history, spec, config.t_end, forward.state.dt,
                             observers=[wraparound]).theta
        pairings[r] = abs(inner_product(forward.state.theta, psi0)) / theta0_linf
        l1_norms[r] = lp_norm(psi_t, 1)
        outcome.records.append(
            DiagnosticsRecord(time=config.t_end, step=index, run=f"pairing_r{r:g}", box_length=grid.box_length,
                              pairing=pairings[r], psi_t_l1=l1_norms[r])
        )
        outcome.add(f"molecule_pairing_r{r:g}", pairings[r] <= l1_norms[r] * (1.0 + 1e-8), pairings[r], l1_norms[r],
                    "|<theta(t), psi_r>| / ||theta0||_inf <= ||psi_r(t)||_1")

    sup_pairing = max(pairings.values())
    bound = max(l1_norms.values())
    outcome.add("molecule_pairings_bounded", sup_pairing <= bound * (1.0 + 1e-8), sup_pairing, bound,
                "sup_r |<theta(t), psi_r>| / ||theta0||_inf <= max_r ||psi_r(t)||_1")
    logger.info(f"holder: sup pairing {sup_pairing:.4g} <= {bound:.4g} over r in {RADII}")
    return {
        "pairings": {f"{r:g}": v for r, v in pairings.items()},
        "psi_t_l1": {f"{r:g}": v for r, v in l1_norms.items()},
        "wraparound_mass": wraparound.worst,
    }
