# src/molecule_lab.py
"""
r-molecules and the backward-evolution ledger.

A molecule centred at x0 with size r, Hardy index sigma (gamma = n(1/sigma - 1))
and concentration exponent omega satisfies

    concentration   int |psi| |x - x0|^omega dx <= r^(omega - gamma)
    height          ||psi||_inf <= r^-(n + gamma)
    moment          int psi dx = 0            (small molecules, r < 1)

The ledger follows such a molecule along the backward-dual equation and checks
the concentration, height and L^1 bounds at each scheduled time s_k.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, field_validator
from scipy.special import gamma as gamma_function

from src.analysis import bmo_norm, inner_product, lp_norm
from src.errors import (
    ConstructionError,
    MaximumPrincipleRegime,
    MoleculeConditionError,
    ParameterError,
    ResolutionError,
)
from src.evolution import (
    EquationSpec,
    SolverState,
    TimeDirection,
    VelocitySource,
    run_backward,
    run_forward,
)
from src.spectral_core import Field, Grid

logger = logging.getLogger(__name__)

# parameter windows narrower than this count as empty
MIN_OMEGA_WINDOW = 1e-6
MAX_RESCALES = 20
WRAPAROUND_FACTOR = 40.0
# a saturated molecule keeps its concentration integral within this share of the bound
SATURATION = 0.98
# smallest positive K the ledger bisection resolves
KMIN_FLOOR = 1e-8
# a box of 40 r resolves r / 4 at this many cells from N = 256 on
MIN_WIDTH_CELLS = 1.5


# ---------------------------------------------------------
# Parameters
# ---------------------------------------------------------
def gamma_of_sigma(n: int, sigma: float) -> float:
    if not 0.0 < sigma < 1.0:
        raise ParameterError(f"sigma must lie in (0, 1), got {sigma}")
    return n * (1.0 / sigma - 1.0)


def molecule_window(n: int, alpha: float, sigma: float) -> Tuple[float, float]:
    """Open interval (gamma, 2 alpha) of admissible omega."""
    return gamma_of_sigma(n, sigma), 2.0 * alpha


def unit_ball_volume(n: int) -> float:
    return float(math.pi ** (n / 2.0) / gamma_function(n / 2.0 + 1.0))


class MoleculeSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    r: float = 0.05
    x0: Optional[Tuple[float, ...]] = None  # None: centre of the box
    sigma: float = 0.9
    gamma: Optional[float] = None  # filled from sigma and the dimension
    omega: float = 0.4
    profile: str = "dipole_bump"
    safety: float = 0.5

    @field_validator("r")
    @classmethod
    def _check_r(cls, value: float) -> float:
        if value <= 0:
            raise ParameterError(f"molecule size r must be positive, got {value}")
        return value

    @field_validator("safety")
    @classmethod
    def _check_safety(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ParameterError(f"safety must lie in (0, 1], got {value}")
        return value

    @field_validator("profile")
    @classmethod
    def _check_profile(cls, value: str) -> str:
        if value != "dipole_bump":
            raise ParameterError(f"unknown molecule profile {value!r}; only 'dipole_bump' is available")
        return value

    def gamma_for(self, n: int) -> float:
        return self.gamma if self.gamma is not None else gamma_of_sigma(n, self.sigma)

    def validate_against(self, alpha: float, n: int) -> "MoleculeSpec":
        """Check the parameter windows and return a copy with gamma filled in."""
        lower = n / (n + 2.0 * alpha)
        if not lower < self.sigma < 1.0:
            raise MoleculeConditionError(
                f"sigma = {self.sigma} violates n/(n+2*alpha) < sigma < 1 (here {lower:.6g} < sigma < 1)"
            )
        gamma = gamma_of_sigma(n, self.sigma)
        if self.gamma is not None and not math.isclose(self.gamma, gamma, rel_tol=1e-12, abs_tol=1e-15):
            raise MoleculeConditionError(f"gamma = {self.gamma} differs from n(1/sigma - 1) = {gamma}")
        if 2.0 * alpha - gamma < MIN_OMEGA_WINDOW or not gamma < self.omega < 2.0 * alpha:
            raise MoleculeConditionError(
                f"omega = {self.omega} violates gamma < omega < 2*alpha "
                f"(here {gamma:.6g} < omega < {2.0 * alpha:.6g})"
            )
        if self.x0 is not None and len(self.x0) != n:
            raise MoleculeConditionError(f"x0 has {len(self.x0)} components, expected {n}")
        return self.model_copy(update={"gamma": gamma})


class LedgerParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    K: float = PydanticField(default=5.0, gt=0)
    c0: float = PydanticField(default=0.1, gt=0, lt=1)
    eta: float = PydanticField(default=0.1, gt=0, lt=1)
    delta_stop: float = PydanticField(default=0.05, gt=0)


class MoleculeLedger(BaseModel):
    """Constants and recorded history of one ledger run."""

    r: float
    n: int
    alpha: float
    gamma: float
    omega: float
    K: float
    c0: float
    eta: float
    delta_stop: float
    times: List[float] = []
    centers: List[Tuple[float, ...]] = []
    G_values: List[float] = []
    f_values: List[float] = []

    @classmethod
    def start(cls, spec: MoleculeSpec, params: LedgerParams, alpha: float, n: int) -> "MoleculeLedger":
        return cls(
            r=spec.r,
            n=n,
            alpha=alpha,
            gamma=spec.gamma_for(n),
            omega=spec.omega,
            K=params.K,
            c0=params.c0,
            eta=params.eta,
            delta_stop=params.delta_stop,
        )

    def f_value(self, elapsed: float) -> float:
        """f = (r^{2 alpha (n + gamma)/(n + omega)} + c0 * elapsed)^{1/(2 alpha)}."""
        return self.base(elapsed) ** (1.0 / (2.0 * self.alpha))

    def base(self, elapsed: float) -> float:
        exponent = 2.0 * self.alpha * (self.n + self.gamma) / (self.n + self.omega)
        return self.r ** exponent + self.c0 * elapsed

    def height_bound(self, elapsed: float) -> float:
        return self.base(elapsed) ** (-(self.n + self.omega) / (2.0 * self.alpha))

    def l1_bound(self, elapsed: float) -> float:
        return unit_ball_volume(self.n) * self.base(elapsed) ** (-self.omega / (2.0 * self.alpha))


def g_sequence(ledger: MoleculeLedger, times: Sequence[float]) -> List[float]:
    """G_0, G_1, ... for the given s_0, s_1, ...; stops after the first value >= 1."""
    values: List[float] = []
    elapsed = 0.0
    g = 0.0
    exponent = 1.0 + ledger.gamma - ledger.omega
    for k, s in enumerate(times):
        if k == 0:
            g = ledger.r + ledger.K * s
        else:
            g = g + g ** exponent * ledger.K * s / ledger.f_value(elapsed)
        elapsed += s
        values.append(g)
        if g >= 1.0:
            break
    return values


def target_g(ledger: MoleculeLedger, N: int, s: float) -> float:
    """G_N with s_N = s and s_0 .. s_{N-1} taken from ledger.times."""
    if N < 0:
        raise ParameterError(f"N must be >= 0, got {N}")
    if len(ledger.times) < N:
        raise ParameterError(f"G_{N} needs {N} recorded times, the ledger holds {len(ledger.times)}")
    values = g_sequence(ledger, list(ledger.times[:N]) + [s])
    if values[-1] >= 1.0:
        raise MaximumPrincipleRegime(
            f"G_{len(values) - 1} = {values[-1]:.4g} >= 1: maximum principle regime", value=values[-1]
        )
    return values[-1]


class Schedule(BaseModel):
    times: List[float]
    stop_index: int
    total: float
    halted_by: Optional[str] = None


def iteration_schedule(
    spec: MoleculeSpec,
    params: LedgerParams,
    alpha: Optional[float] = None,
    n: int = 2,
) -> Schedule:
    """
    s_0 = eta r, s_k = eta r^2 until the accumulated time reaches delta_stop.
    With alpha given, the schedule halts early once f >= 1 or G_N >= 1.
    """
    s0 = params.eta * spec.r
    sk = params.eta * spec.r ** 2
    stop = max(0, math.ceil((params.delta_stop - s0) / sk - 1e-9))
    times = [s0] + [sk] * stop
    halted_by = None

    if alpha is not None:
        ledger = MoleculeLedger.start(spec, params, alpha, n)
        g_values = g_sequence(ledger, times)
        if g_values[-1] >= 1.0:
            times = times[: len(g_values) - 1]
            halted_by = "G_N >= 1"
        elapsed = 0.0
        for k, s in enumerate(times):
            if ledger.f_value(elapsed + s) >= 1.0:
                times = times[:k]
                halted_by = "f >= 1"
                break
            elapsed += s
        if halted_by:
            logger.warning(f"schedule for r={spec.r} halted after {len(times)} steps ({halted_by})")

    return Schedule(times=times, stop_index=max(0, len(times) - 1), total=float(sum(times)), halted_by=halted_by)


# ---------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------
def _bump(z2: np.ndarray) -> np.ndarray:
    """eta(y) = exp(1 - 1/(1 - |y|^2)) inside the unit ball, 0 outside; eta(0) = 1."""
    out = np.zeros_like(z2)
    inside = z2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z2[inside]))
    return out


def molecule_center(spec: MoleculeSpec, grid: Grid) -> Tuple[float, ...]:
    """x0 snapped to the nearest grid node (box centre when unset)."""
    x0 = spec.x0 if spec.x0 is not None else (grid.box_length / 2.0,) * grid.dim
    index = [int(round(c / grid.spacing)) % grid.points_per_axis for c in x0]
    return tuple(i * grid.spacing for i in index)


def _offsets(grid: Grid, center: Sequence[float]) -> Tuple[np.ndarray, ...]:
    """Periodic displacement x - center on every node, in (-L/2, L/2]."""
    length = grid.box_length
    return tuple(
        (x - c + 0.5 * length) % length - 0.5 * length for x, c in zip(grid.coordinates(), center)
    )


def periodic_distance(grid: Grid, center: Sequence[float]) -> np.ndarray:
    return np.sqrt(sum(d ** 2 for d in _offsets(grid, center)))


def concentration_integral(f: Field, center: Sequence[float], omega: float) -> float:
    if not 0.0 < omega < 1.0:
        raise ParameterError(f"omega must lie in (0, 1), got {omega}")
    distance = periodic_distance(f.grid, center)
    return float(np.sum(np.abs(f.physical().values) * distance ** omega) * f.grid.cell_volume)


def make_molecule(spec: MoleculeSpec, grid: Grid, saturate: bool = False) -> Field:
    """
    Antisymmetric dipole of smooth bumps, scaled to satisfy the molecule conditions.
    With saturate=True the bumps are widened until the concentration integral sits
    within SATURATION of safety * r^(omega - gamma).
    """
    n = grid.dim
    r = spec.r
    gamma = spec.gamma_for(n)
    if grid.box_length < WRAPAROUND_FACTOR * r:
        raise ConstructionError(
            f"box length {grid.box_length:g} is below {WRAPAROUND_FACTOR:g} r = {WRAPAROUND_FACTOR * r:g}"
        )

    width = r / 4.0
    if width < MIN_WIDTH_CELLS * grid.spacing:
        logger.warning(
            f"molecule bump width r/4 = {width:.4g} floored to {MIN_WIDTH_CELLS:g} grid spacings "
            f"({MIN_WIDTH_CELLS * grid.spacing:.4g})"
        )
        width = MIN_WIDTH_CELLS * grid.spacing

    center = molecule_center(spec, grid)
    offsets = _offsets(grid, center)
    amplitude = spec.safety / r ** (n + gamma)
    target = spec.safety * r ** (spec.omega - gamma)
    for _ in range(MAX_RESCALES + 1):
        psi = Field(grid, amplitude * _dipole(offsets, width, grid.spacing))
        concentration = concentration_integral(psi, center, spec.omega)
        if concentration > target:
            amplitude *= (0.5 * (1.0 + SATURATION) if saturate else 0.9) * target / concentration
        elif saturate and concentration < SATURATION * target:
            # the integral grows like width^(n + omega) at fixed amplitude
            width *= (0.5 * (1.0 + SATURATION) * target / concentration) ** (1.0 / (n + spec.omega))
        else:
            return psi
    raise ConstructionError(
        f"concentration condition not met after {MAX_RESCALES} rescalings "
        f"({concentration:.4g} against {target:.4g})"
    )


def _dipole(offsets: Sequence[np.ndarray], width: float, spacing: float) -> np.ndarray:
    # lobe separation on whole cells keeps the two lobes exact mirror images
    shift = max(1, int(round(width / spacing))) * spacing
    rest = sum(d ** 2 for d in offsets[1:]) if len(offsets) > 1 else 0.0
    lobe_plus = _bump(((offsets[0] - shift) ** 2 + rest) / width ** 2)
    lobe_minus = _bump(((offsets[0] + shift) ** 2 + rest) / width ** 2)
    return lobe_plus - lobe_minus


class MoleculeReport(BaseModel):
    concentration: float
    concentration_bound: float
    height: float
    height_bound: float
    moment: float
    moment_tolerance: float
    moment_checked: bool
    violations: List[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def validate_molecule(f: Field, spec: MoleculeSpec) -> MoleculeReport:
    grid = f.grid
    n = grid.dim
    gamma = spec.gamma_for(n)
    center = molecule_center(spec, grid)
    values = f.physical().values

    concentration = concentration_integral(f, center, spec.omega)
    concentration_bound = spec.r ** (spec.omega - gamma)
    height = float(np.max(np.abs(values)))
    height_bound = spec.r ** (-(n + gamma))
    moment = float(abs(np.sum(values) * grid.cell_volume))
    moment_tolerance = 1e-12 * float(np.sum(np.abs(values)) * grid.cell_volume)
    moment_checked = spec.r < 1.0

    violations = []
    if concentration > concentration_bound:
        violations.append("concentration")
    if height > height_bound:
        violations.append("height")
    if moment_checked and moment > moment_tolerance:
        violations.append("moment")
    return MoleculeReport(
        concentration=concentration,
        concentration_bound=concentration_bound,
        height=height,
        height_bound=height_bound,
        moment=moment,
        moment_tolerance=moment_tolerance,
        moment_checked=moment_checked,
        violations=violations,
    )


def center_velocity(v: Sequence[Field], center: Sequence[float], radius: float) -> Tuple[float, ...]:
    """Mean of v over the periodic ball B(center, radius)."""
    grid = v[0].grid
    if radius <= 2.0 * grid.spacing:
        raise ResolutionError(f"ball radius {radius:.4g} must exceed two grid spacings ({2 * grid.spacing:.4g})")
    ball = periodic_distance(grid, center) < radius
    if np.count_nonzero(ball) < 4:
        raise ResolutionError(f"ball of radius {radius:.4g} covers fewer than 4 cells")
    return tuple(float(component.physical().values[ball].mean()) for component in v)


class BigMoleculeReport(BaseModel):
    l1_initial: float
    l1_final: float
    constant: float
    bound: float
    holds: bool


def big_molecule_bound(psi0: Field, psi_t: Field, spec: MoleculeSpec, rtol: float = 1e-8) -> BigMoleculeReport:
    """For r >= 1: ||psi(t)||_1 <= ||psi_0||_1 = C r^-gamma, C measured from psi_0."""
    if spec.r < 1.0:
        raise ParameterError(f"the big-molecule bound needs r >= 1, got {spec.r}")
    gamma = spec.gamma_for(psi0.grid.dim)
    l1_initial = lp_norm(psi0, 1)
    l1_final = lp_norm(psi_t, 1)
    constant = l1_initial * spec.r ** gamma
    bound = constant * spec.r ** (-gamma)
    return BigMoleculeReport(
        l1_initial=l1_initial,
        l1_final=l1_final,
        constant=constant,
        bound=bound,
        holds=l1_final <= bound * (1.0 + rtol),
    )


# ---------------------------------------------------------
# Transfer identity
# ---------------------------------------------------------
class TransferReport(BaseModel):
    t: float
    forward_pairing: float
    backward_pairing: float
    residual: float
    theta0_linf: float
    psi0_l1: float
    psi_t_l1: float
    duality_bound: float
    duality_holds: bool


def transfer_experiment(
    theta0: Field,
    molecule: Field,
    spec: EquationSpec,
    t: float,
    dt: float,
    velocity=None,
) -> TransferReport:
    """Pair a forward run theta(t) with psi_0 and theta_0 with the backward run psi(t)."""
    if theta0.grid != molecule.grid:
        raise ParameterError("theta0 and the molecule live on different grids")
    theta_linf = lp_norm(theta0, np.inf)
    psi_l1 = lp_norm(molecule, 1)

    if t == 0:
        theta_t, psi_t = theta0, molecule
    else:
        forward = run_forward(theta0, spec, t, dt, velocity=velocity, record_history=True)
        theta_t = forward.state.theta
        psi_t = run_backward(molecule, forward.history, spec, t, forward.state.dt).theta

    forward_pairing = inner_product(theta_t, molecule)
    backward_pairing = inner_product(theta0, psi_t)
    gap = abs(forward_pairing - backward_pairing)
    scale = theta_linf * psi_l1
    psi_t_l1 = lp_norm(psi_t, 1)
    bound = theta_linf * psi_t_l1 + gap
    return TransferReport(
        t=t,
        forward_pairing=forward_pairing,
        backward_pairing=backward_pairing,
        residual=gap / scale if scale > 0 else 0.0,
        theta0_linf=theta_linf,
        psi0_l1=psi_l1,
        psi_t_l1=psi_t_l1,
        duality_bound=bound,
        duality_holds=abs(forward_pairing) <= bound * (1.0 + 1e-12),
    )


def transfer_residual(theta0: Field, molecule: Field, spec: EquationSpec, t: float, dt: float, velocity=None) -> float:
    """|<theta(t), psi_0> - <theta_0, psi(t)>| / (||theta_0||_inf ||psi_0||_1)."""
    return transfer_experiment(theta0, molecule, spec, t, dt, velocity=velocity).residual


# ---------------------------------------------------------
# Ledger experiment
# ---------------------------------------------------------
LEDGER_COLUMNS = [
    "step", "s_k", "sum_s", "G_N", "f", "conc", "conc_bound",
    "linf", "linf_bound", "l1", "l1_bound", "Kmin", "c0max",
]


class MoleculeExperimentResult(BaseModel):
    r: float
    gamma: float
    omega: float
    alpha: float
    mu: float
    kmin: float
    c0max: float
    c0: float
    rows: List[dict]
    schedule_total: float
    final_l1: float
    final_l1_bound: float
    l1_initial: float
    l1_max_excess: float
    regime_step: Optional[int] = None
    ledger: Optional[MoleculeLedger] = None

    @property
    def checks_passed(self) -> bool:
        return math.isfinite(self.kmin) and self.c0 > 0 and self.final_l1 <= self.final_l1_bound


def velocity_bmo(velocity, times: Sequence[float]) -> float:
    """Largest bmo norm over the velocity components at the given times."""
    if velocity is None:
        return 0.0
    return max(bmo_norm(component) for t in times for component in velocity.at(t))


def _log_bisect(predicate, lo: float, hi: float, rtol: float, largest: bool) -> float:
    """Bisect in log space for the boundary of a monotone predicate on [lo, hi]."""
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if predicate(mid) == largest:
            lo = mid
        else:
            hi = mid
    return lo if largest else hi


def run_molecule_experiment(
    spec: MoleculeSpec,
    velocity_history,
    alpha: float,
    dt: float,
    grid: Grid,
    params: LedgerParams = LedgerParams(),
    epsilon_visc: float = 0.0,
) -> MoleculeExperimentResult:
    """
    Evolve the molecule backward once and certify the ledger: the largest c0
    passing the height and L^1 checks, then (with c0 = min(0.5, c0max / 2)) the
    smallest K >= 0 passing every concentration check (0 when K = 0 already passes).
    """
    n = grid.dim
    spec = spec.validate_against(alpha, n)
    gamma = spec.gamma
    # saturated at safety 1 so K measures the growth of the concentration integral
    psi0 = make_molecule(spec.model_copy(update={"safety": 1.0}), grid, saturate=True)
    schedule = iteration_schedule(spec, params)
    if not schedule.times:
        raise ParameterError("empty ledger schedule")

    # steps land exactly on the scheduled times
    s_min = min(schedule.times)
    per_short = max(1, math.ceil(s_min / dt - 1e-9))
    dt = s_min / per_short
    step_counts = [max(1, int(round(s / dt))) for s in schedule.times]
    checkpoint_steps = list(np.cumsum(step_counts))
    horizon = checkpoint_steps[-1] * dt

    eq = EquationSpec(
        alpha=alpha,
        epsilon_visc=epsilon_visc,
        velocity_source=VelocitySource.PRESCRIBED,
        time_direction=TimeDirection.BACKWARD_DUAL,
    )
    wanted = set(checkpoint_steps)
    captured = {}
    l1_trace = []

    def capture(state: SolverState):
        l1_trace.append(lp_norm(state.theta, 1))
        if state.step_count in wanted:
            captured[state.step_count] = state.theta
        return None

    mu = velocity_bmo(velocity_history, [0.0, horizon])
    logger.info(f"ledger r={spec.r}: {len(schedule.times)} checkpoints, dt={dt:.3e}, mu={mu:.4g}")
    run_backward(psi0, velocity_history, eq, horizon, dt, observers=[capture])

    snapshots = [captured[k] for k in checkpoint_steps]
    elapsed = np.array([k * dt for k in checkpoint_steps])
    linf = np.array([lp_norm(p, np.inf) for p in snapshots])
    l1 = np.array([lp_norm(p, 1) for p in snapshots])

    ledger = MoleculeLedger.start(spec, params, alpha, n)

    def bounds(c0: float) -> Tuple[np.ndarray, np.ndarray]:
        trial = ledger.model_copy(update={"c0": c0})
        return (
            np.array([trial.height_bound(e) for e in elapsed]),
            np.array([trial.l1_bound(e) for e in elapsed]),
        )

    def height_and_l1_pass(c0: float) -> bool:
        height_bound, l1_bound = bounds(c0)
        return bool(np.all(linf <= height_bound) and np.all(l1 <= l1_bound))

    if height_and_l1_pass(0.5):
        c0max = 0.5
    elif not height_and_l1_pass(1e-6):
        c0max = 0.0
    else:
        c0max = _log_bisect(height_and_l1_pass, 1e-6, 0.5, rtol=1e-3, largest=True)
    c0 = min(0.5, c0max / 2.0)
    ledger = ledger.model_copy(update={"c0": c0 if c0 > 0 else params.c0})

    centers = _center_trajectory(ledger, velocity_history, psi0, spec, schedule.times, step_counts, dt, horizon)
    concentration = np.array(
        [concentration_integral(p, c, spec.omega) for p, c in zip(snapshots, centers)]
    )

    def concentration_pass(K: float) -> bool:
        g_values = g_sequence(ledger.model_copy(update={"K": K}), schedule.times)
        for k, g in enumerate(g_values):
            if g >= 1.0:
                return True
            if concentration[k] > g ** (spec.omega - gamma):
                return False
        return True

    if concentration_pass(0.0):
        kmin = 0.0
    else:
        lo, hi = KMIN_FLOOR, 1.0
        while not concentration_pass(hi) and hi < 1e8:
            lo, hi = hi, 2.0 * hi
        if concentration_pass(hi):
            kmin = _log_bisect(concentration_pass, lo, hi, rtol=1e-2, largest=False)
        else:
            kmin = math.inf

    K = kmin if math.isfinite(kmin) else params.K
    ledger = ledger.model_copy(update={"K": K, "times": list(schedule.times)})
    g_values = g_sequence(ledger, schedule.times)
    regime_step = len(g_values) - 1 if g_values[-1] >= 1.0 else None
    if regime_step is not None:
        logger.warning(f"ledger r={spec.r}: G_{regime_step} >= 1, maximum principle regime from there on")

    rows = []
    height_bound, l1_bound = bounds(ledger.c0)
    for k, s in enumerate(schedule.times):
        g = g_values[k] if k < len(g_values) else float("nan")
        row = {
            "step": k,
            "s_k": s,
            "sum_s": float(elapsed[k]),
            "G_N": g,
            "f": ledger.f_value(float(elapsed[k])),
            "conc": float(concentration[k]),
            "conc_bound": g ** (spec.omega - gamma) if k < len(g_values) else float("nan"),
            "linf": float(linf[k]),
            "linf_bound": float(height_bound[k]),
            "l1": float(l1[k]),
            "l1_bound": float(l1_bound[k]),
            "Kmin": kmin,
            "c0max": c0max,
        }
        row.update({f"center_{i + 1}": c for i, c in enumerate(centers[k])})
        rows.append(row)

    ledger = ledger.model_copy(
        update={
            "centers": centers,
            "G_values": g_values,
            "f_values": [ledger.f_value(float(e)) for e in elapsed],
        }
    )
    l1_initial = l1_trace[0]
    final_bound = unit_ball_volume(n) * (ledger.c0 * params.delta_stop) ** (-spec.omega / (2.0 * alpha))
    logger.info(f"ledger r={spec.r}: Kmin={kmin:.4g} c0max={c0max:.4g} final l1={l1[-1]:.4g} <= {final_bound:.4g}")
    return MoleculeExperimentResult(
        r=spec.r,
        gamma=gamma,
        omega=spec.omega,
        alpha=alpha,
        mu=mu,
        kmin=kmin,
        c0max=c0max,
        c0=c0,
        rows=rows,
        schedule_total=schedule.total,
        final_l1=float(l1[-1]),
        final_l1_bound=final_bound,
        l1_initial=l1_initial,
        l1_max_excess=max(0.0, max(l1_trace) - l1_initial),
        regime_step=regime_step,
        ledger=ledger,
    )


def _center_trajectory(
    ledger: MoleculeLedger,
    velocity,
    psi0: Field,
    spec: MoleculeSpec,
    times: Sequence[float],
    step_counts: Sequence[int],
    dt: float,
    horizon: float,
) -> List[Tuple[float, ...]]:
    """
    Explicit Euler for x'(s) = -mean_{B(x, rho)} v(t - s); psi is carried by -v
    in the backward-dual run. rho = r during s_0, then f(r, s_0 .. s_{k-1}).
    """
    grid = psi0.grid
    center = np.array(molecule_center(spec, grid))
    out = []
    step = 0
    elapsed = 0.0
    for k, count in enumerate(step_counts):
        radius = ledger.r if k == 0 else ledger.f_value(elapsed)
        for _ in range(count):
            if velocity is not None:
                mean = center_velocity(velocity.at(horizon - step * dt), center, radius)
                center = (center - dt * np.array(mean)) % grid.box_length
            step += 1
        elapsed += times[k]
        out.append(tuple(float(c) for c in center))
    return out
