# src/evolution.py
"""
Time integration of the fractional transport equation and its backward dual.

Forward runs solve  d_t theta = -div(v theta) - Lambda^{2 alpha} theta + eps Delta theta.
The backward-dual mode solves  d_s psi = +div(v(t - s) psi) - Lambda^{2 alpha} psi + eps Delta psi,
i.e. the same equation driven by -v read backwards in time, so that the L^2 pairing
of a forward and a backward run is preserved.

The integrator is an integrating-factor Runge-Kutta scheme (Heun on the
integrating-factor variable); the linear stiff part is applied exactly.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.optimize import brentq

from src.errors import (
    CFLViolation,
    ConfigurationError,
    FieldValidationError,
    HistoryGapError,
    ParameterError,
    PicardDivergenceError,
    SolverAbort,
)
from src.spectral_core import (
    Field,
    Grid,
    dealias,
    flux_divergence,
    forward_array,
    gaussian_multiplier,
    apply_multiplier,
    inverse_array,
    riesz_transform,
)

logger = logging.getLogger(__name__)


class VelocitySource(str, Enum):
    SQG_COUPLED = "sqg_coupled"
    PRESCRIBED = "prescribed"


class TimeDirection(str, Enum):
    FORWARD = "forward"
    BACKWARD_DUAL = "backward_dual"


PRESCRIBED_KINDS = ("zero", "shear", "cellular")


class EquationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = 0.25
    epsilon_visc: float = 0.0
    velocity_source: VelocitySource = VelocitySource.SQG_COUPLED
    mollify_eps: float = 0.0
    time_direction: TimeDirection = TimeDirection.FORWARD
    # which steady field the harness builds for velocity_source = prescribed
    prescribed_velocity: str = "zero"
    velocity_amplitude: float = 1.0
    cfl_limit: float = 0.5
    # unknown constant C of the Picard contraction time bound
    contraction_constant: float = 1.0
    # test hook: False drops Lambda^{2 alpha} and eps Delta (pure transport)
    include_dissipation: bool = True

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value: float) -> float:
        if not 0.0 < value <= 0.5:
            raise ConfigurationError(f"alpha must lie in (0, 0.5], got {value}")
        return value

    @field_validator("epsilon_visc", "mollify_eps")
    @classmethod
    def _check_nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ConfigurationError(f"viscosity and mollification widths must be >= 0, got {value}")
        return value

    @field_validator("cfl_limit", "contraction_constant")
    @classmethod
    def _check_positive(cls, value: float) -> float:
        if value <= 0:
            raise ConfigurationError(f"expected a positive value, got {value}")
        return value

    @field_validator("prescribed_velocity")
    @classmethod
    def _check_kind(cls, value: str) -> str:
        if value not in PRESCRIBED_KINDS:
            raise ConfigurationError(
                f"prescribed_velocity must be one of {', '.join(PRESCRIBED_KINDS)}, got {value!r}"
            )
        return value


@dataclass(frozen=True)
class SolverState:
    theta: Field
    time: float
    step_count: int
    dt: float


Observer = Callable[[SolverState], Optional[dict]]


# ---------------------------------------------------------
# Velocity fields and accessors
# ---------------------------------------------------------
def sqg_velocity(theta: Field) -> Tuple[Field, Field]:
    """u = (-R_2 theta, R_1 theta)."""
    theta = theta.physical()
    return (-riesz_transform(theta, 2), riesz_transform(theta, 1))


def mollify_velocity(v: Sequence[Field], eps: float) -> Tuple[Field, ...]:
    if eps <= 0:
        raise ParameterError(f"mollification width must be positive, got {eps}")
    kernel = gaussian_multiplier(eps)
    return tuple(apply_multiplier(component, kernel) for component in v)


def divergence_coefficients(v: Sequence[Field]) -> np.ndarray:
    grid = v[0].grid
    total = np.zeros(grid.spectral_shape, dtype=np.complex128)
    for xi, component in zip(grid.wavevector(), v):
        total += 1j * xi * component.spectral().values
    return total


def check_divergence_free(v: Sequence[Field], tol: float = 1e-10) -> None:
    scale = max(1.0, max(float(np.max(np.abs(c.physical().values))) for c in v))
    residual = float(np.max(np.abs(divergence_coefficients(v))))
    if residual > tol * scale:
        raise FieldValidationError(f"velocity is not divergence-free (max |xi . v_hat| = {residual:.3e})")


def shear_velocity(grid: Grid, amplitude: float = 1.0) -> Tuple[Field, ...]:
    """v = (A sin(2 pi x_2 / L), 0); in 1D the only divergence-free field is a constant."""
    if grid.dim == 1:
        return (Field.constant(grid, amplitude),)
    k = 2.0 * np.pi / grid.box_length
    return (
        Field.from_function(grid, lambda x1, x2: amplitude * np.sin(k * x2)),
        Field.zeros(grid),
    )


def cellular_velocity(grid: Grid, amplitude: float = 1.0) -> Tuple[Field, ...]:
    if grid.dim == 1:
        return (Field.constant(grid, amplitude),)
    k = 2.0 * np.pi / grid.box_length
    return (
        Field.from_function(grid, lambda x1, x2: amplitude * np.sin(k * x1) * np.cos(k * x2)),
        Field.from_function(grid, lambda x1, x2: -amplitude * np.cos(k * x1) * np.sin(k * x2)),
    )


class SteadyVelocity:
    """Time-independent divergence-free velocity."""

    def __init__(self, components: Sequence[Field]):
        components = tuple(c.physical() for c in components)
        check_divergence_free(components)
        self.components = components

    @classmethod
    def zero(cls, grid: Grid) -> "SteadyVelocity":
        return cls([Field.zeros(grid) for _ in range(grid.dim)])

    def at(self, t: float) -> Tuple[Field, ...]:
        return self.components

    def covers(self, t0: float, t1: float) -> bool:
        return True

    def sup_norm(self) -> float:
        magnitude = np.sqrt(sum(c.values ** 2 for c in self.components))
        return float(np.max(magnitude))


def prescribed_velocity(grid: Grid, spec: EquationSpec) -> SteadyVelocity:
    if spec.prescribed_velocity == "shear":
        return SteadyVelocity(shear_velocity(grid, spec.velocity_amplitude))
    if spec.prescribed_velocity == "cellular":
        return SteadyVelocity(cellular_velocity(grid, spec.velocity_amplitude))
    return SteadyVelocity.zero(grid)


class VelocityHistory:
    """Velocity snapshots of a forward run, linearly interpolated in time."""

    def __init__(self, grid: Grid, dt: float):
        self.grid = grid
        self.dt = dt
        self.times: List[float] = []
        self.snapshots: List[Tuple[np.ndarray, ...]] = []

    def record(self, t: float, v: Sequence[Field]) -> None:
        if self.times and t <= self.times[-1]:
            raise ParameterError(f"history times must increase, got {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.snapshots.append(tuple(np.array(c.physical().values) for c in v))

    def __len__(self) -> int:
        return len(self.times)

    def covers(self, t0: float, t1: float) -> bool:
        if not self.times:
            return False
        slack = 1e-9 * max(1.0, self.dt)
        return self.times[0] <= t0 + slack and self.times[-1] >= t1 - slack

    def at(self, t: float) -> Tuple[Field, ...]:
        if not self.times:
            raise HistoryGapError("velocity history is empty")
        slack = 1e-9 * max(1.0, self.dt)
        if t < self.times[0] - slack or t > self.times[-1] + slack:
            raise HistoryGapError(
                f"t = {t} outside recorded history [{self.times[0]}, {self.times[-1]}]"
            )
        t = min(max(t, self.times[0]), self.times[-1])
        hi = int(np.searchsorted(self.times, t))
        if hi < len(self.times) and abs(self.times[hi] - t) <= slack:
            return tuple(Field(self.grid, c) for c in self.snapshots[hi])
        lo = hi - 1
        gap = self.times[hi] - self.times[lo]
        if gap > 1.5 * self.dt:
            raise HistoryGapError(f"history gap of {gap:.3e} around t = {t} exceeds one step")
        weight = (t - self.times[lo]) / gap
        return tuple(
            Field(self.grid, (1.0 - weight) * a + weight * b)
            for a, b in zip(self.snapshots[lo], self.snapshots[hi])
        )


class _ReversedVelocity:
    def __init__(self, source, horizon: float):
        self.source = source
        self.horizon = horizon

    def at(self, s: float) -> Tuple[Field, ...]:
        return self.source.at(self.horizon - s)


# ---------------------------------------------------------
# Integrator
# ---------------------------------------------------------
@lru_cache(maxsize=16)
def _integrator(grid: Grid, spec: EquationSpec, dt: float) -> "_Integrator":
    return _Integrator(grid, spec, dt)


class _Integrator:
    """Heun's method on u = exp(t L) theta_hat, L = Lambda^{2 alpha} - eps Delta."""

    def __init__(self, grid: Grid, spec: EquationSpec, dt: float):
        self.grid = grid
        self.spec = spec
        self.dt = dt
        magnitude = grid.wavevector_magnitude()
        if spec.include_dissipation:
            rate = magnitude ** (2.0 * spec.alpha) + spec.epsilon_visc * magnitude ** 2
        else:
            rate = np.zeros_like(magnitude)
        self.decay = np.exp(-dt * rate)
        self.max_wavevector = grid.max_wavevector()
        self.sign = -1.0 if spec.time_direction is TimeDirection.FORWARD else 1.0
        self.use_sqg = (
            spec.velocity_source is VelocitySource.SQG_COUPLED
            and spec.time_direction is TimeDirection.FORWARD
        )
        if self.use_sqg and grid.dim != 2:
            raise ConfigurationError("SQG coupling needs dim = 2")
        if self.use_sqg:
            xi1, xi2 = grid.wavevector()
            safe = np.where(magnitude > 0, magnitude, 1.0)
            # -R_2 and R_1 symbols
            self.sqg_symbols = (
                np.where(magnitude > 0, 1j * xi2 / safe, 0.0),
                np.where(magnitude > 0, -1j * xi1 / safe, 0.0),
            )
        # backward runs read velocities that were mollified when recorded
        self.mollifier = (
            np.exp(-0.5 * spec.mollify_eps ** 2 * magnitude ** 2)
            if spec.mollify_eps > 0 and spec.time_direction is TimeDirection.FORWARD
            else None
        )

    def velocity(self, coeffs: np.ndarray, t: float, accessor) -> Optional[Tuple[np.ndarray, ...]]:
        if self.use_sqg:
            spectral = [symbol * coeffs for symbol in self.sqg_symbols]
        elif accessor is None:
            return None
        else:
            components = accessor.at(t)
            if self.mollifier is None:
                return tuple(c.physical().values for c in components)
            spectral = [forward_array(c.physical().values, self.grid.dim) for c in components]
        if self.mollifier is not None:
            spectral = [self.mollifier * c for c in spectral]
        return tuple(inverse_array(c, self.grid) for c in spectral)

    def transport(self, coeffs: np.ndarray, t: float, accessor, check_cfl: bool = False) -> np.ndarray:
        v = self.velocity(coeffs, t, accessor)
        if v is None:
            return np.zeros_like(coeffs)
        if check_cfl:
            v_max = float(np.max(np.sqrt(sum(c ** 2 for c in v))))
            courant = self.dt * self.max_wavevector * v_max
            if courant > self.spec.cfl_limit:
                advisory = self.spec.cfl_limit / (self.max_wavevector * v_max)
                raise CFLViolation(
                    f"CFL number {courant:.3f} exceeds {self.spec.cfl_limit}; use dt <= {advisory:.3e}",
                    advisory_dt=advisory,
                )
        return self.sign * flux_divergence(self.grid, v, inverse_array(coeffs, self.grid))

    def advance(self, coeffs: np.ndarray, t: float, accessor) -> np.ndarray:
        h = self.dt
        k1 = self.transport(coeffs, t, accessor, check_cfl=True)
        predictor = self.decay * (coeffs + h * k1)
        k2 = self.transport(predictor, t + h, accessor)
        return self.decay * (coeffs + 0.5 * h * k1) + 0.5 * h * k2


def etd_step(state: SolverState, spec: EquationSpec, velocity=None) -> SolverState:
    """
    Advance one step. `velocity` is an accessor with at(t); it is required for
    prescribed and backward-dual runs (None means v = 0) and ignored for
    forward SQG coupling.
    """
    grid = state.theta.grid
    integrator = _integrator(grid, spec, state.dt)
    coeffs = integrator.advance(state.theta.spectral().values, state.time, velocity)
    values = inverse_array(coeffs, grid)
    if not np.all(np.isfinite(values)):
        raise SolverAbort(f"non-finite field after step {state.step_count + 1}", last_good=state)
    return SolverState(
        theta=Field(grid, values),
        time=state.time + state.dt,
        step_count=state.step_count + 1,
        dt=state.dt,
    )


@dataclass
class RunResult:
    state: SolverState
    records: List[dict] = field(default_factory=list)
    history: Optional[VelocityHistory] = None


def _step_count(t_end: float, dt: float, label: str) -> Tuple[int, float]:
    if t_end <= 0:
        raise ParameterError(f"{label} must be positive, got {t_end}")
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    n_steps = max(1, int(round(t_end / dt)))
    adjusted = t_end / n_steps
    if abs(adjusted - dt) > 1e-12 * dt:
        logger.warning(f"dt adjusted from {dt:.6g} to {adjusted:.6g} so that {n_steps} steps reach {t_end:.6g}")
    return n_steps, adjusted


def _observe(state: SolverState, observers: Sequence[Observer]) -> Optional[dict]:
    row = None
    for observer in observers:
        reading = observer(state)
        if reading:
            row = row or {"time": state.time, "step": state.step_count}
            row.update(reading)
    return row


def _stage_velocity(state: SolverState, spec: EquationSpec, velocity) -> Tuple[Field, ...]:
    if spec.velocity_source is VelocitySource.SQG_COUPLED:
        v = sqg_velocity(state.theta)
    elif velocity is None:
        v = tuple(Field.zeros(state.theta.grid) for _ in range(state.theta.grid.dim))
    else:
        v = velocity.at(state.time)
    return mollify_velocity(v, spec.mollify_eps) if spec.mollify_eps > 0 else tuple(v)


def run_forward(
    theta0: Field,
    spec: EquationSpec,
    t_end: float,
    dt: float,
    observers: Sequence[Observer] = (),
    velocity=None,
    record_history: bool = False,
) -> RunResult:
    """
    Integrate from t = 0 to t_end. The initial field is projected onto the
    dealiased band first. Observers see every state including the initial one;
    their readings are merged into one record per step.
    """
    if spec.time_direction is not TimeDirection.FORWARD:
        spec = spec.model_copy(update={"time_direction": TimeDirection.FORWARD})
    n_steps, dt = _step_count(t_end, dt, "t_end")
    state = SolverState(theta=dealias(theta0.physical()), time=0.0, step_count=0, dt=dt)
    result = RunResult(state=state, history=VelocityHistory(theta0.grid, dt) if record_history else None)
    logger.info(
        f"forward run: alpha={spec.alpha} eps={spec.epsilon_visc} source={spec.velocity_source.value} "
        f"N={theta0.grid.points_per_axis} steps={n_steps} dt={dt:.3e}"
    )

    for step in range(n_steps + 1):
        row = _observe(state, observers)
        if row is not None:
            result.records.append(row)
        if result.history is not None:
            result.history.record(state.time, _stage_velocity(state, spec, velocity))
        if step == n_steps:
            break
        state = etd_step(state, spec, velocity)
        logger.debug(f"step {state.step_count}: t={state.time:.6f}")

    result.state = state
    return result


def run_backward(
    psi0: Field,
    velocity_history,
    spec: EquationSpec,
    t: float,
    dt: float,
    observers: Sequence[Observer] = (),
) -> SolverState:
    """Integrate the backward-dual equation from s = 0 to s = t with velocity v(t - s)."""
    spec = spec.model_copy(update={"time_direction": TimeDirection.BACKWARD_DUAL})
    psi0 = dealias(psi0.physical())
    if t == 0:
        state = SolverState(theta=psi0, time=0.0, step_count=0, dt=dt)
        _observe(state, observers)
        return state
    n_steps, dt = _step_count(t, dt, "t")
    if velocity_history is not None and not velocity_history.covers(0.0, t):
        raise HistoryGapError(f"velocity history does not cover [0, {t}]")
    accessor = _ReversedVelocity(velocity_history, t) if velocity_history is not None else None

    state = SolverState(theta=psi0, time=0.0, step_count=0, dt=dt)
    _observe(state, observers)
    for _ in range(n_steps):
        state = etd_step(state, spec, accessor)
        _observe(state, observers)
    return state


# ---------------------------------------------------------
# Picard scheme
# ---------------------------------------------------------
class PicardReport(BaseModel):
    t_prime: float
    n_quad: int
    iterations: int
    converged: bool
    bound_value: float
    distances: List[float]
    ratios: List[float]


def contraction_bound_value(spec: EquationSpec, t_prime: float, v_sup: float) -> float:
    """C (t'^{1/2} eps^{-1/2} ||v||_inf + t'^{1-alpha} eps^{-alpha})."""
    eps = spec.epsilon_visc
    return spec.contraction_constant * (
        math.sqrt(t_prime / eps) * v_sup + t_prime ** (1.0 - spec.alpha) * eps ** (-spec.alpha)
    )


def picard_time_bound(spec: EquationSpec, v_sup: float) -> float:
    """Largest t' with contraction_bound_value(t') <= 1/2."""
    if spec.epsilon_visc <= 0:
        raise ParameterError("the Picard scheme needs epsilon_visc > 0")

    def excess(t_prime: float) -> float:
        return contraction_bound_value(spec, t_prime, v_sup) - 0.5

    upper = 1.0
    while excess(upper) < 0:
        upper *= 2.0
    return brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-12)


def _lp_distance(a: np.ndarray, b: np.ndarray, p: float, cell_volume: float) -> float:
    diff = np.abs(a - b)
    if math.isinf(p):
        return float(np.max(diff))
    return float((np.sum(diff ** p) * cell_volume) ** (1.0 / p))


def picard_solve(
    theta0: Field,
    v,
    spec: EquationSpec,
    t_prime: float,
    n_quad: int,
    max_iter: int = 40,
    p: float = 2.0,
    tol: float = 1e-10,
    enforce_bound: bool = True,
) -> Tuple[Field, PicardReport]:
    """
    Fixed-point iteration of the mild formulation on n_quad uniform intervals of [0, t']:

        theta_{k+1}(t) = H(t) theta0 - int_0^t H(t - s) [div(v_eps theta_k) + Lambda^{2 alpha} theta_k](s) ds

    with H the heat semigroup exp(eps t Delta) applied exactly and the time
    integral done by the trapezoid rule. Returns theta at t' and the report.
    """
    if spec.epsilon_visc <= 0:
        raise ParameterError("the Picard scheme needs epsilon_visc > 0")
    if t_prime <= 0 or n_quad < 1 or max_iter < 1:
        raise ParameterError("t_prime, n_quad and max_iter must be positive")

    grid = theta0.grid
    accessor = v if v is not None else SteadyVelocity.zero(grid)
    velocity = accessor.at(0.0)
    if spec.mollify_eps > 0:
        velocity = mollify_velocity(velocity, spec.mollify_eps)
    v_values = [c.physical().values for c in velocity]
    v_sup = float(np.max(np.sqrt(sum(c ** 2 for c in v_values))))

    bound = contraction_bound_value(spec, t_prime, v_sup)
    if enforce_bound and bound > 0.5:
        raise ParameterError(
            f"t' = {t_prime:.4g} violates the contraction bound ({bound:.4g} > 1/2); "
            f"largest admissible t' is {picard_time_bound(spec, v_sup):.4g}"
        )

    magnitude = grid.wavevector_magnitude()
    h = t_prime / n_quad
    heat_step = np.exp(-spec.epsilon_visc * h * magnitude ** 2)
    lam = magnitude ** (2.0 * spec.alpha)
    start = dealias(theta0.physical()).spectral().values

    # H(t_i) theta0 on every node
    free = [start]
    for _ in range(n_quad):
        free.append(heat_step * free[-1])

    def forcing(coeffs: np.ndarray) -> np.ndarray:
        return flux_divergence(grid, v_values, inverse_array(coeffs, grid)) + lam * coeffs

    def sweep(iterate: List[np.ndarray]) -> List[np.ndarray]:
        forcings = [forcing(c) for c in iterate]
        out = [free[0]]
        running = h * forcings[0]
        first = forcings[0]
        for i in range(1, n_quad + 1):
            running = heat_step * running + h * forcings[i]
            first = heat_step * first
            trapezoid = running - 0.5 * h * first - 0.5 * h * forcings[i]
            out.append(free[i] - trapezoid)
        return out

    iterate = list(free)
    physical = [inverse_array(c, grid) for c in iterate]
    distances: List[float] = []
    ratios: List[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        nxt = sweep(iterate)
        nxt_physical = [inverse_array(c, grid) for c in nxt]
        distance = max(
            _lp_distance(a, b, p, grid.cell_volume) for a, b in zip(nxt_physical, physical)
        )
        if distances and distances[-1] > 0:
            ratios.append(distance / distances[-1])
        distances.append(distance)
        iterate, physical = nxt, nxt_physical
        logger.debug(f"picard iteration {iterations}: distance={distance:.3e}")
        if distance < tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r > 1.0 for r in ratios[-3:]):
            raise PicardDivergenceError(
                f"Picard iterates diverge at t' = {t_prime:.4g} (ratios {ratios[-3:]})", ratios=ratios
            )

    report = PicardReport(
        t_prime=t_prime,
        n_quad=n_quad,
        iterations=iterations,
        converged=converged,
        bound_value=bound,
        distances=distances,
        ratios=ratios,
    )
    logger.info(f"picard: {iterations} iterations, converged={converged}, bound={bound:.3f}")
    return Field(grid, physical[-1]), report
