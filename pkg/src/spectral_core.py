# src/spectral_core.py
"""
Fourier representation of periodic fields and the multiplier operators built on it.

Spectral coefficients use the real-to-complex half-spectrum layout (the last
axis keeps k >= 0 only) and are normalised so that a constant field c has the
coefficient c at xi = 0. Wavevectors are in physical units, xi = 2*pi*k / L.
Public axis indices are 1-based (x_1 is array axis 0).
"""
import logging
import math
import os
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np
import scipy.fft
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from src.errors import (
    ConfigurationError,
    FieldValidationError,
    ParameterError,
    ShapeError,
    UnsupportedOperationError,
)

load_dotenv()

FFT_WORKERS = max(1, int(os.getenv("FRACDRIFT_THREADS", "1")))

logger = logging.getLogger(__name__)


# ---------------------------------------------------------
# Grid
# ---------------------------------------------------------
class Grid(BaseModel):
    """Periodic box [0, L)^dim sampled with points_per_axis nodes per axis."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = 2
    points_per_axis: int = 128
    box_length: float = 2.0 * math.pi

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, value: int) -> int:
        if value not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {value}")
        return value

    @field_validator("points_per_axis")
    @classmethod
    def _check_points(cls, value: int) -> int:
        if value < 8 or value & (value - 1):
            raise ConfigurationError(
                f"points_per_axis must be a power of two >= 8, got {value}"
            )
        return value

    @field_validator("box_length")
    @classmethod
    def _check_length(cls, value: float) -> float:
        if not math.isfinite(value) or value <= 0:
            raise ConfigurationError(f"box_length must be positive, got {value}")
        return value

    @classmethod
    def create(cls, dim: int = 2, points_per_axis: int = 128, box_length: float = 2.0 * math.pi) -> "Grid":
        """Build a grid, reporting invalid parameters as ConfigurationError."""
        try:
            return cls(dim=dim, points_per_axis=points_per_axis, box_length=box_length)
        except ValidationError as e:
            raise ConfigurationError(str(e)) from e

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def spectral_shape(self) -> Tuple[int, ...]:
        n = self.points_per_axis
        return (n,) * (self.dim - 1) + (n // 2 + 1,)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return _coordinates(self.dim, self.points_per_axis, self.box_length)

    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """Integer wavenumber indices per axis, broadcastable to spectral_shape."""
        return _wavenumbers(self.dim, self.points_per_axis)

    def wavevector(self) -> Tuple[np.ndarray, ...]:
        return _wavevector(self.dim, self.points_per_axis, self.box_length)

    def wavevector_magnitude(self) -> np.ndarray:
        return _magnitude(self.wavevector())

    def max_wavevector(self) -> float:
        return float(np.max(self.wavevector_magnitude()))

    def spectral_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full spectrum."""
        return _spectral_weights(self.dim, self.points_per_axis)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@lru_cache(maxsize=32)
def _coordinates(dim: int, n: int, length: float) -> Tuple[np.ndarray, ...]:
    x = np.arange(n) * (length / n)
    if dim == 1:
        return (_readonly(x),)
    return tuple(_readonly(a) for a in np.meshgrid(x, x, indexing="ij"))


@lru_cache(maxsize=32)
def _wavenumbers(dim: int, n: int) -> Tuple[np.ndarray, ...]:
    full = scipy.fft.fftfreq(n, d=1.0 / n)
    half = scipy.fft.rfftfreq(n, d=1.0 / n)
    out = []
    for axis in range(dim):
        k = half if axis == dim - 1 else full
        shape = [1] * dim
        shape[axis] = k.size
        out.append(_readonly(k.reshape(shape)))
    return tuple(out)


@lru_cache(maxsize=32)
def _wavevector(dim: int, n: int, length: float) -> Tuple[np.ndarray, ...]:
    scale = 2.0 * np.pi / length
    return tuple(_readonly(scale * k) for k in _wavenumbers(dim, n))


@lru_cache(maxsize=32)
def _spectral_weights(dim: int, n: int) -> np.ndarray:
    weights = np.full(n // 2 + 1, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    shape = [1] * dim
    shape[-1] = weights.size
    return _readonly(weights.reshape(shape))


@lru_cache(maxsize=32)
def _dealias_mask(dim: int, n: int) -> np.ndarray:
    cutoff = (2.0 / 3.0) * (n / 2)
    keep = np.ones((n,) * (dim - 1) + (n // 2 + 1,), dtype=bool)
    for k in _wavenumbers(dim, n):
        keep &= np.abs(k) <= cutoff
    return _readonly(keep)


def _magnitude(xi: Sequence[np.ndarray]) -> np.ndarray:
    return np.sqrt(sum(component ** 2 for component in xi))


# ---------------------------------------------------------
# Field
# ---------------------------------------------------------
class Representation(str, Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


class Direction(str, Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable sample array on a Grid, in physical or spectral representation."""

    grid: Grid
    values: np.ndarray
    representation: Representation = Representation.PHYSICAL

    def __post_init__(self):
        rep = Representation(self.representation)
        if rep is Representation.PHYSICAL:
            if np.iscomplexobj(self.values):
                raise FieldValidationError("physical field values must be real")
            expected = self.grid.shape
            array = np.array(self.values, dtype=np.float64, copy=True)
        else:
            expected = self.grid.spectral_shape
            array = np.array(self.values, dtype=np.complex128, copy=True)

        if array.shape != expected:
            if array.size != int(np.prod(expected)):
                raise ShapeError(f"values of shape {array.shape} do not fit grid shape {expected}")
            array = array.reshape(expected)
        if rep is Representation.PHYSICAL and not np.all(np.isfinite(array)):
            raise FieldValidationError("physical field values must be finite")
        if rep is Representation.SPECTRAL:
            hermitian_projection(array, self.grid.dim)

        object.__setattr__(self, "values", _readonly(array))
        object.__setattr__(self, "representation", rep)

    # --- constructors ---
    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        values = np.broadcast_to(fn(*grid.coordinates()), grid.shape)
        return cls(grid, values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls.constant(grid, 0.0)

    # --- representation ---
    def physical(self) -> "Field":
        if self.representation is Representation.PHYSICAL:
            return self
        return transform(self, Direction.INVERSE)

    def spectral(self) -> "Field":
        if self.representation is Representation.SPECTRAL:
            return self
        return transform(self, Direction.FORWARD)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.representation)

    def mean(self) -> float:
        if self.representation is Representation.SPECTRAL:
            return float(self.values[(0,) * self.grid.dim].real)
        return float(self.values.mean())

    # --- arithmetic on matching representations ---
    def _operand(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ShapeError("fields live on different grids")
            if other.representation is not self.representation:
                other = other.spectral() if self.representation is Representation.SPECTRAL else other.physical()
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._operand(other))

    def __mul__(self, other):
        if isinstance(other, Field):
            return Field(self.grid, self.physical().values * other.physical().values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_values(self.values / scalar)

    def __neg__(self):
        return self.with_values(-self.values)


def hermitian_projection(coeffs: np.ndarray, dim: int) -> np.ndarray:
    """
    In place: make the k_last = 0 and Nyquist planes satisfy c(-k) = conj(c(k)).
    This is the part of the half spectrum a real inverse transform can represent;
    self-conjugate modes become real.
    """
    leading = tuple(range(dim - 1))
    for index in (0, coeffs.shape[-1] - 1):
        plane = coeffs[..., index]
        mirror = np.conj(np.roll(np.flip(plane, axis=leading), 1, axis=leading)) if leading else np.conj(plane)
        coeffs[..., index] = 0.5 * (plane + mirror)
    return coeffs


def forward_array(values: np.ndarray, dim: int) -> np.ndarray:
    return scipy.fft.rfftn(values, axes=tuple(range(dim)), norm="forward", workers=FFT_WORKERS)


def inverse_array(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return scipy.fft.irfftn(
        coeffs, s=grid.shape, axes=tuple(range(grid.dim)), norm="forward", workers=FFT_WORKERS
    )


def transform(f: Field, direction: Direction) -> Field:
    """Forward (physical -> spectral) or inverse (spectral -> physical) transform."""
    direction = Direction(direction)
    source = Representation.PHYSICAL if direction is Direction.FORWARD else Representation.SPECTRAL
    if f.representation is not source:
        raise FieldValidationError(
            f"{direction.value} transform expects a {source.value} field, got {f.representation.value}"
        )
    if direction is Direction.FORWARD:
        return Field(f.grid, forward_array(f.values, f.grid.dim), Representation.SPECTRAL)
    return Field(f.grid, inverse_array(f.values, f.grid), Representation.PHYSICAL)


def inner(f: Field, g: Field) -> float:
    """L^2 pairing of two real fields, integral of f*g over the box."""
    if f.grid != g.grid:
        raise ShapeError("fields live on different grids")
    return float(np.sum(f.physical().values * g.physical().values) * f.grid.cell_volume)


# ---------------------------------------------------------
# Multipliers
# ---------------------------------------------------------
Symbol = Callable[[Tuple[np.ndarray, ...]], np.ndarray]


@dataclass(frozen=True)
class Multiplier:
    name: str
    symbol: Symbol

    def evaluate(self, grid: Grid) -> np.ndarray:
        values = np.broadcast_to(
            np.asarray(self.symbol(grid.wavevector()), dtype=np.complex128), grid.spectral_shape
        )
        if not np.all(np.isfinite(values)):
            raise FieldValidationError(f"multiplier {self.name} is not finite on the grid")
        return values

    def check_hermitian(self, grid: Grid, rtol: float = 1e-12) -> None:
        """The symbol must satisfy m(-xi) = conj(m(xi)) so real fields stay real."""
        xi = grid.wavevector()
        plus = np.asarray(self.symbol(xi), dtype=np.complex128)
        minus = np.asarray(self.symbol(tuple(-component for component in xi)), dtype=np.complex128)
        scale = max(1.0, float(np.max(np.abs(plus))))
        if not np.allclose(minus, np.conj(plus), rtol=rtol, atol=rtol * scale):
            raise FieldValidationError(f"multiplier {self.name} breaks Hermitian symmetry")


def fractional_multiplier(two_alpha: float) -> Multiplier:
    return Multiplier(f"Lambda^{two_alpha:g}", lambda xi: _magnitude(xi) ** two_alpha)


def riesz_multiplier(j: int) -> Multiplier:
    axis = j - 1

    def symbol(xi):
        magnitude = _magnitude(xi)
        numerator = np.broadcast_to(-1j * xi[axis], magnitude.shape)
        return np.divide(numerator, magnitude, out=np.zeros(magnitude.shape, np.complex128), where=magnitude > 0)

    return Multiplier(f"R_{j}", symbol)


def derivative_multiplier(j: int) -> Multiplier:
    return Multiplier(f"d/dx_{j}", lambda xi: 1j * xi[j - 1])


def semigroup_multiplier(tau: float, two_alpha: float, epsilon_visc: float = 0.0) -> Multiplier:
    def symbol(xi):
        magnitude = _magnitude(xi)
        return np.exp(-tau * (magnitude ** two_alpha + epsilon_visc * magnitude ** 2))

    return Multiplier(f"exp(-{tau:g}(Lambda^{two_alpha:g} - {epsilon_visc:g}Delta))", symbol)


def gaussian_multiplier(eps: float) -> Multiplier:
    return Multiplier(f"gauss({eps:g})", lambda xi: np.exp(-0.5 * eps ** 2 * _magnitude(xi) ** 2))


# ---------------------------------------------------------
# Operators
# ---------------------------------------------------------
def apply_multiplier(f: Field, m: Multiplier) -> Field:
    """Multiply every Fourier coefficient by the symbol; keeps f's representation."""
    m.check_hermitian(f.grid)
    out = Field(f.grid, f.spectral().values * m.evaluate(f.grid), Representation.SPECTRAL)
    return out if f.representation is Representation.SPECTRAL else out.physical()


def _check_two_alpha(two_alpha: float) -> None:
    if not 0.0 < two_alpha <= 2.0:
        raise ParameterError(f"two_alpha must lie in (0, 2], got {two_alpha}")


def fractional_laplacian(f: Field, two_alpha: float) -> Field:
    _check_two_alpha(two_alpha)
    return apply_multiplier(f, fractional_multiplier(two_alpha))


def riesz_transform(f: Field, j: int) -> Field:
    if f.grid.dim != 2:
        raise UnsupportedOperationError("Riesz transforms are only provided for dim = 2")
    if j not in (1, 2):
        raise ParameterError(f"axis index must be 1 or 2, got {j}")
    return apply_multiplier(f, riesz_multiplier(j))


def semigroup_step(f: Field, tau: float, two_alpha: float, epsilon_visc: float = 0.0) -> Field:
    """Apply exp(-tau * (Lambda^two_alpha - epsilon_visc * Delta))."""
    if tau < 0:
        raise ParameterError(f"tau must be nonnegative, got {tau}")
    if epsilon_visc < 0:
        raise ParameterError(f"epsilon_visc must be nonnegative, got {epsilon_visc}")
    _check_two_alpha(two_alpha)
    return apply_multiplier(f, semigroup_multiplier(tau, two_alpha, epsilon_visc))


def dealias_mask(grid: Grid) -> np.ndarray:
    return _dealias_mask(grid.dim, grid.points_per_axis)


def dealias(f: Field) -> Field:
    """Two-thirds rule: zero every coefficient with |k_axis| > (2/3)(N/2) on some axis."""
    out = Field(f.grid, f.spectral().values * dealias_mask(f.grid), Representation.SPECTRAL)
    return out if f.representation is Representation.SPECTRAL else out.physical()


def gradient(f: Field) -> Tuple[Field, ...]:
    f = f.physical()
    return tuple(apply_multiplier(f, derivative_multiplier(j)) for j in range(1, f.grid.dim + 1))


def divergence_of_product(v: Sequence[Field], f: Field) -> Field:
    """sum_j d/dx_j (v_j f): products in physical space, dealiased, derivative spectrally."""
    grid = f.grid
    if len(v) != grid.dim:
        raise ShapeError(f"velocity has {len(v)} components on a {grid.dim}-d grid")
    for component in v:
        if component.grid != grid:
            raise ShapeError("velocity and scalar live on different grids")

    coeffs = flux_divergence(grid, [c.physical().values for c in v], f.physical().values)
    return Field(grid, inverse_array(coeffs, grid))


def flux_divergence(grid: Grid, velocity: Sequence[np.ndarray], scalar: np.ndarray) -> np.ndarray:
    """Array kernel of divergence_of_product; returns dealiased spectral coefficients."""
    mask = dealias_mask(grid)
    total = np.zeros(grid.spectral_shape, dtype=np.complex128)
    for xi, component in zip(grid.wavevector(), velocity):
        flux = forward_array(component * scalar, grid.dim) * mask
        total += 1j * xi * flux
    return total
