# src/initial_conditions.py
import logging
from typing import Sequence

import numpy as np

from src.errors import ConfigurationError
from src.spectral_core import Field, Grid, inverse_array

logger = logging.getLogger(__name__)


def random_smooth_field(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    cutoff: int = 4,
    mean_zero: bool = True,
) -> Field:
    """Random Fourier modes with |k| <= cutoff and Gaussian roll-off, scaled to max |theta| = amplitude."""
    k = grid.wavenumbers()
    magnitude = np.sqrt(sum(component ** 2 for component in k))
    envelope = np.where(magnitude <= cutoff, np.exp(-0.5 * (magnitude / max(cutoff / 2.0, 1.0)) ** 2), 0.0)
    noise = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    coeffs = envelope * noise
    coeffs[(0,) * grid.dim] = 0.0
    values = inverse_array(coeffs, grid)
    peak = np.max(np.abs(values))
    if peak == 0:
        raise ConfigurationError("random field came out identically zero; raise the cutoff")
    values = amplitude * values / peak
    if not mean_zero:
        values = values + rng.uniform(-amplitude, amplitude)
    return Field(grid, values)


def random_nonnegative_field(grid: Grid, rng: np.random.Generator, cutoff: int = 4) -> Field:
    """Smooth field with values in [0, 1]."""
    base = random_smooth_field(grid, rng, amplitude=1.0, cutoff=cutoff).values
    return Field(grid, (base - base.min()) / (base.max() - base.min()))


def shifted_bump(grid: Grid, center: Sequence[float] = None, width: float = None, height: float = 1.0) -> Field:
    """Periodic Gaussian bump with values in (0, height]."""
    center = center if center is not None else (grid.box_length / 2.0,) * grid.dim
    width = width if width is not None else 0.08 * grid.box_length
    length = grid.box_length
    offsets = [(x - c + 0.5 * length) % length - 0.5 * length for x, c in zip(grid.coordinates(), center)]
    return Field(grid, height * np.exp(-0.5 * sum(d ** 2 for d in offsets) / width ** 2))


def single_mode(grid: Grid, k: Sequence[int], amplitude: float = 1.0, phase: str = "sin") -> Field:
    scale = 2.0 * np.pi / grid.box_length
    argument = sum(scale * kj * x for kj, x in zip(k, grid.coordinates()))
    wave = np.sin(argument) if phase == "sin" else np.cos(argument)
    return Field(grid, amplitude * np.broadcast_to(wave, grid.shape))


def spectral_resample(f: Field, grid: Grid) -> Field:
    """Same trigonometric polynomial on another resolution; modes at or above the coarser Nyquist are dropped."""
    if grid.dim != f.grid.dim or grid.box_length != f.grid.box_length:
        raise ConfigurationError("resampling keeps the dimension and the box length")
    source = f.spectral().values
    m = min(grid.points_per_axis, f.grid.points_per_axis) // 2 - 1
    full = np.arange(-m, m + 1)
    half = np.arange(0, m + 1)
    src_index = [full % f.grid.points_per_axis] * (grid.dim - 1) + [half]
    dst_index = [full % grid.points_per_axis] * (grid.dim - 1) + [half]
    coeffs = np.zeros(grid.spectral_shape, dtype=complex)
    coeffs[np.ix_(*dst_index)] = source[np.ix_(*src_index)]
    return Field(grid, inverse_array(coeffs, grid))


def smooth_indicator(grid: Grid, radius: float, center: Sequence[float] = None, transition: float = None) -> np.ndarray:
    """1 inside B(center, radius), 0 outside, with a tanh transition of the given width."""
    center = center if center is not None else (grid.box_length / 2.0,) * grid.dim
    transition = transition if transition is not None else 0.1 * radius
    length = grid.box_length
    offsets = [(x - c + 0.5 * length) % length - 0.5 * length for x, c in zip(grid.coordinates(), center)]
    distance = np.sqrt(sum(d ** 2 for d in offsets))
    return 0.5 * (1.0 - np.tanh((distance - radius) / transition))


def truncated_data(base: Field, radius: float, center: Sequence[float] = None, transition: float = None) -> Field:
    """theta_0 restricted to a ball, theta_0^R = theta_0 * 1_{B(center, R)} (smoothed edge)."""
    mask = smooth_indicator(base.grid, radius, center, transition)
    return Field(base.grid, base.physical().values * mask)


def indicator_field(grid: Grid, radius: float, center: Sequence[float] = None, height: float = 1.0) -> Field:
    """Discontinuous indicator: height on the periodic ball B(center, radius), 0 elsewhere."""
    center = center if center is not None else (grid.box_length / 2.0,) * grid.dim
    length = grid.box_length
    offsets = [(x - c + 0.5 * length) % length - 0.5 * length for x, c in zip(grid.coordinates(), center)]
    distance = np.sqrt(sum(d ** 2 for d in offsets))
    return Field(grid, np.where(distance < radius, height, 0.0))


def rough_patches(grid: Grid, rng: np.random.Generator, count: int = 4, amplitude: float = 1.0) -> Field:
    """
    Sum of hard disc indicators with random signs. Centres and radii are drawn
    as fractions of the box, so one stream draws the same pattern relative to
    any box length.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    length = grid.box_length
    values = np.zeros(grid.shape)
    for _ in range(count):
        center = rng.uniform(0.0, 1.0, grid.dim) * length
        radius = rng.uniform(1.0 / 16.0, 1.0 / 6.0) * length
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        values += sign * indicator_field(grid, radius, center).values
    return Field(grid, amplitude * values)


def log_profile(grid: Grid, floor_cells: float = 1.0) -> Field:
    """-log|x - c| cut off at floor_cells grid spacings and at the box scale; mean removed."""
    center = (grid.box_length / 2.0,) * grid.dim
    length = grid.box_length
    offsets = [(x - c + 0.5 * length) % length - 0.5 * length for x, c in zip(grid.coordinates(), center)]
    distance = np.sqrt(sum(d ** 2 for d in offsets))
    values = -np.log(np.clip(distance, floor_cells * grid.spacing, length / 4.0))
    return Field(grid, values - values.mean())


INITIAL_CONDITIONS = ("random_smooth", "random_nonnegative", "shifted_bump", "single_mode", "rough_patches")


def build_initial_condition(name: str, grid: Grid, rng: np.random.Generator) -> Field:
    if name == "random_smooth":
        return random_smooth_field(grid, rng)
    if name == "random_nonnegative":
        return random_nonnegative_field(grid, rng)
    if name == "shifted_bump":
        return shifted_bump(grid)
    if name == "rough_patches":
        return rough_patches(grid, rng)
    if name == "single_mode":
        return single_mode(grid, (1,) + (0,) * (grid.dim - 1))
    raise ConfigurationError(
        f"unknown initial_condition {name!r}; valid: {', '.join(INITIAL_CONDITIONS)}"
    )
