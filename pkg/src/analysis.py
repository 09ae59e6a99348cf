# src/analysis.py
"""
Discrete function-space norms and the inequality checkers used by the presets.

Seminorms built from differences f(x + h) - f(x) use periodic grid shifts;
balls in the bmo norm are replaced by axis-aligned cubes.
"""
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel
from scipy.integrate import trapezoid

from src.errors import ParameterError
from src.spectral_core import (
    Field,
    Grid,
    fractional_laplacian,
    gradient,
    inner,
    semigroup_step,
)

logger = logging.getLogger(__name__)

# above this resolution the shift sets keep only multiples of N // DENSE_SHIFT_LIMIT cells
DENSE_SHIFT_LIMIT = 128


class NormReport(BaseModel):
    lp: Dict[float, float]
    linf: float
    holder_seminorm: float
    holder_exponent: float
    besov_seminorm_p: float
    sobolev_alpha_energy: float
    bmo: float
    min_value: float
    max_value: float

    def as_row(self) -> dict:
        row = {f"lp_{p:g}": value for p, value in sorted(self.lp.items())}
        row.update(self.model_dump(exclude={"lp", "holder_exponent"}))
        return row


# ---------------------------------------------------------
# Basic norms
# ---------------------------------------------------------
def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    values = np.abs(f.physical().values)
    if math.isinf(p):
        return float(values.max())
    return float((np.sum(values ** p) * f.grid.cell_volume) ** (1.0 / p))


def range_monitor(f: Field) -> Tuple[float, float]:
    values = f.physical().values
    return float(values.min()), float(values.max())


def inner_product(f: Field, g: Field) -> float:
    return inner(f, g)


def wraparound_mass(f: Field, fraction: float = 0.05) -> float:
    """Share of the L^1 mass lying within fraction * L of the box boundary."""
    grid = f.grid
    values = np.abs(f.physical().values)
    total = values.sum()
    if total == 0:
        return 0.0
    width = fraction * grid.box_length
    near = np.zeros(grid.shape, dtype=bool)
    for x in grid.coordinates():
        near |= (x < width) | (x > grid.box_length - width)
    return float(values[near].sum() / total)


# ---------------------------------------------------------
# Shift-set seminorms
# ---------------------------------------------------------
def _shift_set(grid: Grid, max_length: float, include_unit: bool = False) -> List[Tuple[int, ...]]:
    """Half-space of nonzero grid shifts with |h| <= max_length (h and -h give equal terms)."""
    stride = _stride(grid)
    reach = int(max_length / grid.spacing)
    offsets = [j for j in range(-reach, reach + 1) if j % stride == 0 or (include_unit and abs(j) == 1)]
    shifts = []
    if grid.dim == 1:
        return [(j,) for j in offsets if j > 0]
    for j in offsets:
        for k in offsets:
            if j < 0 or (j == 0 and k <= 0):
                continue
            if math.hypot(j, k) * grid.spacing <= max_length + 1e-12:
                shifts.append((j, k))
    return shifts


def _stride(grid: Grid) -> int:
    return max(1, grid.points_per_axis // DENSE_SHIFT_LIMIT)


def _difference(values: np.ndarray, shift: Tuple[int, ...]) -> np.ndarray:
    return np.roll(values, shift=tuple(-s for s in shift), axis=tuple(range(values.ndim))) - values


def holder_seminorm(f: Field, gamma: float) -> float:
    """max over shifts 0 < |h| <= L/4 of ||f(. + h) - f||_inf / |h|^gamma."""
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    grid = f.grid
    values = f.physical().values
    best = 0.0
    for shift in _shift_set(grid, grid.box_length / 4, include_unit=True):
        length = math.hypot(*shift) * grid.spacing
        best = max(best, float(np.max(np.abs(_difference(values, shift)))) / length ** gamma)
    return best


def besov_seminorm(f: Field, s: float, p: float) -> float:
    """(sum_h ||f(. + h) - f||_p^p / |h|^{n + s p} * cell volume)^{1/p} over 0 < |h| <= L/2."""
    if not 0.0 < s * p < 2.0:
        raise ParameterError(f"s * p must lie in (0, 2), got {s * p}")
    grid = f.grid
    values = f.physical().values
    weight = _stride(grid) ** grid.dim
    total = 0.0
    for shift in _shift_set(grid, grid.box_length / 2):
        length = math.hypot(*shift) * grid.spacing
        difference = np.sum(np.abs(_difference(values, shift)) ** p) * grid.cell_volume
        total += 2.0 * weight * difference / length ** (grid.dim + s * p)
    return float((total * grid.cell_volume) ** (1.0 / p))


def sobolev_alpha_energy(f: Field, alpha: float) -> float:
    """<f, Lambda^{2 alpha} f> = V * sum |xi|^{2 alpha} |f_hat|^2."""
    grid = f.grid
    coeffs = f.spectral().values
    weights = grid.spectral_weights() * grid.wavevector_magnitude() ** (2.0 * alpha)
    return float(grid.volume * np.sum(weights * np.abs(coeffs) ** 2))


def dissipation_functional(f: Field, p: float, alpha: float) -> float:
    """int |f|^{p-2} f Lambda^{2 alpha} f dx."""
    values = f.physical().values
    lam = fractional_laplacian(f.physical(), 2.0 * alpha).values
    return float(np.sum(np.abs(values) ** (p - 2) * values * lam) * f.grid.cell_volume)


def viscous_dissipation_functional(f: Field, p: float, epsilon: float) -> float:
    """-p eps int |f|^{p-2} f Delta f dx = p (p - 1) eps int |f|^{p-2} |grad f|^2 dx >= 0."""
    if epsilon == 0:
        return 0.0
    values = f.physical().values
    grad_sq = sum(g.values ** 2 for g in gradient(f))
    return float(p * (p - 1) * epsilon * np.sum(np.abs(values) ** (p - 2) * grad_sq) * f.grid.cell_volume)


def lp_dissipation_rate(f: Field, p: float, alpha: float, epsilon: float = 0.0) -> float:
    """Rate at which ||f||_p^p decays: p int |f|^{p-2} f Lambda f - p eps int |f|^{p-2} f Delta f."""
    return p * dissipation_functional(f, p, alpha) + viscous_dissipation_functional(f, p, epsilon)


def lp_balance_residual(times: Sequence[float], pth_powers: Sequence[float], rates: Sequence[float]) -> np.ndarray:
    """
    ||theta(t)||_p^p + int_0^t rate ds - ||theta_0||_p^p at every sample time,
    time integral by the trapezoid rule.
    """
    times = np.asarray(times, dtype=float)
    rates = np.asarray(rates, dtype=float)
    pth_powers = np.asarray(pth_powers, dtype=float)
    integral = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(times) * (rates[1:] + rates[:-1]))))
    return pth_powers + integral - pth_powers[0]


def integrate_in_time(times: Sequence[float], values: Sequence[float]) -> float:
    return float(trapezoid(np.asarray(values, dtype=float), np.asarray(times, dtype=float)))


# ---------------------------------------------------------
# bmo
# ---------------------------------------------------------
def bmo_branches(f: Field) -> Tuple[float, float]:
    """
    (sup over cubes of volume <= 1 of the mean oscillation,
     sup over cubes of volume > 1 of the mean of |f|).
    Cube sides are 2^m cells; anchors step by half a side.
    """
    grid = f.grid
    values = f.physical().values
    n = grid.points_per_axis
    small, large = 0.0, 0.0
    side = 1
    while side <= n:
        step = max(1, side // 2)
        padded = np.pad(values, [(0, side - 1)] * grid.dim, mode="wrap")
        windows = sliding_window_view(padded, (side,) * grid.dim)
        windows = windows[(slice(0, n, step),) * grid.dim]
        axes = tuple(range(grid.dim, 2 * grid.dim))
        volume = (side * grid.spacing) ** grid.dim
        if volume <= 1.0:
            means = windows.mean(axis=axes, keepdims=True)
            small = max(small, float(np.abs(windows - means).mean(axis=axes).max()))
        else:
            large = max(large, float(np.abs(windows).mean(axis=axes).max()))
        side *= 2
    return small, large


def bmo_norm(f: Field) -> float:
    return max(bmo_branches(f))


# ---------------------------------------------------------
# Reports and inequality checks
# ---------------------------------------------------------
def norm_report(
    f: Field,
    ps: Iterable[float] = (1.0, 2.0, 4.0),
    gamma: float = 0.2,
    alpha: float = 0.25,
    besov_p: float = 4.0,
) -> NormReport:
    lo, hi = range_monitor(f)
    return NormReport(
        lp={float(p): lp_norm(f, p) for p in ps},
        linf=max(abs(lo), abs(hi)),
        holder_seminorm=holder_seminorm(f, gamma),
        holder_exponent=gamma,
        besov_seminorm_p=besov_seminorm(f, 2.0 * alpha / besov_p, besov_p),
        sobolev_alpha_energy=sobolev_alpha_energy(f, alpha),
        bmo=bmo_norm(f),
        min_value=lo,
        max_value=hi,
    )


class ChainValues(BaseModel):
    besov_p: float
    sobolev: float
    dissipation: float
    c_first: float
    c_second: float


class BesovChainReport(BaseModel):
    p: float
    alpha: float
    whole: ChainValues
    positive_part: Optional[ChainValues] = None
    negative_part: Optional[ChainValues] = None
    cross_terms: float = 0.0
    sharp_second_bound: float
    finite: bool
    second_within_sharp: bool


def _ratio(numerator: float, denominator: float) -> float:
    if numerator <= 0:
        return 0.0
    return numerator / denominator if denominator > 0 else math.inf


def _chain_values(f: Field, p: float, alpha: float) -> ChainValues:
    besov = besov_seminorm(f, 2.0 * alpha / p, p) ** p
    power = Field(f.grid, np.abs(f.physical().values) ** (p / 2.0))
    sobolev = sobolev_alpha_energy(power, alpha)
    dissipation = dissipation_functional(f, p, alpha)
    return ChainValues(
        besov_p=besov,
        sobolev=sobolev,
        dissipation=dissipation,
        c_first=_ratio(besov, sobolev),
        c_second=_ratio(sobolev, dissipation),
    )


def check_besov_chain(f: Field, p: float, alpha: float, rtol: float = 1e-8) -> BesovChainReport:
    """
    Evaluate ||f||^p_{B^{2a/p}_{p,p}} <= C ||f^{p/2}||^2_{H^a} <= C' int |f|^{p-2} f Lambda^{2a} f.
    Sign-changing f is split into f+ and f-, each checked on its own; the cross
    terms int f+^{p-1} Lambda f- + int f-^{p-1} Lambda f+ are reported (nonpositive
    for disjoint supports).
    """
    if p < 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    f = f.physical()
    whole = _chain_values(f, p, alpha)
    report = dict(p=p, alpha=alpha, whole=whole, sharp_second_bound=p / 2.0)
    checked = [whole]

    if f.values.min() < 0 < f.values.max():
        plus = Field(f.grid, np.maximum(f.values, 0.0))
        minus = Field(f.grid, np.maximum(-f.values, 0.0))
        report["positive_part"] = _chain_values(plus, p, alpha)
        report["negative_part"] = _chain_values(minus, p, alpha)
        lam_plus = fractional_laplacian(plus, 2.0 * alpha).values
        lam_minus = fractional_laplacian(minus, 2.0 * alpha).values
        cross = np.sum(plus.values ** (p - 1) * lam_minus + minus.values ** (p - 1) * lam_plus)
        report["cross_terms"] = float(cross * f.grid.cell_volume)
        checked = [report["positive_part"], report["negative_part"]]

    report["finite"] = all(math.isfinite(c.c_first) and math.isfinite(c.c_second) for c in checked)
    report["second_within_sharp"] = all(c.c_second <= (p / 2.0) * (1.0 + rtol) for c in checked)
    return BesovChainReport(**report)


def check_distance_power_lemma(samples: Iterable[Tuple[float, float, float]]) -> bool:
    """|a^e - b^e| <= |a - b|^e for a, b > 0 and 0 < e <= 1, on every sample."""
    data = np.asarray(list(samples), dtype=float).reshape(-1, 3)
    if data.size == 0:
        return True
    a, b, e = data[:, 0], data[:, 1], data[:, 2]
    if np.any(a <= 0) or np.any(b <= 0) or np.any(e <= 0) or np.any(e > 1):
        raise ParameterError("samples need a, b > 0 and 0 < eps <= 1")
    lhs = np.abs(a ** e - b ** e)
    rhs = np.abs(a - b) ** e
    slack = 1e-12 * np.maximum(a, b) ** e
    violations = int(np.count_nonzero(lhs > rhs + slack))
    if violations:
        logger.warning(f"distance-power lemma violated on {violations} of {len(a)} samples")
    return violations == 0


def check_semigroup_jensen(f: Field, p: float, alpha: float, tau: float) -> Tuple[float, float, bool]:
    """||e^{-tau Lambda^{2a}} f||_p^p <= ||e^{-tau Lambda^{2a}} f^{p/2}||_2^2 for f >= 0."""
    values = f.physical().values
    if values.min() < -1e-12 * max(1.0, float(np.abs(values).max())):
        raise ParameterError("the semigroup Jensen inequality needs f >= 0")
    values = np.maximum(values, 0.0)
    lhs = lp_norm(semigroup_step(Field(f.grid, values), tau, 2.0 * alpha), p) ** p
    rhs = lp_norm(semigroup_step(Field(f.grid, values ** (p / 2.0)), tau, 2.0 * alpha), 2.0) ** 2
    return lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-10) + 1e-300)
