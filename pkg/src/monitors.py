# src/monitors.py
"""
Observers for run_forward / run_backward. Each is called with every SolverState,
tracks its invariant on every step, and returns a reading for the diagnostics
stream on every `every`-th step.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from src.analysis import (
    lp_dissipation_rate,
    lp_balance_residual,
    lp_norm,
    range_monitor,
    sobolev_alpha_energy,
    wraparound_mass,
)
from src.evolution import SolverState

logger = logging.getLogger(__name__)


def _column(p: float) -> str:
    return "lp_inf" if math.isinf(p) else f"lp_{p:g}"


class MaximumPrincipleMonitor:
    """||theta(t)||_p must not grow; per-step growth is compared to tol * ||theta_0||_p."""

    def __init__(
        self,
        ps: Sequence[float] = (1.0, 2.0, 4.0, math.inf),
        tol: float = 1e-8,
        every: int = 1,
        alpha: Optional[float] = None,
        epsilon: float = 0.0,
    ):
        self.ps = tuple(ps)
        self.tol = tol
        self.every = every
        self.alpha = alpha
        self.epsilon = epsilon
        self.initial = {}
        self.previous = {}
        self.worst_growth = {p: 0.0 for p in self.ps}
        # L^p balance in p-th power form, tracked for finite p >= 2
        self.balance_ps = [p for p in self.ps if not math.isinf(p) and p >= 2] if alpha is not None else []
        self.times = []
        self.powers = {p: [] for p in self.balance_ps}
        self.rates = {p: [] for p in self.balance_ps}

    def __call__(self, state: SolverState):
        norms = {p: lp_norm(state.theta, p) for p in self.ps}
        if not self.initial:
            self.initial = dict(norms)
        else:
            for p, value in norms.items():
                self.worst_growth[p] = max(self.worst_growth[p], value - self.previous[p])
        self.previous = norms

        if self.balance_ps:
            self.times.append(state.time)
            for p in self.balance_ps:
                self.powers[p].append(norms[p] ** p)
                self.rates[p].append(lp_dissipation_rate(state.theta, p, self.alpha, self.epsilon))

        if state.step_count % self.every == 0:
            return {_column(p): value for p, value in norms.items()}
        return None

    def relative_growth(self, p: float) -> float:
        scale = self.initial.get(p, 0.0)
        return self.worst_growth[p] / scale if scale > 0 else 0.0

    def passed(self, p: float) -> bool:
        return self.relative_growth(p) <= self.tol

    def balance_residual(self, p: float) -> float:
        """Largest |L^p balance residual| relative to ||theta_0||_p^p."""
        if p not in self.powers or len(self.times) < 2:
            return 0.0
        residual = lp_balance_residual(self.times, self.powers[p], self.rates[p])
        scale = self.powers[p][0] or 1.0
        return float(np.max(np.abs(residual)) / scale)


class PositivityMonitor:
    """lower - tol*M <= theta <= upper + tol*M on every step, M = max(|lower|, |upper|)."""

    def __init__(self, lower: float, upper: float, tol: float = 1e-10, every: int = 1):
        self.lower = lower
        self.upper = upper
        self.tol = tol
        self.every = every
        self.scale = max(abs(lower), abs(upper), 1e-300)
        self.worst_min = math.inf
        self.worst_max = -math.inf

    def __call__(self, state: SolverState):
        lo, hi = range_monitor(state.theta)
        self.worst_min = min(self.worst_min, lo)
        self.worst_max = max(self.worst_max, hi)
        if state.step_count % self.every == 0:
            return {"min_value": lo, "max_value": hi}
        return None

    @property
    def passed(self) -> bool:
        slack = self.tol * self.scale
        return self.worst_min >= self.lower - slack and self.worst_max <= self.upper + slack


class EnergyBalanceMonitor:
    """
    (||theta_{n+1}||^2 - ||theta_n||^2)/dt + (D_n + D_{n+1})/2 with
    D = 2 <theta, Lambda^{2 alpha} theta> + 2 eps ||grad theta||^2.
    """

    def __init__(self, alpha: float, epsilon: float = 0.0, every: int = 1):
        self.alpha = alpha
        self.epsilon = epsilon
        self.every = every
        self.previous = None
        self.max_residual = 0.0

    def _energy_and_rate(self, state: SolverState):
        energy = lp_norm(state.theta, 2) ** 2
        rate = 2.0 * sobolev_alpha_energy(state.theta, self.alpha)
        if self.epsilon:
            rate += 2.0 * self.epsilon * sobolev_alpha_energy(state.theta, 1.0)
        return energy, rate

    def __call__(self, state: SolverState):
        energy, rate = self._energy_and_rate(state)
        residual = None
        if self.previous is not None:
            prev_energy, prev_rate = self.previous
            residual = (energy - prev_energy) / state.dt + 0.5 * (rate + prev_rate)
            self.max_residual = max(self.max_residual, abs(residual))
        self.previous = (energy, rate)
        if residual is not None and state.step_count % self.every == 0:
            return {"energy_balance_residual": residual}
        return None


class WraparoundMonitor:
    def __init__(self, fraction: float = 0.05, every: int = 1):
        self.fraction = fraction
        self.every = every
        self.worst = 0.0

    def __call__(self, state: SolverState):
        mass = wraparound_mass(state.theta, self.fraction)
        self.worst = max(self.worst, mass)
        if state.step_count % self.every == 0:
            return {"wraparound_mass": mass}
        return None


class SnapshotRecorder:
    """Keeps theta every `every` steps (and the initial state) for persistence."""

    def __init__(self, every: int = 0, prefix: str = "theta"):
        self.every = every
        self.prefix = prefix
        self.snapshots = {}

    def __call__(self, state: SolverState):
        if state.step_count == 0 or (self.every and state.step_count % self.every == 0):
            self.snapshots[f"{self.prefix}_{state.step_count:06d}"] = state.theta
        return None
