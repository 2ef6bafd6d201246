"""
Hamiltonian flow q' = p, p' = -grad V(q) with the classical action
S(t) = int_0^t (|p|^2/2 - V(q)) carried as an extra RK4 component.
"""
import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from errors import NonFiniteError, PhysicalConstraintError
from potentials import PotentialSpec

logger = logging.getLogger(__name__)


def uniform_steps(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the uniform step T/n with n = ceil(T/dt), so the last sample is exactly T."""
    if not (np.isfinite(T) and T > 0):
        raise PhysicalConstraintError(f"Horizon T must be positive, got {T}")
    if not (np.isfinite(dt) and 0 < dt <= T):
        raise PhysicalConstraintError(f"Step dt must satisfy 0 < dt <= T, got dt={dt}, T={T}")
    # Absorb round-off in T/dt so exact multiples do not gain an extra step
    steps = max(1, int(np.ceil(T / dt * (1.0 - 1e-12))))
    return steps, T / steps


def energy(potential: PotentialSpec, q, p) -> float:
    p = np.asarray(p, dtype=float)
    return float(0.5 * np.dot(p, p) + potential.value(np.asarray(q, dtype=float).reshape(potential.dims)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of (q, p, S) at uniform times 0, dt, ..., T. q and p have shape (n, d)."""
    potential: PotentialSpec
    dt: float
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    S: np.ndarray

    @property
    def dims(self) -> int:
        return self.q.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @cached_property
    def force(self) -> np.ndarray:
        return -self.potential.gradient(self.q.T).T

    @cached_property
    def lagrangian(self) -> np.ndarray:
        return 0.5 * np.sum(self.p ** 2, axis=1) - self.potential.value(self.q.T)

    @cached_property
    def energy(self) -> np.ndarray:
        return 0.5 * np.sum(self.p ** 2, axis=1) + self.potential.value(self.q.T)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        # Hermite data uses the exact derivatives of every component
        values = np.column_stack([self.q, self.p, self.S])
        slopes = np.column_stack([self.p, self.force, self.lagrangian])
        return CubicHermiteSpline(self.times, values, slopes, axis=0, extrapolate=False)

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """(q, p, S) at time t; sample values are returned exactly, in between by cubic Hermite."""
        if t < -1e-12 * max(1.0, self.horizon) or t > self.horizon * (1 + 1e-12):
            raise PhysicalConstraintError(f"t={t} lies outside the trajectory horizon [0, {self.horizon}]")
        index = int(round(t / self.dt))
        if 0 <= index < len(self.times) and abs(self.times[index] - t) <= 1e-13 * max(1.0, self.horizon):
            return self.q[index].copy(), self.p[index].copy(), float(self.S[index])
        state = self._spline(np.clip(t, 0.0, self.horizon))
        d = self.dims
        return state[:d], state[d:2 * d], float(state[2 * d])

    def curvature_at(self, t: float) -> np.ndarray:
        """V_j''(q_j(t)) per axis."""
        q, _, _ = self.state_at(t)
        return self.potential.curvature(q)

    def phase_space_size(self) -> np.ndarray:
        """|q(t)| + |p(t)| per sample."""
        return np.linalg.norm(self.q, axis=1) + np.linalg.norm(self.p, axis=1)


def integrate_flow(potential: PotentialSpec, q0, p0, T: float, dt: float) -> Trajectory:
    """
    Classic RK4 on the augmented state (q, p, S).

    Raises:
        PhysicalConstraintError: T <= 0 or dt outside (0, T]
        NonFiniteError: the state stopped being finite
    """
    d = potential.dims
    q0 = np.asarray(q0, dtype=float).reshape(d)
    p0 = np.asarray(p0, dtype=float).reshape(d)
    steps, h = uniform_steps(T, dt)

    def rhs(state: np.ndarray) -> np.ndarray:
        q, p = state[:d], state[d:2 * d]
        return np.concatenate([p, -potential.gradient(q), [0.5 * np.dot(p, p) - potential.value(q)]])

    states = np.empty((steps + 1, 2 * d + 1))
    states[0] = np.concatenate([q0, p0, [0.0]])
    for n in range(steps):
        y = states[n]
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        states[n + 1] = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(states[n + 1])):
            raise NonFiniteError(f"Classical state became non-finite at t={(n + 1) * h:g}")

    times = h * np.arange(steps + 1)
    times[-1] = T
    trajectory = Trajectory(potential, h, times, states[:, :d].copy(), states[:, d:2 * d].copy(), states[:, 2 * d].copy())
    logger.debug(f"Integrated flow q0={q0} p0={p0} over T={T} with {steps} steps, energy drift {trajectory.energy_drift:.3e}")
    return trajectory


def crossing_measure(first: Trajectory, second: Trajectory, threshold: float) -> float:
    """
    Measure of {t in [0, T] : |q1(t) - q2(t)| <= threshold}.

    The distance is interpolated linearly inside each step so entry and exit
    times are located instead of counting samples.
    """
    if not threshold > 0:
        raise PhysicalConstraintError(f"Crossing threshold must be positive, got {threshold}")
    if first.times.shape != second.times.shape or not np.allclose(first.times, second.times, rtol=0, atol=1e-12):
        raise PhysicalConstraintError("Trajectories do not share the same time sampling")

    gap = np.linalg.norm(first.q - second.q, axis=1) - threshold
    g0, g1 = gap[:-1], gap[1:]
    steps = np.diff(first.times)

    inside = (g0 <= 0) & (g1 <= 0)
    entering = (g0 > 0) & (g1 <= 0)
    leaving = (g0 <= 0) & (g1 > 0)

    measure = np.sum(steps[inside])
    with np.errstate(divide="ignore", invalid="ignore"):
        root = g0 / (g0 - g1)
    measure += np.sum(steps[entering] * (1.0 - root[entering]))
    measure += np.sum(steps[leaving] * root[leaving])
    return float(measure)


def save_trajectory(trajectory: Trajectory, path: str | Path) -> None:
    """CSV with columns t, q1..qd, p1..pd, S, E."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = trajectory.dims
    header = ["t"] + [f"q{j + 1}" for j in range(d)] + [f"p{j + 1}" for j in range(d)] + ["S", "E"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for n, t in enumerate(trajectory.times):
            row = [t, *trajectory.q[n], *trajectory.p[n], trajectory.S[n], trajectory.energy[n]]
            writer.writerow([repr(float(v)) for v in row])
