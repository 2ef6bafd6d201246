"""
Split-step spectral solver for the envelope family

    i u_t + 1/2 Lap u = W(t, y) u + c u log(delta + |u|^2),

where W is either the quadratic part 1/2 <y, Hess V(q(t)) y> or the exact
rescaled potential V^eps(t, y), and c = lam * eps^(alpha - 1) (c = lam at alpha = 1).

One Strang step is: pointwise phase with W(t) for dt/2, the exact free
propagator exp(-i dt |k|^2 / 2) in frequency space, pointwise phase with
W(t + dt) for dt/2. Both phase substeps are exact since they keep |u| fixed.
"""
import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from classical import Trajectory
from core import SPECTRAL_NORM, Grid, WaveField, boundary_mass, l2_distance, l2_norm, spectral_tail
from errors import (
    BoundaryMassError,
    DomainError,
    FitError,
    MassDriftError,
    NonFiniteError,
    PhysicalConstraintError,
    ResolutionError,
)
from potentials import veps_eval

logger = logging.getLogger(__name__)

MODES = ("quadratic", "exact")
DELTA_SCALE = 1e-14
INITIAL_BOUNDARY_LIMIT = 1e-12
BOUNDARY_LIMIT = 1e-8
SPECTRAL_TAIL_LIMIT = 1e-10
MASS_DRIFT_LIMIT = 1e-6


def log_density(values: np.ndarray, delta: float) -> np.ndarray:
    """log(delta + |u|^2), set to 0 where the argument vanishes (z log|z|^2 -> 0 at z = 0)."""
    argument = delta + np.abs(values) ** 2
    with np.errstate(divide="ignore"):
        return np.where(argument > 0, np.log(np.where(argument > 0, argument, 1.0)), 0.0)


@dataclass(frozen=True, eq=False)
class EnvelopeProblem:
    u0: WaveField
    trajectory: Trajectory
    lam: float
    T: float
    dt: float
    mode: str = "quadratic"
    eps: float | None = None
    alpha: float = 1.0
    delta: float | None = None
    output_times: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.mode not in MODES:
            raise PhysicalConstraintError(f"Unknown envelope mode '{self.mode}'")
        if not (self.T > 0 and self.dt > 0):
            raise PhysicalConstraintError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        if self.delta is not None and self.delta < 0:
            raise PhysicalConstraintError(f"delta must be >= 0, got {self.delta}")
        needs_eps = self.mode == "exact" or self.alpha != 1.0
        if needs_eps and (self.eps is None or not 0 < self.eps <= 1):
            raise PhysicalConstraintError(f"eps must lie in (0, 1] for this problem, got {self.eps}")
        if self.alpha < 1:
            raise PhysicalConstraintError(f"alpha must be >= 1, got {self.alpha}")
        if self.u0.grid.dims != self.trajectory.dims:
            raise PhysicalConstraintError(f"Envelope grid has d={self.u0.grid.dims}, trajectory has d={self.trajectory.dims}")
        if self.T > self.trajectory.horizon * (1 + 1e-12):
            raise PhysicalConstraintError(f"Horizon T={self.T} exceeds the trajectory horizon {self.trajectory.horizon}")
        times = tuple(sorted(set(float(t) for t in self.output_times))) or (float(self.T),)
        if times[0] < 0 or times[-1] > self.T * (1 + 1e-12):
            raise PhysicalConstraintError(f"Output times must lie in [0, {self.T}]")
        object.__setattr__(self, "output_times", times)

    @property
    def grid(self):
        return self.u0.grid

    @property
    def coupling(self) -> float:
        if self.alpha == 1.0:
            return float(self.lam)
        return float(self.lam * self.eps ** (self.alpha - 1.0))

    @cached_property
    def resolved_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        return DELTA_SCALE * float(np.max(np.abs(self.u0.values)) ** 2)

    @cached_property
    def coordinates(self) -> np.ndarray:
        return np.stack(self.grid.mesh())

    def potential_at(self, t: float) -> np.ndarray:
        """W(t, y) on the grid."""
        potential = self.trajectory.potential
        if self.mode == "quadratic":
            curvature = self.trajectory.curvature_at(t).reshape((self.grid.dims,) + (1,) * self.grid.dims)
            return 0.5 * np.sum(curvature * self.coordinates ** 2, axis=0)
        q, _, _ = self.trajectory.state_at(t)
        return veps_eval(potential, q, self.eps, self.coordinates)


class SplitStepper:
    """
    Strang stepper for i u_t = -kinetic_scale/2 Lap u + W(t) u + c u log(delta + |u|^2).

    W(t) is cached so the second half-step of one step and the first
    half-step of the next evaluate it once.
    """

    def __init__(
        self,
        grid: Grid,
        potential: Callable[[float], np.ndarray],
        coupling: float,
        delta: float,
        dt: float,
        kinetic_scale: float = 1.0,
    ):
        self.grid = grid
        self.coupling = coupling
        self.delta = delta
        self.dt = dt
        self._potential_fn = potential
        self._kinetic = 0.5 * kinetic_scale * grid.frequencies.k_squared()
        self._cached_time: float | None = None
        self._cached_potential: np.ndarray | None = None

    def potential(self, t: float) -> np.ndarray:
        if self._cached_time != t:
            self._cached_time, self._cached_potential = t, self._potential_fn(t)
        return self._cached_potential

    def propagator(self, h: float) -> np.ndarray:
        return np.exp(-1j * h * self._kinetic)

    def half_phase(self, values: np.ndarray, t: float, h: float) -> np.ndarray:
        rate = self.potential(t) + self.coupling * log_density(values, self.delta)
        return values * np.exp(-0.5j * h * rate)

    def step(self, values: np.ndarray, t: float, h: float, t_next: float | None = None,
             propagator: np.ndarray | None = None) -> np.ndarray:
        if propagator is None:
            propagator = self.propagator(h)
        # first half step sees W(t), the second W(t + h); see DESIGN.md "Time-dependent W"
        values = self.half_phase(values, t, h)
        values = sfft.ifftn(sfft.fftn(values, norm=SPECTRAL_NORM) * propagator, norm=SPECTRAL_NORM)
        return self.half_phase(values, t + h if t_next is None else t_next, h)

    def advance(self, values: np.ndarray, start: float, stop: float) -> tuple[np.ndarray, float]:
        """Equal steps of size <= dt from start to stop; returns the values and the step used."""
        span = stop - start
        if span <= 0:
            return values, 0.0
        steps = max(1, int(np.ceil(span / self.dt * (1.0 - 1e-12))))
        h = span / steps
        clock = start + h * np.arange(steps + 1)
        clock[-1] = stop
        propagator = self.propagator(h)
        for n in range(steps):
            values = self.step(values, clock[n], h, clock[n + 1], propagator)
        return values, h


def envelope_stepper(problem: EnvelopeProblem) -> SplitStepper:
    return SplitStepper(problem.grid, problem.potential_at, problem.coupling, problem.resolved_delta, problem.dt)


def strang_step(u: WaveField, problem: EnvelopeProblem, t: float, dt: float) -> WaveField:
    return u.with_values(envelope_stepper(problem).step(u.values, t, dt))


@dataclass(frozen=True, eq=False)
class SplitRun:
    times: tuple[float, ...]
    fields: tuple[WaveField, ...]
    mass_drift: float
    delta: float
    dt: float

    def field_at(self, t: float) -> WaveField:
        index = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[index] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"No output stored at t={t}")
        return self.fields[index]

    @property
    def final(self) -> WaveField:
        return self.fields[-1]


def run_split_step(
    stepper: SplitStepper,
    u0: WaveField,
    output_times: tuple[float, ...],
    initial_boundary_limit: float = INITIAL_BOUNDARY_LIMIT,
    boundary_limit: float = BOUNDARY_LIMIT,
    label: str = "Envelope",
) -> SplitRun:
    """
    Evolve u0 and keep snapshots at output_times, checking mass and boundary
    mass at every output.

    Raises:
        DomainError: u0 carries boundary mass above initial_boundary_limit
        ResolutionError: u0 has spectral tail above 1e-10
        MassDriftError: relative mass drift above 1e-6
        BoundaryMassError: mass reached the boundary layer during the run
        NonFiniteError: the field blew up
    """
    initial_boundary = boundary_mass(u0)
    if initial_boundary > initial_boundary_limit:
        raise DomainError(f"{label}: initial data has boundary mass {initial_boundary:.2e}; enlarge the box")
    tail = spectral_tail(u0)
    if tail > SPECTRAL_TAIL_LIMIT:
        raise ResolutionError(f"{label}: initial data has spectral tail {tail:.2e}; refine the grid")

    mass0 = l2_norm(u0)
    values, clock, drift, step_used = u0.values, 0.0, 0.0, 0.0
    fields = []
    for t_out in output_times:
        values, h = stepper.advance(values, clock, t_out)
        step_used = max(step_used, h)
        clock = t_out
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"{label}: field became non-finite before t={t_out:g} (delta={stepper.delta:g})")
        snapshot = u0.with_values(values)
        if mass0 > 0:
            drift = max(drift, abs(l2_norm(snapshot) - mass0) / mass0)
        if drift > MASS_DRIFT_LIMIT:
            raise MassDriftError(f"{label}: relative mass drift {drift:.2e} at t={t_out:g}; the grid does not resolve the solution")
        edge = boundary_mass(snapshot)
        if edge > boundary_limit:
            raise BoundaryMassError(f"{label}: boundary mass {edge:.2e} at t={t_out:g}; the box is too small")
        logger.debug(f"{label} t={t_out:g}: mass drift {drift:.2e}, boundary mass {edge:.2e}")
        fields.append(snapshot)

    logger.info(f"{label} run on {u0.grid.describe()} to T={output_times[-1]:g}: mass drift {drift:.2e}")
    return SplitRun(tuple(output_times), tuple(fields), drift, stepper.delta, step_used or stepper.dt)


def evolve_envelope(problem: EnvelopeProblem) -> SplitRun:
    """Strang evolution with outputs landing exactly on problem.output_times."""
    return run_split_step(envelope_stepper(problem), problem.u0, problem.output_times, label=f"Envelope ({problem.mode})")


def gauge_scaling_check(problem: EnvelopeProblem, k: complex) -> float:
    """
    ||evolve(k u0)(T) - k evolve(u0)(T) exp(-i c T log|k|^2)|| / ||k u0||.

    The scaled run uses delta |k|^2 so the regularized equation is itself
    gauge covariant; the residual measures the scheme only.
    """
    if k == 0:
        raise PhysicalConstraintError("Gauge factor k must be nonzero")
    T = problem.output_times[-1]
    base = replace(problem, output_times=(T,), delta=problem.resolved_delta)
    scaled = replace(base, u0=base.u0 * k, delta=base.resolved_delta * abs(k) ** 2)
    reference = evolve_envelope(base).final
    result = evolve_envelope(scaled).final
    expected = reference * (k * np.exp(-1j * problem.coupling * T * np.log(abs(k) ** 2)))
    return l2_distance(result, expected) / l2_norm(scaled.u0)


def self_convergence_order(problem: EnvelopeProblem) -> float:
    """Observed order from endpoint differences at dt, dt/2, dt/4."""
    T = problem.output_times[-1]
    finals = [
        evolve_envelope(replace(problem, dt=problem.dt / factor, output_times=(T,))).final
        for factor in (1, 2, 4)
    ]
    coarse, fine = l2_distance(finals[0], finals[1]), l2_distance(finals[1], finals[2])
    if fine == 0.0:
        raise FitError("Self-convergence differences vanished; the problem is integrated exactly")
    return float(np.log2(coarse / fine))
