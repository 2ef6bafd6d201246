"""
Lab-frame side of the coherent-state machinery: initial wave packets, the
full semiclassical solver

    i eps psi_t + eps^2/2 Lap psi = V psi + lam eps^alpha psi log(delta + |psi|^2),

the exact single-packet envelope in the moving frame y = (x - q(t)) / sqrt(eps),
and assembly of the approximate solutions

    psi_app(t, x) = eps^(-d/4) u(t, (x - q(t)) / sqrt(eps)) exp(i (S + p.(x - q)) / eps) exp(i theta(t)),

with theta = lam (d/2) t eps^(alpha-1) log(eps) in the nonlinear mode and 0 in the linear one.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Protocol

import numpy as np
from scipy import fft as sfft

from classical import Trajectory, integrate_flow
from core import SPECTRAL_NORM, Grid, WaveField, boundary_mass, l2_distance, l2_norm, make_grid, sample_function
from envelope import DELTA_SCALE, EnvelopeProblem, SplitRun, SplitStepper, evolve_envelope, log_density, run_split_step
from errors import DomainError, FrameError, PhysicalConstraintError, ResolutionError
from gaussian import GaussianState
from potentials import PotentialSpec

logger = logging.getLogger(__name__)

OSCILLATION_POINTS = 8
ENVELOPE_POINTS = 4
COVERAGE_WIDTHS = 12.0
INTERPOLATION_BOUNDARY_LIMIT = 1e-12
LAB_BOUNDARY_LIMIT = 1e-8


def default_flow_dt(eps: float) -> float:
    """Phases carry S/eps, so the flow step shrinks for small eps."""
    return 1e-5 if eps <= 1e-2 else 1e-4


@dataclass(frozen=True)
class GaussianProfile:
    """u0(y) = b0 exp(-1/2 sum_j a0_j y_j^2)."""
    a0: tuple[complex, ...]
    b0: complex
    kind: str = "gaussian"

    @property
    def dims(self) -> int:
        return len(self.a0)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(1.0 / np.sqrt(a.real) for a in self.a0)

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        exponent = sum(a * y ** 2 for a, y in zip(self.a0, coords, strict=True))
        return self.b0 * np.exp(-0.5 * exponent)


@dataclass(frozen=True)
class SechProfile:
    """u0(y) = b0 prod_j sech(y_j / w_j); smooth, exponentially decaying, not Gaussian."""
    width: tuple[float, ...]
    b0: complex
    kind: str = "sech"

    @property
    def dims(self) -> int:
        return len(self.width)

    @property
    def widths(self) -> tuple[float, ...]:
        return self.width

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        value = self.b0
        for w, y in zip(self.width, coords, strict=True):
            value = value / np.cosh(y / w)
        return value


Profile = GaussianProfile | SechProfile


def gausson(lam: float, dims: int = 1) -> GaussianProfile:
    """Stationary profile exp((1+d)/2) exp(lam |y|^2) of the focusing equation (lam < 0)."""
    if lam >= 0:
        raise PhysicalConstraintError(f"The Gausson exists for lam < 0, got {lam}")
    return GaussianProfile(a0=(complex(-2.0 * lam),) * dims, b0=complex(np.exp((1 + dims) / 2)))


@dataclass(frozen=True)
class Packet:
    profile: Profile
    q0: tuple[float, ...]
    p0: tuple[float, ...]

    @property
    def dims(self) -> int:
        return len(self.q0)


def _packet_values(packet: Packet, eps: float, mesh: Sequence[np.ndarray]) -> np.ndarray:
    d = packet.dims
    y = [(x - q) / np.sqrt(eps) for x, q in zip(mesh, packet.q0)]
    phase = sum(p * (x - q) for x, q, p in zip(mesh, packet.q0, packet.p0)) / eps
    return eps ** (-d / 4) * packet.profile(*y) * np.exp(1j * phase)


def required_counts(grid_bounds: Sequence[Sequence[float]], eps: float, p_max: float) -> tuple[int, ...]:
    """Smallest power-of-two counts with dx <= eps/(8 p_max) and dx <= sqrt(eps)/4."""
    limit = np.sqrt(eps) / ENVELOPE_POINTS
    if p_max > 0:
        limit = min(limit, eps / (OSCILLATION_POINTS * p_max))
    counts = []
    for lower, upper in grid_bounds:
        n = 8
        while (upper - lower) / n > limit:
            n *= 2
        counts.append(n)
    return tuple(counts)


def check_resolution(grid: Grid, eps: float, p_max: float) -> None:
    limit = np.sqrt(eps) / ENVELOPE_POINTS
    if p_max > 0:
        limit = min(limit, eps / (OSCILLATION_POINTS * p_max))
    coarse = [dx for dx in grid.spacing if dx > limit * (1 + 1e-12)]
    if coarse:
        suggested = required_counts(list(zip(grid.lower, grid.upper)), eps, p_max)
        raise ResolutionError(
            f"Grid spacing {grid.spacing} exceeds {limit:.3g} at eps={eps:g}, p_max={p_max:g}; use counts {suggested}"
        )


def lab_grid(bounds: Sequence[Sequence[float]], eps: float, p_max: float, counts: Sequence[int] | None = None) -> Grid:
    """Lab grid on the given box, sized automatically when counts are not given."""
    if len(bounds) == 2 and all(np.isscalar(b) for b in bounds):
        bounds = [bounds]
    grid = make_grid(bounds, counts if counts is not None else required_counts(bounds, eps, p_max))
    check_resolution(grid, eps, p_max)
    return grid


def coherent_init(packets: Sequence[Packet], eps: float, grid: Grid) -> WaveField:
    """psi0(x) = sum over packets of eps^(-d/4) u0((x - q0)/sqrt(eps)) exp(i p0.(x - q0)/eps)."""
    if not packets:
        raise PhysicalConstraintError("At least one packet is required")
    if not 0 < eps <= 1:
        raise PhysicalConstraintError(f"eps must lie in (0, 1], got {eps}")
    for packet in packets:
        if packet.dims != grid.dims:
            raise PhysicalConstraintError(f"Packet has d={packet.dims}, grid has d={grid.dims}")
    check_resolution(grid, eps, max(float(np.max(np.abs(p.p0))) for p in packets))
    psi0 = sample_function(grid, lambda *mesh: sum(_packet_values(packet, eps, mesh) for packet in packets))
    logger.debug(f"Coherent initial data with {len(packets)} packet(s) at eps={eps:g} on {grid.describe()}")
    return psi0


@dataclass(frozen=True, eq=False)
class SemiclassicalProblem:
    eps: float
    lam: float
    potential: PotentialSpec
    packets: tuple[Packet, ...]
    T: float
    dt: float
    grid: Grid | None = None
    alpha: float = 1.0
    delta: float | None = None
    flow_dt: float | None = None
    output_times: tuple[float, ...] = field(default=())
    flows: tuple[Trajectory, ...] | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise PhysicalConstraintError(f"eps must lie in (0, 1], got {self.eps}")
        if self.alpha < 1:
            raise PhysicalConstraintError(f"alpha must be >= 1, got {self.alpha}")
        if not self.packets:
            raise PhysicalConstraintError("At least one packet is required")
        if not (self.T > 0 and self.dt > 0):
            raise PhysicalConstraintError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")
        if self.delta is not None and self.delta < 0:
            raise PhysicalConstraintError(f"delta must be >= 0, got {self.delta}")
        if any(p.dims != self.potential.dims for p in self.packets) or (
            self.grid is not None and self.grid.dims != self.potential.dims
        ):
            raise PhysicalConstraintError("Packets, grid and potential disagree on the dimension")
        object.__setattr__(self, "packets", tuple(self.packets))
        times = tuple(sorted(set(float(t) for t in self.output_times))) or (float(self.T),)
        if times[0] < 0 or times[-1] > self.T * (1 + 1e-12):
            raise PhysicalConstraintError(f"Output times must lie in [0, {self.T}]")
        object.__setattr__(self, "output_times", times)

    @property
    def dims(self) -> int:
        return self.potential.dims

    @property
    def coupling(self) -> float:
        """Nonlinear coefficient lam * eps^(alpha - 1) of the factored equation."""
        return float(self.lam * self.eps ** (self.alpha - 1.0))

    @property
    def gauge_rate(self) -> float:
        """d theta / dt for the amplitude gauge of the eps^(-d/4) scaling."""
        return 0.5 * self.dims * self.coupling * np.log(self.eps)

    @cached_property
    def trajectories(self) -> tuple[Trajectory, ...]:
        """Classical paths of the packets; precomputed `flows` are used when given."""
        if self.flows is not None:
            if len(self.flows) != len(self.packets) or any(f.horizon < self.T * (1 - 1e-12) for f in self.flows):
                raise PhysicalConstraintError("Precomputed flows do not match the packets or the horizon")
            return tuple(self.flows)
        flow_dt = self.flow_dt or default_flow_dt(self.eps)
        return tuple(
            integrate_flow(self.potential, packet.q0, packet.p0, self.T, min(flow_dt, self.T))
            for packet in self.packets
        )

    @property
    def p_max(self) -> float:
        return max(float(np.max(np.abs(traj.p))) for traj in self.trajectories)

    def check_grid(self) -> None:
        """Resolution of the e^(ip.x/eps) oscillations and of the sqrt(eps) scale, and coverage of every packet path."""
        if self.grid is None:
            raise PhysicalConstraintError("The lab-frame solver needs a grid")
        check_resolution(self.grid, self.eps, self.p_max)
        for packet, traj in zip(self.packets, self.trajectories):
            reach = COVERAGE_WIDTHS * np.sqrt(self.eps) * np.asarray(packet.profile.widths)
            low, high = traj.q.min(axis=0) - reach, traj.q.max(axis=0) + reach
            if np.any(low < np.asarray(self.grid.lower)) or np.any(high > np.asarray(self.grid.upper)):
                raise DomainError(
                    f"Packet path needs the box [{low}, {high}] at eps={self.eps:g}; grid is {self.grid.describe()}"
                )

    @cached_property
    def resolved_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        psi0 = coherent_init(self.packets, self.eps, self.grid)
        return DELTA_SCALE * float(np.max(np.abs(psi0.values)) ** 2)


@dataclass(frozen=True, eq=False)
class LabRun(SplitRun):
    energy_drift: float = 0.0


def energy_functional(psi: WaveField, potential: PotentialSpec, eps: float, lam: float, alpha: float = 1.0,
                      delta: float = 0.0) -> float:
    """1/2 ||eps grad psi||^2 + int V |psi|^2 + lam eps^alpha int |psi|^2 log(delta + |psi|^2)."""
    grid = psi.grid
    density = np.abs(psi.values) ** 2
    coefficients = sfft.fftn(psi.values, norm=SPECTRAL_NORM)
    kinetic = 0.5 * eps ** 2 * float(np.sum(grid.frequencies.k_squared() * np.abs(coefficients) ** 2))
    external = float(np.sum(potential.on_mesh(grid.mesh()) * density))
    nonlinear = lam * eps ** alpha * float(np.sum(density * log_density(psi.values, delta)))
    return (kinetic + external + nonlinear) * grid.cell_volume


def evolve_logNLS(problem: SemiclassicalProblem) -> LabRun:
    """
    Strang split-step in x: kinetic multiplier exp(-i eps dt |k|^2 / 2), pointwise
    phase exp(-i dt/2 (V/eps + lam eps^(alpha-1) log(delta + |psi|^2))).

    Raises:
        ResolutionError, DomainError: grid invariants fail
        MassDriftError: relative mass drift above 1e-6
        BoundaryMassError: boundary mass above 1e-8
    """
    problem.check_grid()
    psi0 = coherent_init(problem.packets, problem.eps, problem.grid)
    scaled_potential = problem.potential.on_mesh(problem.grid.mesh()) / problem.eps
    stepper = SplitStepper(
        problem.grid,
        lambda t: scaled_potential,
        problem.coupling,
        problem.resolved_delta,
        problem.dt,
        kinetic_scale=problem.eps,
    )
    run = run_split_step(
        stepper,
        psi0,
        problem.output_times,
        boundary_limit=LAB_BOUNDARY_LIMIT,
        label=f"Lab (eps={problem.eps:g})",
    )
    energy0 = energy_functional(psi0, problem.potential, problem.eps, problem.lam, problem.alpha, stepper.delta)
    energies = [
        energy_functional(f, problem.potential, problem.eps, problem.lam, problem.alpha, stepper.delta)
        for f in run.fields
    ]
    drift = max(abs(e - energy0) for e in energies) / max(abs(energy0), 1e-300)
    return LabRun(run.times, run.fields, run.mass_drift, run.delta, run.dt, energy_drift=drift)


def lab_gauge_residual(problem: SemiclassicalProblem, k: complex = 2.0) -> float:
    """
    ||Psi_k(T) - k psi(T) exp(-i c T log|k|^2)|| / ||k psi0|| where Psi_k starts
    from the packets with amplitude k b0 and runs with delta |k|^2.
    """
    if k == 0:
        raise PhysicalConstraintError("Gauge factor k must be nonzero")
    T = problem.output_times[-1]
    base = replace(problem, output_times=(T,), delta=problem.resolved_delta, flows=problem.trajectories)
    packets = tuple(replace(p, profile=replace(p.profile, b0=p.profile.b0 * k)) for p in base.packets)
    scaled = replace(base, packets=packets, delta=base.delta * abs(k) ** 2)
    reference = evolve_logNLS(base).final
    result = evolve_logNLS(scaled).final
    expected = reference * (k * np.exp(-1j * problem.coupling * T * np.log(abs(k) ** 2)))
    return l2_distance(result, expected) / l2_norm(coherent_init(packets, problem.eps, problem.grid))


def axis_potential(potential: PotentialSpec, axis: int) -> PotentialSpec:
    return PotentialSpec(potential.kind, (potential.stiffness[axis],), (potential.cosine[axis],))


def axis_profile(profile: Profile, axis: int) -> Profile:
    """One factor of a product profile; the amplitude goes with axis 0."""
    amplitude = profile.b0 if axis == 0 else 1.0
    if isinstance(profile, GaussianProfile):
        return GaussianProfile(a0=(profile.a0[axis],), b0=amplitude)
    if isinstance(profile, SechProfile):
        return SechProfile(width=(profile.width[axis],), b0=amplitude)
    raise PhysicalConstraintError(f"Profile {profile!r} is not separable")


def axis_flow(trajectory: Trajectory, axis: int) -> Trajectory:
    return Trajectory(
        axis_potential(trajectory.potential, axis), trajectory.dt, trajectory.times,
        trajectory.q[:, axis:axis + 1].copy(), trajectory.p[:, axis:axis + 1].copy(), trajectory.S.copy(),
    )


def lab_tensorization_residual(problem: SemiclassicalProblem) -> float:
    """
    ||psi_2d(T) - psi_1(T) (x) psi_2(T)|| / ||psi_2d(T)|| in the lab frame, for
    one product packet in a separable potential; delta = 0 so the logarithm splits.
    """
    grid = problem.grid
    if grid is None or grid.dims != 2 or len(problem.packets) != 1:
        raise PhysicalConstraintError("Tensorization is checked for one packet on a two-dimensional lab grid")
    packet, trajectory = problem.packets[0], problem.trajectories[0]
    T = problem.output_times[-1]
    full = evolve_logNLS(replace(problem, delta=0.0, output_times=(T,), flows=(trajectory,))).final

    factors = []
    for axis in range(2):
        axis_problem = replace(
            problem,
            potential=axis_potential(problem.potential, axis),
            packets=(Packet(axis_profile(packet.profile, axis), (packet.q0[axis],), (packet.p0[axis],)),),
            grid=make_grid([(grid.lower[axis], grid.upper[axis])], [grid.counts[axis]]),
            delta=0.0,
            output_times=(T,),
            flows=(axis_flow(trajectory, axis),),
        )
        factors.append(evolve_logNLS(axis_problem).final.values)

    product = np.multiply.outer(factors[0], factors[1])
    return l2_distance(full, full.with_values(product)) / l2_norm(full)


def evolve_exact_envelope(problem: SemiclassicalProblem, y_grid: Grid) -> SplitRun:
    """
    Exact envelope u^eps in the frame of the single packet:
        i u_t + 1/2 Lap u = V^eps(t, y) u + lam eps^(alpha-1) u log(delta + |u|^2).
    The psi^eps it represents is recovered with the same frame formula as psi_app.
    """
    if len(problem.packets) != 1:
        raise FrameError(f"The moving frame needs exactly one packet, got {len(problem.packets)}")
    packet = problem.packets[0]
    u0 = sample_function(y_grid, packet.profile)
    envelope = EnvelopeProblem(
        u0=u0,
        trajectory=problem.trajectories[0],
        lam=problem.lam,
        T=problem.T,
        dt=problem.dt,
        mode="exact",
        eps=problem.eps,
        alpha=problem.alpha,
        # delta is given for psi; |psi|^2 = eps^(-d/2) |u|^2
        delta=None if problem.delta is None else problem.delta * problem.eps ** (problem.dims / 2),
        output_times=problem.output_times,
    )
    return evolve_envelope(envelope)


class EnvelopeSource(Protocol):
    def on_axes(self, t: float, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Envelope values on the tensor grid spanned by the per-axis y coordinates."""


@dataclass(frozen=True, eq=False)
class ClosureEnvelope:
    state: GaussianState

    def on_axes(self, t: float, axes: Sequence[np.ndarray]) -> np.ndarray:
        a, b = self.state.coefficients_at(t)
        mesh = np.meshgrid(*axes, indexing="ij")
        return b * np.exp(-0.5 * sum(a_j * y ** 2 for a_j, y in zip(a, mesh)))


@dataclass(frozen=True, eq=False)
class SampledEnvelope:
    """
    Envelope from stored PDE snapshots, evaluated off-grid by trigonometric
    interpolation along each axis. Points outside the y box get 0, which is
    only allowed while the snapshot has negligible mass near its boundary.
    """
    run: SplitRun

    def on_axes(self, t: float, axes: Sequence[np.ndarray]) -> np.ndarray:
        snapshot = self.run.field_at(t)
        grid = snapshot.grid
        edge = boundary_mass(snapshot)
        if edge > INTERPOLATION_BOUNDARY_LIMIT:
            raise DomainError(f"Envelope at t={t:g} has boundary mass {edge:.2e}; it cannot be extended by zero")

        coefficients = sfft.fftn(snapshot.values, norm="forward")
        inside = []
        for axis, (y, lower, upper, k) in enumerate(zip(axes, grid.lower, grid.upper, grid.frequencies.wavenumbers)):
            y = np.asarray(y, dtype=float)
            mask = (y >= lower) & (y < upper)
            inside.append(mask)
            basis = np.exp(1j * np.outer(y[mask] - lower, k))
            coefficients = np.moveaxis(np.tensordot(basis, np.moveaxis(coefficients, axis, 0), axes=(1, 0)), 0, axis)

        values = np.zeros(tuple(len(y) for y in axes), dtype=np.complex128)
        values[np.ix_(*inside)] = coefficients
        return values


def assemble_approx(
    trajectory: Trajectory,
    source: EnvelopeSource,
    eps: float,
    grid: Grid,
    times: Sequence[float],
    lam: float = 0.0,
    alpha: float = 1.0,
    mode: str = "critical",
) -> list[WaveField]:
    """
    psi_app on the lab grid at each requested time. `mode` is "linear" (phase
    S + p.(x - q)) or "critical" (adds the gauge factor exp(i lam (d/2) t eps^(alpha-1) log eps)).
    """
    if mode not in ("linear", "critical"):
        raise PhysicalConstraintError(f"Unknown approximation mode '{mode}'")
    if grid.dims != trajectory.dims:
        raise PhysicalConstraintError(f"Grid has d={grid.dims}, trajectory has d={trajectory.dims}")
    d = grid.dims
    root_eps = np.sqrt(eps)
    gauge_rate = 0.5 * d * lam * eps ** (alpha - 1.0) * np.log(eps) if mode == "critical" else 0.0

    fields = []
    for t in times:
        q, p, S = trajectory.state_at(t)
        axes_y = [(x - q_j) / root_eps for x, q_j in zip(grid.axes, q)]
        envelope = source.on_axes(t, axes_y)
        phase = np.full(grid.shape, S / eps + gauge_rate * t)
        for j, (x, q_j, p_j) in enumerate(zip(grid.axes, q, p)):
            shape = [1] * d
            shape[j] = -1
            phase = phase + (p_j * (x - q_j) / eps).reshape(shape)
        fields.append(WaveField(grid, eps ** (-d / 4) * envelope * np.exp(1j * phase)))
    return fields
