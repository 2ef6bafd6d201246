"""
Gaussian closure of the critical envelope equation

    i u_t + 1/2 Lap u = 1/2 <y, Hess V(q(t)) y> u + lam u log|u|^2

for separable V. With u = b(t) exp(-1/2 sum_j a_j(t) y_j^2) the PDE reduces to
    i a_j' - a_j^2 + V_j''(q_j(t)) - 2 lam Re a_j = 0,
solved through a_j = alpha0_j / tau_j^2 - i tau_j' / tau_j with
    tau'' = alpha0^2 / tau^3 + 2 lam alpha0 / tau - V''(q(t)) tau,  tau(0) = 1, tau'(0) = -beta0,
and b(t) = b0 exp(-i lam t log|b0|^2 - i/2 sum_j A_j - i lam sum_j B_j),
A_j = int_0^t a_j, B_j = int_0^t Im A_j. Mass conservation fixes |b|^2 prod_j tau_j = |b0|^2.
"""
import csv
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from classical import Trajectory, uniform_steps
from core import Grid, WaveField, sample_function
from errors import ClosureError, DomainError, NonFiniteError, PhysicalConstraintError

logger = logging.getLogger(__name__)

TAU_MIN = 1e-8
MODULUS_TOLERANCE = 1e-6
BOUNDARY_AMPLITUDE = 1e-12


@dataclass(frozen=True, eq=False)
class TauPath:
    times: np.ndarray
    tau: np.ndarray
    tau_dot: np.ndarray
    omega: np.ndarray


def integrate_tau(
    alpha0: float,
    beta0: float,
    lam: float,
    omega: Callable[[float], float] | float,
    T: float,
    dt: float,
) -> TauPath:
    """
    RK4 for the width equation on a uniform grid of step T/ceil(T/dt).

    Args:
        omega: V''(q(t)) as a callable of t, or a constant

    Raises:
        ClosureError: tau dropped to TAU_MIN or below
        NonFiniteError: omega returned a non-finite value
    """
    if not alpha0 > 0:
        raise PhysicalConstraintError(f"alpha0 = Re a0 must be positive, got {alpha0}")
    curvature = omega if callable(omega) else (lambda t, value=float(omega): value)
    steps, h = uniform_steps(T, dt)

    def omega_at(t: float) -> float:
        value = float(curvature(t))
        if not np.isfinite(value):
            raise NonFiniteError(f"Curvature V''(q(t)) is not finite at t={t:g}")
        return value

    def rhs(t: float, tau: float, tau_dot: float) -> tuple[float, float]:
        return tau_dot, alpha0 ** 2 / tau ** 3 + 2.0 * lam * alpha0 / tau - omega_at(t) * tau

    times = h * np.arange(steps + 1)
    times[-1] = T
    tau = np.empty(steps + 1)
    tau_dot = np.empty(steps + 1)
    omegas = np.empty(steps + 1)
    tau[0], tau_dot[0], omegas[0] = 1.0, -beta0, omega_at(0.0)

    for n in range(steps):
        t, x, v = times[n], tau[n], tau_dot[n]
        with np.errstate(all="ignore"):
            k1x, k1v = rhs(t, x, v)
            k2x, k2v = rhs(t + h / 2, x + h / 2 * k1x, v + h / 2 * k1v)
            k3x, k3v = rhs(t + h / 2, x + h / 2 * k2x, v + h / 2 * k2v)
            k4x, k4v = rhs(t + h, x + h * k3x, v + h * k3v)
            tau[n + 1] = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            tau_dot[n + 1] = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.isfinite(tau[n + 1]) and np.isfinite(tau_dot[n + 1])) or tau[n + 1] <= TAU_MIN:
            raise ClosureError(f"tau lost positivity at t={times[n + 1]:g} (tau={tau[n + 1]:g}); reduce dt")
        omegas[n + 1] = omega_at(times[n + 1])

    return TauPath(times, tau, tau_dot, omegas)


def gaussian_coeffs(path: TauPath, alpha0: float, beta0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """a = alpha0/tau^2 - i tau'/tau, A = int a and B = int Im A (cumulative Simpson)."""
    a = alpha0 / path.tau ** 2 - 1j * path.tau_dot / path.tau
    # Initial-condition consistency: tau(0)=1, tau'(0)=-beta0 gives a(0) = alpha0 + i beta0 exactly
    a[0] = complex(alpha0, beta0)
    A = _cumulative(a.real, path.times) + 1j * _cumulative(a.imag, path.times)
    B = _cumulative(A.imag, path.times)
    return a, A, B


def _cumulative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if len(times) < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))])
    return cumulative_simpson(values, x=times, initial=0.0)


def gaussian_b(
    b0: complex,
    lam: float,
    A: np.ndarray,
    B: np.ndarray,
    times: np.ndarray,
    tau: np.ndarray | None = None,
) -> np.ndarray:
    """
    Amplitude b(t) from the integrated formula. A and B are (n,) or (n, d);
    multi-d uses the sums over axes. When tau is given, |b| is cross-checked
    against the mass law |b|^2 = |b0|^2 / prod tau_j and overridden if the two
    disagree by more than MODULUS_TOLERANCE.
    """
    if b0 == 0:
        raise ClosureError("Initial amplitude b0 must be nonzero")
    A_sum = A.sum(axis=1) if A.ndim == 2 else A
    B_sum = B.sum(axis=1) if B.ndim == 2 else B
    b = b0 * np.exp(-1j * lam * times * np.log(abs(b0) ** 2) - 0.5j * A_sum - 1j * lam * B_sum)
    b[0] = b0

    if tau is not None:
        tau_prod = tau.prod(axis=1) if tau.ndim == 2 else tau
        modulus = abs(b0) / np.sqrt(tau_prod)
        mismatch = np.max(np.abs(np.abs(b) - modulus) / modulus)
        if mismatch > MODULUS_TOLERANCE:
            logger.warning(f"Amplitude modulus differs from the mass law by {mismatch:.2e}; using the mass law")
            b = modulus * np.exp(1j * np.angle(b))
    return b


def _per_axis(value, dims: int, name: str) -> np.ndarray:
    array = np.atleast_1d(np.asarray(value, dtype=np.complex128))
    if array.size == 1:
        array = np.repeat(array, dims)
    if array.size != dims:
        raise PhysicalConstraintError(f"'{name}' has {array.size} entries for d={dims}")
    return array


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Closure solution sampled on uniform times; per-axis arrays have shape (n, d)."""
    times: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray
    tau: np.ndarray
    tau_dot: np.ndarray
    omega: np.ndarray
    a: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b0: complex
    lam: float
    b: np.ndarray

    @property
    def dims(self) -> int:
        return self.tau.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @cached_property
    def _splines(self) -> tuple[CubicSpline, ...]:
        return (
            CubicSpline(self.times, self.a.real, axis=0),
            CubicSpline(self.times, self.a.imag, axis=0),
            CubicSpline(self.times, self.b.real),
            CubicSpline(self.times, self.b.imag),
        )

    def coefficients_at(self, t: float) -> tuple[np.ndarray, complex]:
        """(a(t), b(t)); exact at sample times, cubic spline in between."""
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise PhysicalConstraintError(f"t={t} lies outside the closure horizon [0, {self.horizon}]")
        index = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[index] - t) <= 1e-13 * max(1.0, self.horizon):
            return self.a[index].copy(), complex(self.b[index])
        a_re, a_im, b_re, b_im = self._splines
        return a_re(t) + 1j * a_im(t), complex(b_re(t), b_im(t))

    def width_energy(self) -> np.ndarray:
        """1/tau^2 + tau^2 + tau'^2 summed over axes, per sample."""
        return np.sum(1.0 / self.tau ** 2 + self.tau ** 2 + self.tau_dot ** 2, axis=1)


def build_closure(
    trajectory: Trajectory,
    a0,
    b0: complex,
    lam: float,
    T: float,
    dt: float = 1e-3,
) -> GaussianState:
    """
    Solve the closure along a classical trajectory for u0 = b0 exp(-1/2 sum a0_j y_j^2).

    Args:
        a0: initial width parameter, one complex value per axis (a single value broadcasts)
    """
    potential = trajectory.potential
    if not potential.separable:
        raise PhysicalConstraintError("Gaussian closure needs a separable potential")
    if T > trajectory.horizon * (1 + 1e-12):
        raise PhysicalConstraintError(f"Closure horizon {T} exceeds trajectory horizon {trajectory.horizon}")
    d = trajectory.dims
    a0 = _per_axis(a0, d, "a0")
    if np.any(a0.real <= 0):
        raise PhysicalConstraintError(f"Re a0 must be positive on every axis, got {a0}")

    paths, coeffs = [], []
    for j in range(d):
        path = integrate_tau(a0[j].real, a0[j].imag, lam, lambda t, j=j: trajectory.curvature_at(t)[j], T, dt)
        paths.append(path)
        coeffs.append(gaussian_coeffs(path, a0[j].real, a0[j].imag))

    times = paths[0].times
    tau = np.column_stack([p.tau for p in paths])
    a = np.column_stack([c[0] for c in coeffs])
    A = np.column_stack([c[1] for c in coeffs])
    B = np.column_stack([c[2] for c in coeffs])
    b = gaussian_b(complex(b0), lam, A, B, times, tau=tau)
    logger.debug(f"Closure over T={T} with d={d}: min tau {tau.min():.4g}, max tau {tau.max():.4g}")
    return GaussianState(
        times=times,
        alpha0=a0.real.copy(),
        beta0=a0.imag.copy(),
        tau=tau,
        tau_dot=np.column_stack([p.tau_dot for p in paths]),
        omega=np.column_stack([p.omega for p in paths]),
        a=a,
        A=A,
        B=B,
        b0=complex(b0),
        lam=float(lam),
        b=b,
    )


def gaussian_profile(a: Sequence[complex], b: complex) -> Callable[..., np.ndarray]:
    """y -> b exp(-1/2 sum_j a_j y_j^2) for use with sample_function."""
    def profile(*coords: np.ndarray) -> np.ndarray:
        exponent = sum(a_j * y ** 2 for a_j, y in zip(a, coords))
        return b * np.exp(-0.5 * exponent)
    return profile


def _boundary_amplitude(field: WaveField) -> float:
    values = np.abs(field.values)
    edge = 0.0
    for axis in range(field.grid.dims):
        edge = max(edge, float(np.max(np.take(values, [0, -1], axis=axis))))
    return edge


def synthesize_envelope(state: GaussianState, t: float, grid: Grid) -> WaveField:
    """Sample u(t, y) on the grid; the Gaussian must have decayed below 1e-12 of its peak at the edges."""
    if grid.dims != state.dims:
        raise PhysicalConstraintError(f"Grid has d={grid.dims}, closure has d={state.dims}")
    a, b = state.coefficients_at(t)
    field = sample_function(grid, gaussian_profile(a, b))
    if _boundary_amplitude(field) > BOUNDARY_AMPLITUDE * abs(b):
        raise DomainError(f"Gaussian envelope at t={t:g} does not fit inside {grid.describe()}")
    return field


def gaussian_l2_moment(state: GaussianState, t: float, beta: Sequence[int]) -> float:
    """||y^beta u(t)||_L2 = |b| prod_j sqrt(Gamma(beta_j + 1/2) / (Re a_j)^(beta_j + 1/2))."""
    beta = np.asarray(beta, dtype=int).reshape(state.dims)
    a, b = state.coefficients_at(t)
    power = beta + 0.5
    return float(abs(b) * np.prod(np.sqrt(gamma_fn(power) / a.real ** power)))


def closure_residual(state: GaussianState) -> float:
    """max_t |i a' - a^2 + V''(q) - 2 lam Re a| with a' from second-order finite differences."""
    a_dot = np.gradient(state.a, state.times, axis=0, edge_order=2)
    residual = 1j * a_dot - state.a ** 2 + state.omega - 2.0 * state.lam * state.a.real
    return float(np.max(np.abs(residual)))


def save_closure(state: GaussianState, path: str | Path) -> None:
    """CSV with columns t, tau_j, tau_dot_j, re_a_j, im_a_j (per axis), re_b, im_b."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = state.dims
    header = ["t"]
    for j in range(1, d + 1):
        header += [f"tau{j}", f"tau_dot{j}", f"re_a{j}", f"im_a{j}"]
    header += ["re_b", "im_b"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for n, t in enumerate(state.times):
            row = [t]
            for j in range(d):
                row += [state.tau[n, j], state.tau_dot[n, j], state.a[n, j].real, state.a[n, j].imag]
            row += [state.b[n].real, state.b[n].imag]
            writer.writerow([repr(float(v)) for v in row])
