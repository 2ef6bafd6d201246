"""
Smooth, at-most-quadratic external potentials.

Every built-in kind is separable and has the form
    V(x) = sum_j ( 1/2 * s_j * x_j**2 + c_j * cos(x_j) ),
so the Hessian is diagonal and all derivatives are analytic:
- zero:              s = 0,        c = 0
- harmonic:          s = omega^2,  c = 0   (omega_j may be 0)
- inverted_harmonic: s = -omega^2, c = 0
- cosine:            s = 0,        c = coefficients
- harmonic_cosine:   s = omega^2,  c = coefficients

Coordinates are passed coordinate-first: an array of shape (d, ...) holds one
point per trailing index, so the same code evaluates single points and meshes.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from errors import PhysicalConstraintError

logger = logging.getLogger(__name__)

KINDS = ("zero", "harmonic", "inverted_harmonic", "cosine", "harmonic_cosine")
QUADRATURE_ORDER = 8

_nodes, _weights = roots_legendre(QUADRATURE_ORDER)
# Gauss-Legendre on [0, 1] with the (1 - theta) Taylor kernel folded into the weights
THETA_NODES = 0.5 * (_nodes + 1.0)
TAYLOR_WEIGHTS = 0.5 * _weights * (1.0 - THETA_NODES)


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    stiffness: tuple[float, ...]
    cosine: tuple[float, ...]

    @property
    def dims(self) -> int:
        return len(self.stiffness)

    @property
    def separable(self) -> bool:
        return True

    @property
    def is_quadratic(self) -> bool:
        return not any(self.cosine)

    @property
    def third_derivative_bound(self) -> float:
        """M3 = sup |d^3 V|, summed over axes: 0 for quadratics, sum |c_j| otherwise."""
        return float(sum(abs(c) for c in self.cosine))

    def _per_axis(self, coefficients: tuple[float, ...], x: np.ndarray) -> np.ndarray:
        return np.asarray(coefficients, dtype=float).reshape((self.dims,) + (1,) * (x.ndim - 1))

    def _coords(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[0] != self.dims:
            raise ValueError(f"Expected {self.dims} coordinates, got shape {x.shape}")
        return x

    def value(self, x) -> np.ndarray:
        x = self._coords(x)
        s, c = self._per_axis(self.stiffness, x), self._per_axis(self.cosine, x)
        return np.sum(0.5 * s * x ** 2 + c * np.cos(x), axis=0)

    def gradient(self, x) -> np.ndarray:
        x = self._coords(x)
        s, c = self._per_axis(self.stiffness, x), self._per_axis(self.cosine, x)
        return s * x - c * np.sin(x)

    def curvature(self, x) -> np.ndarray:
        """Diagonal of the Hessian, V_j''(x_j), shape (d, ...)."""
        x = self._coords(x)
        s, c = self._per_axis(self.stiffness, x), self._per_axis(self.cosine, x)
        return s - c * np.cos(x)

    def hessian(self, x) -> np.ndarray:
        return np.diag(self.curvature(self._coords(x).reshape(self.dims)))

    def on_mesh(self, mesh: Sequence[np.ndarray]) -> np.ndarray:
        return self.value(np.stack(mesh))


def _broadcast(values: Sequence[float] | float | None, dims: int, name: str) -> tuple[float, ...]:
    if values is None:
        raise PhysicalConstraintError(f"Potential parameter '{name}' is required")
    values = [float(values)] if np.isscalar(values) else [float(v) for v in values]
    if len(values) == 1:
        values = values * dims
    if len(values) != dims:
        raise PhysicalConstraintError(f"Potential parameter '{name}' has {len(values)} entries for d={dims}")
    if not all(np.isfinite(values)):
        raise PhysicalConstraintError(f"Potential parameter '{name}' is not finite")
    return tuple(values)


def make_potential(kind: str, dims: int = 1, omega=None, coefficients=None) -> PotentialSpec:
    """Build one of the built-in potentials; omega/coefficients broadcast from a single value."""
    zeros = (0.0,) * dims
    if kind == "zero":
        return PotentialSpec(kind, zeros, zeros)
    if kind == "harmonic":
        return PotentialSpec(kind, tuple(w ** 2 for w in _broadcast(omega, dims, "omega")), zeros)
    if kind == "inverted_harmonic":
        return PotentialSpec(kind, tuple(-(w ** 2) for w in _broadcast(omega, dims, "omega")), zeros)
    if kind == "cosine":
        return PotentialSpec(kind, zeros, _broadcast(coefficients, dims, "coefficients"))
    if kind == "harmonic_cosine":
        return PotentialSpec(
            kind,
            tuple(w ** 2 for w in _broadcast(omega, dims, "omega")),
            _broadcast(coefficients, dims, "coefficients"),
        )
    raise PhysicalConstraintError(f"Unknown potential kind '{kind}' (expected one of {', '.join(KINDS)})")


def potential_eval(potential: PotentialSpec, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of V at a single point x."""
    x = np.asarray(x, dtype=float).reshape(potential.dims)
    return float(potential.value(x)), potential.gradient(x), potential.hessian(x)


def veps_eval(potential: PotentialSpec, q, eps: float, y) -> np.ndarray:
    """
    Rescaled potential V^eps(t, y) = int_0^1 (1-theta) <y, Hess V(q + theta*sqrt(eps)*y) y> dtheta.

    Evaluated by Gauss-Legendre quadrature of order 8 instead of the difference
    quotient, which cancels catastrophically for small eps. `y` is a single
    point of shape (d,) or a coordinate-first mesh of shape (d, ...).
    """
    if not eps > 0:
        raise PhysicalConstraintError(f"eps must be positive, got {eps}")
    y = potential._coords(y)
    q = np.asarray(q, dtype=float).reshape((potential.dims,) + (1,) * (y.ndim - 1))
    root_eps = np.sqrt(eps)
    kernel = np.zeros_like(y)
    for theta, weight in zip(THETA_NODES, TAYLOR_WEIGHTS):
        kernel += weight * potential.curvature(q + theta * root_eps * y)
    return np.sum(kernel * y ** 2, axis=0)


def veps_difference_quotient(potential: PotentialSpec, q, eps: float, y) -> np.ndarray:
    """(V(q + sqrt(eps) y) - V(q) - sqrt(eps) y.grad V(q)) / eps; only trustworthy for moderate eps."""
    y = potential._coords(y)
    q = np.asarray(q, dtype=float).reshape((potential.dims,) + (1,) * (y.ndim - 1))
    root_eps = np.sqrt(eps)
    shifted = potential.value(q + root_eps * y)
    linear = np.sum(root_eps * y * potential.gradient(q), axis=0)
    return (shifted - potential.value(q) - linear) / eps


def quadratic_part(potential: PotentialSpec, q, y) -> np.ndarray:
    """1/2 <y, Hess V(q) y>, the eps -> 0 limit of V^eps."""
    y = potential._coords(y)
    q = np.asarray(q, dtype=float).reshape((potential.dims,) + (1,) * (y.ndim - 1))
    return 0.5 * np.sum(potential.curvature(q) * y ** 2, axis=0)
