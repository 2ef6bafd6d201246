"""
Measurements on fields and sweeps: slope fits in log eps, moment and
derivative norms, the superposition interaction term and growth envelopes.
"""
import logging
from collections.abc import Sequence

import numpy as np
from scipy import fft as sfft
from scipy.stats import linregress

from core import SPECTRAL_NORM, WaveField, edge_mask
from envelope import log_density
from errors import FitError, MomentError, PhysicalConstraintError
from potentials import PotentialSpec, quadratic_part, veps_eval
from records import SlopeFit, SweepRecord

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-9
MIN_FIT_POINTS = 3
MAX_MOMENT_ORDER = 4
# Outer 10% of each axis (5% per side) and the share of the integral it may carry
MOMENT_EDGE_LAYER = 0.05
MOMENT_EDGE_SHARE = 1e-2


def fit_slope(records: Sequence[SweepRecord], t: float | None = None) -> SlopeFit:
    """
    Least squares of log(error) against log(eps) at one measurement time.

    Records below NOISE_FLOOR are dropped; the default time is the latest one present.

    Raises:
        FitError: fewer than 3 usable records
    """
    if not records:
        raise FitError("No records to fit")
    if t is None:
        t = max(record.t for record in records)
    at_time = [r for r in records if abs(r.t - t) <= 1e-12 * max(1.0, abs(t))]
    usable = [r for r in at_time if r.error >= NOISE_FLOOR]
    if len(usable) < MIN_FIT_POINTS:
        raise FitError(
            f"Only {len(usable)} of {len(at_time)} records at t={t:g} are above the noise floor {NOISE_FLOOR:g}"
        )
    eps = np.array([r.eps for r in usable])
    errors = np.array([r.error for r in usable])
    if len(np.unique(eps)) < 2:
        raise FitError("Slope fit needs at least two distinct eps values")
    result = linregress(np.log(eps), np.log(errors))
    return SlopeFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        eps_min=float(eps.min()),
        eps_max=float(eps.max()),
        points=len(usable),
        t=float(t),
        scenario=usable[0].scenario,
        path=usable[0].path,
    )


def _validate_index(beta: Sequence[int], dims: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=int).reshape(-1)
    if beta.size != dims or np.any(beta < 0):
        raise PhysicalConstraintError(f"Multi-index {tuple(beta)} does not fit d={dims}")
    return beta


def moment_norm(field: WaveField, beta: Sequence[int]) -> float:
    """
    ||y^beta f||_L2 by rectangle quadrature.

    Raises:
        MomentError: the outer 10% of the box carries more than 1% of the integral
    """
    grid = field.grid
    beta = _validate_index(beta, grid.dims)
    if beta.sum() > MAX_MOMENT_ORDER:
        raise PhysicalConstraintError(f"Moment order {beta.sum()} exceeds {MAX_MOMENT_ORDER}")
    weight = np.ones(grid.shape)
    for y, power in zip(grid.mesh(), beta):
        weight = weight * y ** (2 * power)
    integrand = weight * np.abs(field.values) ** 2
    total = float(np.sum(integrand))
    if total == 0.0:
        return 0.0
    share = float(np.sum(integrand[edge_mask(grid, MOMENT_EDGE_LAYER)])) / total
    if share > MOMENT_EDGE_SHARE:
        raise MomentError(f"Moment {tuple(beta)} has {share:.1%} of its weight near the boundary; enlarge the box")
    return float(np.sqrt(total * grid.cell_volume))


def derivative_norm(field: WaveField, beta: Sequence[int]) -> float:
    """||d^beta f||_L2 with spectral derivatives."""
    grid = field.grid
    beta = _validate_index(beta, grid.dims)
    coefficients = sfft.fftn(field.values, norm=SPECTRAL_NORM)
    for k, power in zip(grid.frequencies.mesh(), beta):
        coefficients = coefficients * (1j * k) ** power
    return float(np.sqrt(np.sum(np.abs(coefficients) ** 2) * grid.cell_volume))


def interaction_norm(
    first: WaveField,
    second: WaveField,
    lam: float,
    eps: float,
    delta: float = 0.0,
    alpha: float = 1.0,
) -> float:
    """
    (1/eps) ||N_I||_L2 with N_I = eps^alpha (g(psi1 + psi2) - g(psi1) - g(psi2)),
    g(z) = lam z log(delta + |z|^2) and g(0) = 0.
    """
    if first.grid != second.grid:
        raise PhysicalConstraintError("Interaction needs both packets on the same grid")
    if not eps > 0:
        raise PhysicalConstraintError(f"eps must be positive, got {eps}")

    def g(z: np.ndarray) -> np.ndarray:
        return lam * z * log_density(z, delta)

    psi1, psi2 = first.values, second.values
    source = eps ** alpha * (g(psi1 + psi2) - g(psi1) - g(psi2))
    return float(np.sqrt(np.sum(np.abs(source) ** 2) * first.grid.cell_volume)) / eps


def log_lipschitz_gap(z1, z2) -> np.ndarray | float:
    """
    2 |z2 - z1|^2 - |Im((z2 log|z2|^2 - z1 log|z1|^2)(conj z2 - conj z1))|, never negative.

    Uses the identity Im(...) = log(|z1|^2/|z2|^2) Im((z2 - z1) conj z1), which stays
    accurate for nearby points of large modulus; z log|z|^2 is taken as 0 at z = 0.
    """
    z1 = np.asarray(z1, dtype=np.complex128)
    z2 = np.asarray(z2, dtype=np.complex128)
    r1, r2 = np.abs(z1), np.abs(z2)
    nonzero = (r1 > 0) & (r2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(nonzero, 2.0 * np.log(np.where(nonzero, r1 / np.where(r2 > 0, r2, 1.0), 1.0)), 0.0)
    cross = np.imag((z2 - z1) * np.conj(z1))
    gap = 2.0 * np.abs(z2 - z1) ** 2 - np.abs(log_ratio * cross)
    return float(gap) if gap.ndim == 0 else gap


def fit_exponential_envelope(times: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """
    (C, rate) with values <= C exp(rate t) at every sample: the rate comes from a
    least-squares fit of log(values), clipped at 0, and C is the smallest constant
    making the curve an upper envelope.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2 or times.shape != values.shape:
        raise FitError("Growth envelope needs at least two matching samples")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise FitError("Growth envelope needs positive finite values")
    logs = np.log(values)
    rate = max(float(linregress(times, logs).slope), 0.0) if np.ptp(times) > 0 else 0.0
    constant = float(np.exp(np.max(logs - rate * times)))
    return constant, rate


def taylor_source_norm(potential: PotentialSpec, q, eps: float, field: WaveField) -> float:
    """||(V^eps(t, .) - 1/2 <y, Hess V(q) y>) u||_L2: the source driving the sqrt(eps) rate."""
    coords = np.stack(field.grid.mesh())
    remainder = veps_eval(potential, q, eps, coords) - quadratic_part(potential, q, coords)
    return float(np.sqrt(np.sum(np.abs(remainder * field.values) ** 2) * field.grid.cell_volume))
