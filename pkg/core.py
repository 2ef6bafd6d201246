"""
Uniform periodic grids, complex fields on them, quadrature norms and the
spectral-transform contract shared by every solver.

Conventions (fixed):
- grid points are left-aligned: x_i = a + i*dx, i = 0..n-1, dx = (b-a)/n;
- the discrete transform is scipy.fft.fftn/ifftn with norm="ortho", so the
  plain sum of |coefficients|^2 equals the plain sum of |values|^2;
- L2 norms use the rectangle rule sqrt(sum |f|^2 * prod dx_j).
"""
import csv
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from errors import GridError, NonFiniteError

logger = logging.getLogger(__name__)

SPECTRAL_NORM = "ortho"
MIN_POINTS = 8
BOUNDARY_LAYER = 1.0 / 16.0
SPECTRAL_TAIL_BAND = 0.75


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Angular wavenumbers k_j = 2*pi*fftfreq(n_j, dx_j) for each axis."""
    wavenumbers: tuple[np.ndarray, ...]

    @property
    def k_max(self) -> tuple[float, ...]:
        return tuple(float(np.max(np.abs(k))) for k in self.wavenumbers)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.wavenumbers, indexing="ij"))

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full frequency mesh."""
        return sum(k ** 2 for k in self.mesh())


@dataclass(frozen=True)
class Grid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    periodic: bool = True

    @property
    def dims(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.lower, self.upper, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(a + dx * np.arange(n) for a, dx, n in zip(self.lower, self.spacing, self.counts))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def frequencies(self) -> FrequencyGrid:
        return FrequencyGrid(tuple(2.0 * np.pi * sfft.fftfreq(n, dx) for n, dx in zip(self.counts, self.spacing)))

    def describe(self) -> str:
        bounds = ", ".join(f"[{a:g},{b:g}]" for a, b in zip(self.lower, self.upper))
        return f"{bounds} x {tuple(self.counts)}"


def make_grid(bounds: Sequence[Sequence[float]], counts: Sequence[int] | int) -> Grid:
    """
    Build a periodic grid from per-axis intervals and point counts.

    Args:
        bounds: one (lower, upper) pair per axis; a single pair is accepted for d=1
        counts: point count per axis, each a power of two >= 8

    Raises:
        GridError: on non-power-of-two counts, empty intervals or a dims mismatch
    """
    if len(bounds) == 2 and all(np.isscalar(b) for b in bounds):
        bounds = [bounds]
    if isinstance(counts, (int, np.integer)):
        counts = [int(counts)]
    if len(bounds) != len(counts) or not bounds:
        raise GridError(f"Got {len(bounds)} intervals for {len(counts)} counts")

    lower, upper = [], []
    for a, b in bounds:
        a, b = float(a), float(b)
        if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
            raise GridError(f"Empty or invalid interval [{a}, {b}]")
        lower.append(a)
        upper.append(b)
    for n in counts:
        if int(n) != n or not _is_power_of_two(int(n)) or n < MIN_POINTS:
            raise GridError(f"Point count {n} is not a power of two >= {MIN_POINTS}")

    return Grid(tuple(lower), tuple(upper), tuple(int(n) for n in counts))


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex amplitudes on a grid. Values are stored read-only with the grid's shape."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.size != self.grid.size:
            raise GridError(f"Field has {values.size} values for a grid of {self.grid.size} points")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "WaveField":
        return WaveField(self.grid, values)

    def __add__(self, other: "WaveField") -> "WaveField":
        _require_same_grid(self, other)
        return WaveField(self.grid, self.values + other.values)

    def __sub__(self, other: "WaveField") -> "WaveField":
        _require_same_grid(self, other)
        return WaveField(self.grid, self.values - other.values)

    def __mul__(self, factor: complex) -> "WaveField":
        return WaveField(self.grid, self.values * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "WaveField":
        return WaveField(self.grid, -self.values)


def _require_same_grid(f: WaveField, g: WaveField) -> None:
    if f.grid != g.grid:
        raise GridError(f"Grid mismatch: {f.grid.describe()} vs {g.grid.describe()}")


def l2_norm(f: WaveField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume))


def l2_distance(f: WaveField, g: WaveField) -> float:
    _require_same_grid(f, g)
    return float(np.sqrt(np.sum(np.abs(f.values - g.values) ** 2) * f.grid.cell_volume))


def sample_function(grid: Grid, fn: Callable[..., np.ndarray | complex]) -> WaveField:
    """Sample fn(*coordinates) on the grid mesh; fn must accept broadcastable arrays."""
    with np.errstate(all="ignore"):
        values = np.asarray(fn(*grid.mesh()), dtype=np.complex128)
    values = np.broadcast_to(values, grid.shape)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("Sampled function returned non-finite values")
    return WaveField(grid, values)


def forward_transform(f: WaveField) -> np.ndarray:
    return sfft.fftn(f.values, norm=SPECTRAL_NORM)


def inverse_transform(grid: Grid, coefficients: np.ndarray) -> WaveField:
    return WaveField(grid, sfft.ifftn(coefficients, norm=SPECTRAL_NORM))


def edge_mask(grid: Grid, layer: float) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, n in enumerate(grid.counts):
        width = max(1, int(np.ceil(layer * n)))
        index = [slice(None)] * grid.dims
        index[axis] = slice(0, width)
        mask[tuple(index)] = True
        index[axis] = slice(n - width, n)
        mask[tuple(index)] = True
    return mask


def boundary_mass(f: WaveField, layer: float = BOUNDARY_LAYER) -> float:
    """Fraction of the L2 mass located in the outer `layer` share of any axis."""
    density = np.abs(f.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[edge_mask(f.grid, layer)]) / total)


def spectral_tail(f: WaveField, band: float = SPECTRAL_TAIL_BAND) -> float:
    """Fraction of spectral energy at |k_j| > band * k_max_j in any axis."""
    power = np.abs(forward_transform(f)) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    outside = np.zeros(f.grid.shape, dtype=bool)
    for k, k_max in zip(f.grid.frequencies.mesh(), f.grid.frequencies.k_max):
        outside |= np.abs(k) > band * k_max
    return float(np.sum(power[outside]) / total)


def save_field(f: WaveField, path: str | Path) -> None:
    """
    Write a field as CSV.

    Layout: one comment line `# lower=a1;a2 upper=b1;b2 counts=n1;n2`, a header
    `index,re,im`, then one row per point in C (row-major) order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = f.grid
    with open(path, "w", newline="") as handle:
        handle.write(
            "# lower={} upper={} counts={}\n".format(
                ";".join(repr(a) for a in grid.lower),
                ";".join(repr(b) for b in grid.upper),
                ";".join(str(n) for n in grid.counts),
            )
        )
        writer = csv.writer(handle)
        writer.writerow(["index", "re", "im"])
        for index, value in enumerate(f.values.ravel()):
            writer.writerow([index, repr(float(value.real)), repr(float(value.imag))])


def load_field(path: str | Path) -> WaveField:
    with open(path, newline="") as handle:
        meta = handle.readline().lstrip("# ").split()
        fields = dict(item.split("=", 1) for item in meta)
        grid = Grid(
            tuple(float(a) for a in fields["lower"].split(";")),
            tuple(float(b) for b in fields["upper"].split(";")),
            tuple(int(n) for n in fields["counts"].split(";")),
        )
        reader = csv.DictReader(handle)
        values = np.zeros(grid.size, dtype=np.complex128)
        for row in reader:
            values[int(row["index"])] = complex(float(row["re"]), float(row["im"]))
    return WaveField(grid, values)
