import numpy as np
import pytest
from scipy import fft as sfft

from core import (
    WaveField,
    boundary_mass,
    l2_distance,
    l2_norm,
    load_field,
    make_grid,
    sample_function,
    save_field,
    spectral_tail,
)
from errors import GridError, NonFiniteError


def gaussian(x):
    return np.pi ** -0.25 * np.exp(-x ** 2 / 2)


def test_grid_is_left_aligned():
    grid = make_grid([(-4.0, 4.0)], [16])
    assert grid.spacing == (0.5,)
    assert grid.axes[0][0] == -4.0
    assert grid.axes[0][-1] == pytest.approx(3.5)
    assert grid.cell_volume == 0.5


def test_single_interval_is_accepted_for_one_dimension():
    assert make_grid((-1.0, 1.0), 8).counts == (8,)


@pytest.mark.parametrize("bounds, counts", [
    ([(-1.0, 1.0)], [12]),
    ([(-1.0, 1.0)], [4]),
    ([(1.0, 1.0)], [8]),
    ([(-1.0, 1.0), (-1.0, 1.0)], [8]),
])
def test_invalid_grids_are_rejected(bounds, counts):
    with pytest.raises(GridError):
        make_grid(bounds, counts)


def test_normalized_gaussian_has_unit_norm():
    grid = make_grid([(-16.0, 16.0)], [256])
    assert l2_norm(sample_function(grid, gaussian)) == pytest.approx(1.0, abs=1e-12)


def test_transform_preserves_sums():
    grid = make_grid([(-8.0, 8.0), (-8.0, 8.0)], [32, 16])
    rng = np.random.default_rng(3)
    values = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    coefficients = sfft.fftn(values, norm="ortho")
    assert np.sum(np.abs(coefficients) ** 2) == pytest.approx(np.sum(np.abs(values) ** 2), rel=1e-12)


def test_fields_on_different_grids_cannot_be_combined():
    first = sample_function(make_grid([(-8.0, 8.0)], [64]), gaussian)
    second = sample_function(make_grid([(-8.0, 8.0)], [128]), gaussian)
    with pytest.raises(GridError):
        l2_distance(first, second)


def test_field_rejects_non_finite_values():
    grid = make_grid([(-1.0, 1.0)], [8])
    with pytest.raises(NonFiniteError):
        WaveField(grid, np.full(8, np.nan))


def test_boundary_mass_of_constant_field_is_outer_layer_share():
    grid = make_grid([(0.0, 1.0)], [64])
    assert boundary_mass(WaveField(grid, np.ones(64))) == pytest.approx(2 / 16)


def test_centered_gaussian_has_no_boundary_mass_or_tail():
    field = sample_function(make_grid([(-16.0, 16.0)], [256]), gaussian)
    assert boundary_mass(field) < 1e-30
    assert spectral_tail(field) < 1e-20


def test_rough_field_has_spectral_tail():
    grid = make_grid([(-1.0, 1.0)], [64])
    values = np.where(np.arange(64) % 2 == 0, 1.0, -1.0)
    assert spectral_tail(WaveField(grid, values)) > 0.5


def test_field_csv_restores_grid_and_values(tmp_path):
    grid = make_grid([(-2.0, 2.0), (-1.0, 3.0)], [8, 16])
    field = sample_function(grid, lambda x, y: np.exp(-x ** 2 - 1j * y))
    path = tmp_path / "field.csv"
    save_field(field, path)

    restored = load_field(path)
    assert path.read_text().startswith("# lower=-2.0;-1.0 upper=2.0;3.0 counts=8;16\nindex,re,im\n")
    assert restored.grid == grid
    np.testing.assert_array_equal(restored.values, field.values)
