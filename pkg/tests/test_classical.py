import numpy as np
import pytest

from classical import crossing_measure, integrate_flow, save_trajectory, uniform_steps
from errors import NonFiniteError, PhysicalConstraintError
from potentials import make_potential


def test_uniform_steps_land_on_horizon():
    assert uniform_steps(1.0, 0.1) == (10, pytest.approx(0.1))
    steps, h = uniform_steps(1.0, 0.3)
    assert steps == 4
    assert h == pytest.approx(0.25)


@pytest.mark.parametrize("T, dt", [(0.0, 0.1), (1.0, 0.0), (1.0, 2.0), (np.inf, 0.1)])
def test_uniform_steps_rejects_bad_input(T, dt):
    with pytest.raises(PhysicalConstraintError):
        uniform_steps(T, dt)


def test_free_flow():
    trajectory = integrate_flow(make_potential("zero"), [0.0], [1.0], 2.0, 1e-3)
    q, p, S = trajectory.state_at(2.0)
    assert q[0] == pytest.approx(2.0, abs=1e-12)
    assert p[0] == pytest.approx(1.0)
    assert S == pytest.approx(1.0, abs=1e-12)
    assert trajectory.times[-1] == 2.0


def test_harmonic_flow_and_action():
    trajectory = integrate_flow(make_potential("harmonic", omega=[1.0]), [1.0], [0.0], np.pi / 2, 1e-3)
    q, p, S = trajectory.state_at(np.pi / 2)
    assert q[0] == pytest.approx(0.0, abs=1e-10)
    assert p[0] == pytest.approx(-1.0, abs=1e-10)
    # S = int (sin^2 - cos^2)/2 = -sin(2t)/4
    assert S == pytest.approx(0.0, abs=1e-10)
    assert trajectory.energy_drift < 1e-10


def test_rk4_error_drops_sixteenfold_when_step_halves():
    potential = make_potential("harmonic", omega=[1.0])
    errors = []
    for dt in (0.1, 0.05):
        q, _, _ = integrate_flow(potential, [1.0], [0.0], 2.0, dt).state_at(2.0)
        errors.append(abs(q[0] - np.cos(2.0)))
    assert errors[0] / errors[1] == pytest.approx(16.0, rel=0.1)


def test_dense_output_between_samples():
    trajectory = integrate_flow(make_potential("harmonic", omega=[1.0]), [1.0], [0.0], 1.0, 1e-2)
    q, p, S = trajectory.state_at(0.123)
    assert q[0] == pytest.approx(np.cos(0.123), abs=1e-8)
    assert p[0] == pytest.approx(-np.sin(0.123), abs=1e-8)
    assert S == pytest.approx(-np.sin(2 * 0.123) / 4, abs=1e-8)


def test_state_outside_horizon_is_rejected():
    trajectory = integrate_flow(make_potential("zero"), [0.0], [1.0], 1.0, 0.1)
    with pytest.raises(PhysicalConstraintError):
        trajectory.state_at(1.5)


def test_inverted_oscillator_blows_up():
    potential = make_potential("inverted_harmonic", omega=[30.0])
    with pytest.raises(NonFiniteError):
        integrate_flow(potential, [1.0], [0.0], 1000.0, 0.5)


def test_crossing_measure_of_opposite_free_paths():
    potential = make_potential("zero")
    first = integrate_flow(potential, [0.0], [1.0], 1.0, 1e-3)
    second = integrate_flow(potential, [0.0], [-1.0], 1.0, 1e-3)
    # |q1 - q2| = 2t <= h on [0, h/2]
    assert crossing_measure(first, second, 0.1) == pytest.approx(0.05, abs=1e-9)


def test_crossing_measure_of_harmonic_paths():
    potential = make_potential("harmonic", omega=[1.0])
    first = integrate_flow(potential, [1.0], [0.0], np.pi, 1e-3)
    second = integrate_flow(potential, [-2.0], [0.0], np.pi, 1e-3)
    threshold = 0.3
    # 3|cos t| <= h around t = pi/2
    expected = 2 * np.arcsin(threshold / 3)
    assert crossing_measure(first, second, threshold) == pytest.approx(expected, abs=1e-6)


def test_crossing_measure_needs_positive_threshold_and_shared_sampling():
    potential = make_potential("zero")
    first = integrate_flow(potential, [0.0], [1.0], 1.0, 1e-2)
    second = integrate_flow(potential, [0.0], [-1.0], 1.0, 2e-2)
    with pytest.raises(PhysicalConstraintError):
        crossing_measure(first, first, 0.0)
    with pytest.raises(PhysicalConstraintError):
        crossing_measure(first, second, 0.1)


def test_trajectory_csv(tmp_path):
    trajectory = integrate_flow(make_potential("zero", dims=2), [0.0, 1.0], [1.0, 0.0], 1.0, 0.25)
    path = tmp_path / "trajectory.csv"
    save_trajectory(trajectory, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,q1,q2,p1,p2,S,E"
    assert len(lines) == 6
    assert [float(v) for v in lines[-1].split(",")] == pytest.approx([1.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.5])


@pytest.mark.parametrize("kind, kwargs, T", [
    ("zero", {}, 20.0),
    ("harmonic", {"omega": [1.0]}, 20.0),
    ("cosine", {"coefficients": [1.0]}, 20.0),
    ("harmonic_cosine", {"omega": [1.0], "coefficients": [0.5]}, 20.0),
    # shorter horizon keeps the exponential branch clear of cancellation in E
    ("inverted_harmonic", {"omega": [1.0]}, 5.0),
])
def test_energy_is_conserved_for_every_kind(kind, kwargs, T):
    trajectory = integrate_flow(make_potential(kind, **kwargs), [0.5], [0.5], T, 1e-3)
    assert trajectory.energy_drift <= 1e-8 * (1 + abs(trajectory.energy[0]))
