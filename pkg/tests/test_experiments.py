import json

import numpy as np
import pytest

from classical import integrate_flow
from core import make_grid, sample_function
from envelope import EnvelopeProblem
from errors import FitError
from experiments import (
    error_curve,
    fit_records,
    growth_profile,
    interaction_ratio,
    measure_error,
    run_classical,
    run_crossing,
    run_gaussian,
    run_scenario,
    run_single,
    run_superpose,
    run_sweep,
    tensorization_residual,
    write_outputs,
)
from lab import GaussianProfile, Packet
from potentials import make_potential
from records import SweepRecord
from run_config import RunConfig

B0 = np.pi ** -0.25
SMALL_ENVELOPE = {"grid": {"bounds": [[-12, 12]], "counts": [128]}, "dt": 0.01}


def config(**data) -> RunConfig:
    return RunConfig.model_validate(data)


def test_free_classical_flow():
    result = run_classical(config(
        scenario="classical", packets=[{"q0": [0.0], "p0": [1.0]}], T=2.0, dt=1e-3,
        acceptance={"energy_drift_max": 1e-10},
    ))
    summary = result.metadata["trajectories"][0]
    assert summary["q_final"] == pytest.approx([2.0])
    assert summary["S_final"] == pytest.approx(1.0)
    assert result.passed


def test_inverted_oscillator_growth_envelope():
    result = run_classical(config(
        scenario="classical", potential={"kind": "inverted_harmonic", "omega": [1.0]},
        packets=[{"q0": [0.5], "p0": [0.0]}], T=5.0, dt=1e-3,
    ))
    summary = result.metadata["trajectories"][0]
    # |q| + |p| = 0.5 e^t
    assert summary["growth_rate"] == pytest.approx(1.0, rel=1e-6)
    assert summary["growth_constant"] == pytest.approx(0.5, rel=1e-6)
    trajectory = result.trajectories[0]
    envelope = summary["growth_constant"] * np.exp(summary["growth_rate"] * trajectory.times)
    assert np.all(trajectory.phase_space_size() <= envelope * (1 + 1e-12))


def test_crossing_measure_scales_with_threshold():
    result = run_crossing(config(
        scenario="crossing", potential={"kind": "harmonic", "omega": [1.0]},
        packets=[{"q0": [1.0], "p0": [0.0]}, {"q0": [-2.0], "p0": [0.0]}],
        eps_list=[0.04, 0.01, 0.004], gamma=0.4, T=np.pi, dt=1e-3,
        acceptance={"ratio_factor_max": 3.0},
    ))
    for row in result.metadata["crossing"]:
        assert row["normalized"] == pytest.approx(2 * np.arcsin(row["threshold"] / 3) / row["threshold"], abs=1e-5)
    assert result.metadata["ratio_factor"] < 1.1
    assert result.passed


def test_gausson_stays_put():
    result = run_gaussian(config(
        scenario="gaussian", packets=[{"profile": {"kind": "gausson"}, "q0": [0.0], "p0": [0.0]}],
        lam=-1.0, T=0.5, dt=1e-3, times=[0.25, 0.5], envelope={"dt": 2.5e-4},
        acceptance={"gausson_max": 1e-5, "tau_final": 1.0, "growth_rate_max": 1e-3},
    ))
    assert result.passed
    assert result.metadata["tau_final"] == pytest.approx([1.0])


def test_closure_oracle_for_harmonic_potential():
    result = run_gaussian(config(
        scenario="gaussian", potential={"kind": "harmonic", "omega": [1.0]},
        packets=[{"profile": {"a0": [1.0], "b0": B0}, "q0": [1.0], "p0": [0.0]}],
        lam=-1.0, T=0.5, dt=1e-3, envelope={"dt": 2.5e-4},
        acceptance={"closure_pde_max": 1e-5, "residual_max": 1e-6, "mass_drift_max": 1e-8},
    ))
    assert result.passed, result.checks
    assert result.closure is not None
    assert set(result.metadata["moments"]) == {"0", "1", "2", "3"}


def test_growth_profile_covers_every_index():
    grid = make_grid([(-12.0, 12.0), (-12.0, 12.0)], [64, 64])
    times = [0.0, 1.0, 2.0]

    def spreading(t):
        return sample_function(grid, lambda y1, y2: np.exp(-(y1 ** 2 + y2 ** 2) / (2 * (1 + t))))

    growth = growth_profile([spreading(t) for t in times], times)
    assert len(growth["moments"]) == len(growth["derivatives"]) == 10
    assert {"0,0", "3,0", "1,2", "0,3"} <= set(growth["moments"])
    assert growth["growth"]["moments[2,0]"]["rate"] > 0
    assert growth["growth"]["derivatives[2,0]"]["rate"] == 0.0
    assert 0 < growth["max_growth_rate"] < np.inf

    single = growth_profile([spreading(0.0)], [0.0])
    assert single["growth"] == {}
    assert single["max_growth_rate"] == np.inf


def test_two_dimensional_run_tensorizes():
    grid = make_grid([(-8.0, 8.0), (-8.0, 8.0)], [64, 64])
    potential = make_potential("cosine", dims=2, coefficients=[1.0, 0.5])
    packet = Packet(GaussianProfile(a0=(1.0, 2.0), b0=0.6), (0.5, -0.2), (0.5, 0.0))
    trajectory = integrate_flow(potential, packet.q0, packet.p0, 0.2, 1e-3)
    problem = EnvelopeProblem(
        u0=sample_function(grid, packet.profile), trajectory=trajectory, lam=-1.0, T=0.2, dt=1e-2,
        mode="exact", eps=0.1,
    )
    assert tensorization_residual(problem, packet) < 1e-10


def test_single_run_checks_lab_gauge():
    result = run_single(config(
        scenario="single", potential={"kind": "cosine", "coefficients": [1.0]},
        packets=[{"q0": [0.5], "p0": [0.5]}], lam=-1.0, eps=0.1, T=0.2, dt=1e-3,
        envelope=SMALL_ENVELOPE, lab={"bounds": [[-4, 5]], "dt": 1e-3},
        acceptance={"lab_gauge_max": 1e-9},
    ))
    assert [check.name for check in result.checks] == ["lab_gauge_residual"]
    assert result.passed


def test_quadratic_potential_makes_critical_approximation_exact():
    sweep = config(
        scenario="sweep", error_kind="critical", potential={"kind": "harmonic", "omega": [1.0]},
        packets=[{"q0": [0.5], "p0": [0.5]}], lam=-1.0, eps_list=[0.1, 0.05, 0.02], T=0.2, dt=1e-3,
        times=[0.1, 0.2], envelope=SMALL_ENVELOPE, acceptance={"error_max": 1e-5}, workers=2,
    )
    records, measurements = error_curve(sweep)
    assert [(r.eps, r.t) for r in records] == [
        (0.02, 0.1), (0.02, 0.2), (0.05, 0.1), (0.05, 0.2), (0.1, 0.1), (0.1, 0.2)
    ]
    assert max(r.error for r in records) < 1e-9
    assert len(measurements) == 3

    result = run_sweep(sweep)
    assert result.fits == []
    assert result.passed


@pytest.mark.parametrize("kind, extra", [
    ("critical", {"lam": -1.0}),
    ("linear", {}),
    ("subcritical", {"lam": -1.0, "alpha": 2.0}),
])
def test_errors_shrink_with_eps(kind, extra):
    sweep = config(
        scenario="sweep", error_kind=kind, potential={"kind": "cosine", "coefficients": [1.0]},
        packets=[{"q0": [0.5], "p0": [0.5]}], eps_list=[0.1, 0.03, 0.01], T=0.5, dt=1e-3,
        envelope=SMALL_ENVELOPE, **extra,
    )
    coarse = measure_error(sweep, 0.1).records[-1].error
    fine = measure_error(sweep, 0.01).records[-1].error
    assert 0 < fine < coarse


def test_superposition_pipeline():
    result = run_superpose(config(
        scenario="superpose", potential={"kind": "harmonic", "omega": [1.0]},
        packets=[{"q0": [1.0], "p0": [0.0]}, {"q0": [-2.0], "p0": [0.0]}],
        lam=-1.0, eps=0.04, T=0.2, dt=1e-3, times=[0.1, 0.2],
        envelope={"source": "closure"}, lab={"bounds": [[-6, 6]], "dt": 1e-3},
    ))
    assert [r.t for r in result.records] == [0.1, 0.2]
    assert all(0 < r.error < 0.5 for r in result.records)
    profile = result.metadata["interaction"]
    assert [item["t"] for item in profile] == [0.1, 0.2]
    assert all(item["scaled_separation"] > 10 for item in profile)


def test_fits_at_final_time_and_over_time():
    records = []
    for eps in (0.1, 0.05, 0.02, 0.01):
        records.append(SweepRecord(eps=eps, T=1.0, t=0.5, error=10 * eps, scenario="critical", path="y-frame",
                                   dt=1e-3, delta=0.0, mass_drift=0.0))
        records.append(SweepRecord(eps=eps, T=1.0, t=1.0, error=eps ** 0.5, scenario="critical", path="y-frame",
                                   dt=1e-3, delta=0.0, mass_drift=0.0))
    fits = {fit.path: fit for fit in fit_records(records, 1.0)}
    assert fits["y-frame"].slope == pytest.approx(0.5)
    assert fits["y-frame/sup"].slope == pytest.approx(1.0)


def test_interaction_ratio_uses_separated_times():
    profile = [
        {"t": 0.0, "separation": 3.0, "scaled_separation": 30.0, "interaction": 1e-8},
        {"t": 1.0, "separation": 0.5, "scaled_separation": 5.0, "interaction": 0.1},
        {"t": 1.5, "separation": 0.05, "scaled_separation": 0.5, "interaction": 2.0},
        {"t": 2.0, "separation": 1.0, "scaled_separation": 10.0, "interaction": 1e-6},
    ]
    assert interaction_ratio(profile, 8.0) == pytest.approx(5e-7)
    with pytest.raises(FitError):
        interaction_ratio(profile, 100.0)


def test_outputs_are_written_after_the_run(tmp_path):
    run = config(name="free", scenario="classical", packets=[{"q0": [0.0], "p0": [1.0]}], T=1.0, dt=0.1)
    result = run_scenario(run)
    directory = write_outputs(result, run, tmp_path / "free")
    assert sorted(p.name for p in directory.iterdir()) == ["records.csv", "summary.json", "trajectory_1.csv"]
    summary = json.loads((directory / "summary.json").read_text())
    assert summary["scenario"] == "classical"
    assert summary["metadata"]["name"] == "free"
