import json

import pytest
from pydantic import ValidationError

from errors import PhysicalConstraintError
from run_config import RunConfig, load_config, parse_complex

SINGLE = {
    "scenario": "single",
    "potential": {"kind": "cosine", "coefficients": [1.0]},
    "packets": [{"q0": [0.5], "p0": [0.5]}],
    "lam": -1.0,
    "eps": 0.1,
    "T": 1.0,
}


def with_changes(base, **changes):
    data = json.loads(json.dumps(base))
    data.update(changes)
    return data


@pytest.mark.parametrize("value, expected", [
    (2, 2 + 0j),
    ([1.0, -0.5], 1 - 0.5j),
    ("1 - 0.5j", 1 - 0.5j),
    (0.25j, 0.25j),
])
def test_complex_parameters(value, expected):
    assert parse_complex(value) == expected


def test_complex_parameters_reject_bad_input():
    with pytest.raises(ValueError):
        parse_complex([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        parse_complex(True)


def test_single_config_defaults():
    config = RunConfig.model_validate(SINGLE)
    assert config.kind == "critical"
    assert config.measurement_times == (1.0,)
    assert config.eps_values == [0.1]
    assert config.delta_values == [None]
    packet = config.packet_specs()[0]
    assert packet.profile.a0 == (1 + 0j,)
    assert config.potential_spec().cosine == (1.0,)
    assert config.envelope.build_grid(1).counts == (256,)


def test_profile_broadcasts_to_dimension():
    config = RunConfig.model_validate(with_changes(
        SINGLE,
        potential={"kind": "harmonic", "dims": 2, "omega": [1.0]},
        packets=[{"profile": {"a0": [[1.0, 0.5]]}, "q0": [0.0, 0.0], "p0": [1.0, 0.0]}],
    ))
    assert config.packet_specs()[0].profile.a0 == (1 + 0.5j, 1 + 0.5j)


@pytest.mark.parametrize("changes", [
    {"unknown_key": 1},
    {"scenario": "teleport"},
    {"eps": None},
    {"eps": 2.0},
    {"alpha": 0.5},
    {"times": [0.5, 2.0]},
    {"packets": [{"q0": [0.5, 0.0], "p0": [0.5]}]},
    {"packets": [{"q0": [0.5], "p0": [0.5]}, {"q0": [-0.5], "p0": [0.5]}]},
    {"packets": [{"profile": {"kind": "gausson"}, "q0": [0.0], "p0": [0.0]}], "lam": 1.0},
    {"packets": [{"profile": {"a0": [-1.0]}, "q0": [0.0], "p0": [0.0]}]},
    {"potential": {"kind": "harmonic"}},
    {"potential": {"kind": "cosine", "coefficients": [1.0], "omgea": [3.0]}},
    {"acceptance": {"energy_drift_mx": 0.0}},
    {"envelope": {"dtt": 0.01}},
    {"packets": [{"profile": {"a0": [1.0], "bo": 1.0}, "q0": [0.5], "p0": [0.5]}]},
    {"packets": [{"profile": {"a0": [1.0, 2.0]}, "q0": [0.5], "p0": [0.5]}]},
    {"packets": [{"profile": {"kind": "sech", "width": [1.0, 2.0, 3.0]}, "q0": [0.5], "p0": [0.5]}]},
])
def test_schema_violations(changes):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(with_changes(SINGLE, **changes))


def test_growth_and_lab_checks_need_their_inputs():
    growth = with_changes(SINGLE, scenario="gaussian", eps=None, acceptance={"growth_rate_max": 1.0})
    with pytest.raises(ValidationError):
        RunConfig.model_validate(growth)
    with pytest.raises(ValidationError):
        RunConfig.model_validate(with_changes(SINGLE, times=[0.5, 1.0], acceptance={"growth_rate_max": 1.0}))
    RunConfig.model_validate(with_changes(growth, times=[0.5, 1.0]))
    with pytest.raises(ValidationError):
        RunConfig.model_validate(with_changes(SINGLE, acceptance={"lab_gauge_max": 1e-8}))
    config = RunConfig.model_validate(
        with_changes(SINGLE, lab={"bounds": [[-3, 4]]}, acceptance={"lab_tensorization_max": 1e-8})
    )
    assert config.acceptance.lab_tensorization_max == 1e-8


def test_sweep_requirements():
    sweep = with_changes(SINGLE, scenario="sweep", eps=None, eps_list=[0.1, 0.05, 0.02])
    with pytest.raises(ValidationError):
        RunConfig.model_validate(sweep)
    config = RunConfig.model_validate(with_changes(sweep, error_kind="linear"))
    assert config.eps_values == [0.02, 0.05, 0.1]
    with pytest.raises(ValidationError):
        RunConfig.model_validate(with_changes(sweep, error_kind="subcritical"))
    with pytest.raises(ValidationError):
        RunConfig.model_validate(with_changes(sweep, error_kind="linear", eps_list=[0.1, 0.05]))


def test_superposition_needs_lab_grid_and_eps_range():
    data = with_changes(
        SINGLE,
        scenario="superpose",
        potential={"kind": "harmonic", "omega": [1.0]},
        packets=[{"q0": [1.0], "p0": [0.0]}, {"q0": [-2.0], "p0": [0.0]}],
    )
    with pytest.raises(ValidationError):
        RunConfig.model_validate(data)
    config = RunConfig.model_validate(with_changes(data, lab={"bounds": [[-6, 6]]}, eps=0.2))
    assert config.kind == "superposition"
    with pytest.raises(PhysicalConstraintError):
        config.check_physical()
    RunConfig.model_validate(with_changes(data, lab={"bounds": [[-6, 6]]}, eps=0.05)).check_physical()


def test_bad_envelope_grid_is_physical():
    config = RunConfig.model_validate(with_changes(SINGLE, envelope={"grid": {"bounds": [[-8, 8]], "counts": [100]}}))
    with pytest.raises(PhysicalConstraintError):
        config.check_physical()


def test_load_config(tmp_path):
    path = tmp_path / "single.json"
    path.write_text(json.dumps(SINGLE))
    assert load_config(path).scenario == "single"
    path.write_text("{not json")
    with pytest.raises(json.JSONDecodeError):
        load_config(path)
