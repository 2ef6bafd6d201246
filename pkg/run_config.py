"""
Schema of an experiment file: one JSON document per run.

Schema violations surface as pydantic ValidationError before any computation.
Physical constraints (eps range of the chosen frame, grid invariants) are
checked separately by RunConfig.check_physical so they map to their own exit code.
"""
import json
import math
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, BeforeValidator, Field, model_validator

from core import Grid, make_grid
from errors import PhysicalConstraintError
from lab import GaussianProfile, Packet, SechProfile, gausson
from potentials import PotentialSpec, make_potential

SCENARIOS = ("classical", "gaussian", "single", "superpose", "sweep", "crossing")
ERROR_KINDS = ("linear", "subcritical", "critical", "superposition")
LAB_EPS_RANGE = (4e-3, 1e-1)
GAUSSIAN_B0 = math.pi ** -0.25


def parse_complex(value):
    """Accept a number, a [re, im] pair or a complex literal string such as '1-0.5j'."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"Complex pair must have two entries, got {value}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
        return complex(value)
    raise ValueError(f"Cannot read {value!r} as a complex number")


ComplexValue = Annotated[complex, BeforeValidator(parse_complex)]


class StrictModel(BaseModel):
    """Unknown keys are schema errors at every level of a config."""
    model_config = {"extra": "forbid"}


class PotentialConfig(StrictModel):
    kind: Literal["zero", "harmonic", "inverted_harmonic", "cosine", "harmonic_cosine"] = "zero"
    dims: int = Field(default=1, ge=1, le=2, description="Space dimension (1 or 2).")
    omega: list[float] | None = Field(default=None, description="Frequencies, one per axis or a single shared one.")
    coefficients: list[float] | None = Field(default=None, description="Cosine amplitudes c_j.")

    @model_validator(mode="after")
    def check_parameters(self):
        if self.kind in ("harmonic", "inverted_harmonic", "harmonic_cosine") and not self.omega:
            raise ValueError(f"Potential '{self.kind}' needs 'omega'")
        if self.kind in ("cosine", "harmonic_cosine") and not self.coefficients:
            raise ValueError(f"Potential '{self.kind}' needs 'coefficients'")
        for name in ("omega", "coefficients"):
            values = getattr(self, name)
            if values and len(values) not in (1, self.dims):
                raise ValueError(f"'{name}' needs 1 or {self.dims} entries")
        return self

    def build(self) -> PotentialSpec:
        return make_potential(self.kind, self.dims, self.omega, self.coefficients)


class ProfileConfig(StrictModel):
    kind: Literal["gaussian", "gausson", "sech"] = "gaussian"
    a0: list[ComplexValue] = Field(default_factory=lambda: [complex(1.0)], description="Gaussian width parameters.")
    b0: ComplexValue = Field(default=complex(GAUSSIAN_B0), description="Profile amplitude.")
    width: list[float] = Field(default_factory=lambda: [1.0], description="Sech widths.")

    @model_validator(mode="after")
    def check_profile(self):
        if self.kind == "gaussian" and any(a.real <= 0 for a in self.a0):
            raise ValueError("Gaussian profile needs Re a0 > 0")
        if self.kind == "sech" and any(w <= 0 for w in self.width):
            raise ValueError("Sech profile needs positive widths")
        if self.b0 == 0:
            raise ValueError("Profile amplitude b0 must be nonzero")
        return self

    def build(self, dims: int, lam: float):
        if self.kind == "gausson":
            return gausson(lam, dims)
        if self.kind == "sech":
            widths = self.width * dims if len(self.width) == 1 else self.width
            return SechProfile(width=tuple(widths), b0=self.b0)
        a0 = self.a0 * dims if len(self.a0) == 1 else self.a0
        return GaussianProfile(a0=tuple(a0), b0=self.b0)


class PacketConfig(StrictModel):
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    q0: list[float]
    p0: list[float]


class GridConfig(StrictModel):
    bounds: list[tuple[float, float]] = Field(description="One (lower, upper) interval per axis.")
    counts: list[int] | None = Field(default=None, description="Power-of-two point counts per axis.")

    def build(self) -> Grid:
        if self.counts is None:
            raise PhysicalConstraintError("Grid counts are required here")
        return make_grid(self.bounds, self.counts)


class EnvelopeConfig(StrictModel):
    """Moving-frame (y) discretization."""
    grid: GridConfig | None = None
    dt: float = Field(default=1e-3, gt=0)
    source: Literal["pde", "closure"] = Field(
        default="pde", description="Reference envelope: quadratic-mode PDE or Gaussian closure."
    )

    def build_grid(self, dims: int) -> Grid:
        if self.grid is None:
            return make_grid([(-16.0, 16.0)] * dims, [256] * dims)
        return self.grid.build()


class LabConfig(StrictModel):
    """Lab-frame (x) discretization; counts are chosen automatically when omitted."""
    bounds: list[tuple[float, float]]
    counts: list[int] | None = None
    dt: float = Field(default=1e-4, gt=0)


class AcceptanceConfig(StrictModel):
    slope_min: float | None = None
    slope_max: float | None = None
    r_squared_min: float | None = None
    error_max: float | None = None
    mass_drift_max: float | None = None
    energy_drift_max: float | None = None
    closure_pde_max: float | None = None
    residual_max: float | None = None
    gausson_max: float | None = None
    tau_final: float | None = None
    tau_tolerance: float = 1e-8
    gauge_max: float | None = None
    tensorization_max: float | None = None
    order_min: float | None = None
    ratio_factor_max: float | None = None
    interaction_ratio_max: float | None = None
    growth_rate_max: float | None = Field(default=None, description="Largest fitted rate of the moment and derivative norms.")
    lab_gauge_max: float | None = None
    lab_tensorization_max: float | None = None


class RunConfig(StrictModel):
    name: str = Field(default="run", description="Label used for the output directory.")
    scenario: Literal["classical", "gaussian", "single", "superpose", "sweep", "crossing"]
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    packets: list[PacketConfig] = Field(min_length=1, max_length=2)
    lam: float = 0.0
    alpha: float = Field(default=1.0, ge=1.0)
    eps: float | None = Field(default=None, gt=0, le=1)
    eps_list: list[float] | None = None
    delta_list: list[float] | None = Field(default=None, description="Regularizations to sweep; each gets its own records.")
    gamma: float = Field(default=0.4, gt=0, lt=1, description="Crossing threshold exponent: threshold = eps^gamma.")
    T: float = Field(gt=0)
    dt: float = Field(default=1e-3, gt=0, description="Classical flow and closure step.")
    flow_dt: float | None = Field(default=None, gt=0)
    times: list[float] | None = Field(default=None, description="Measurement times; defaults to [T].")
    error_kind: Literal["linear", "subcritical", "critical", "superposition"] | None = None
    delta: float | None = Field(default=None, ge=0)
    separation_factor: float = Field(default=5.0, gt=0)
    snapshots: bool = False
    envelope: EnvelopeConfig = Field(default_factory=EnvelopeConfig)
    lab: LabConfig | None = None
    acceptance: AcceptanceConfig = Field(default_factory=AcceptanceConfig)
    output_dir: str = "results"
    workers: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_consistency(self):
        d = self.potential.dims
        for packet in self.packets:
            if len(packet.q0) != d or len(packet.p0) != d:
                raise ValueError(f"Packet q0/p0 must have {d} entries")
            for name in ("a0", "width"):
                if len(getattr(packet.profile, name)) not in (1, d):
                    raise ValueError(f"Profile '{name}' needs 1 or {d} entries")
            if packet.profile.kind == "gausson" and self.lam >= 0:
                raise ValueError("A Gausson profile needs lam < 0")
        if self.eps_list is not None and any(not 0 < e <= 1 for e in self.eps_list):
            raise ValueError("Every eps in eps_list must lie in (0, 1]")
        if self.times is not None and any(not 0 <= t <= self.T for t in self.times):
            raise ValueError("Measurement times must lie in [0, T]")
        if self.delta_list is not None and any(value < 0 for value in self.delta_list):
            raise ValueError("delta_list entries must be >= 0")

        if self.scenario in ("single", "superpose") and self.eps is None:
            raise ValueError(f"Scenario '{self.scenario}' needs 'eps'")
        if self.scenario in ("sweep", "crossing") and (not self.eps_list or len(self.eps_list) < 3):
            raise ValueError(f"Scenario '{self.scenario}' needs 'eps_list' with at least 3 values")
        if self.scenario == "sweep" and self.error_kind is None:
            raise ValueError("Scenario 'sweep' needs 'error_kind'")
        if self.scenario in ("single", "gaussian") and len(self.packets) != 1:
            raise ValueError(f"Scenario '{self.scenario}' takes exactly one packet")
        if self.scenario in ("superpose", "crossing") and len(self.packets) != 2:
            raise ValueError(f"Scenario '{self.scenario}' takes exactly two packets")
        if self.scenario == "gaussian" and self.packets[0].profile.kind == "sech":
            raise ValueError("Scenario 'gaussian' needs a Gaussian or Gausson profile")
        if self.kind == "superposition":
            if len(self.packets) != 2:
                raise ValueError("Superposition errors take exactly two packets")
            if self.lab is None:
                raise ValueError("Superposition errors need a 'lab' grid")
        elif self.scenario == "sweep" and len(self.packets) != 1:
            raise ValueError(f"Error kind '{self.error_kind}' takes exactly one packet")
        if self.kind == "subcritical" and self.alpha <= 1:
            raise ValueError("Subcritical errors need alpha > 1")
        if self.acceptance.growth_rate_max is not None and (self.scenario != "gaussian" or len(self.measurement_times) < 2):
            raise ValueError("'growth_rate_max' needs scenario 'gaussian' with at least two measurement times")
        lab_checks = self.acceptance.lab_gauge_max, self.acceptance.lab_tensorization_max
        if any(value is not None for value in lab_checks) and (self.scenario != "single" or self.lab is None):
            raise ValueError("Lab-frame gauge and tensorization checks need scenario 'single' with a 'lab' grid")
        if self.lab is not None and len(self.lab.bounds) != d:
            raise ValueError(f"Lab bounds must have {d} intervals")
        return self

    @property
    def kind(self) -> str:
        """Error kind measured by this run; single defaults to critical, superpose to superposition."""
        if self.error_kind is not None:
            return self.error_kind
        if self.scenario == "superpose":
            return "superposition"
        return "critical"

    @property
    def measurement_times(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.times or [self.T])))

    @property
    def eps_values(self) -> list[float]:
        return sorted(self.eps_list) if self.eps_list else [self.eps]

    @property
    def delta_values(self) -> list[float | None]:
        return list(self.delta_list) if self.delta_list else [self.delta]

    def potential_spec(self) -> PotentialSpec:
        return self.potential.build()

    def packet_specs(self) -> tuple[Packet, ...]:
        d = self.potential.dims
        return tuple(
            Packet(profile=p.profile.build(d, self.lam), q0=tuple(p.q0), p0=tuple(p.p0)) for p in self.packets
        )

    def check_physical(self) -> None:
        """Constraints that depend on physics rather than on the schema."""
        self.potential_spec()
        if self.scenario in ("single", "superpose", "sweep") and self.kind == "superposition":
            low, high = LAB_EPS_RANGE
            out_of_range = [e for e in self.eps_values if not low <= e <= high]
            if out_of_range:
                raise PhysicalConstraintError(
                    f"Lab-frame runs need eps in [{low:g}, {high:g}]; got {out_of_range}"
                )
        self.envelope.build_grid(self.potential.dims)


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a config file (json.JSONDecodeError / ValidationError on bad input)."""
    with open(path) as handle:
        data = json.load(handle)
    return RunConfig.model_validate(data)
