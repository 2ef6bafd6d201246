"""
Scenario runners behind the CLI: error curves in eps for the linear,
subcritical, critical and superposition approximations, plus the classical,
closure and crossing studies. Runners only compute; files are written by
write_outputs once a run has finished.
"""
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

import config as settings
from analysis import (
    derivative_norm,
    fit_exponential_envelope,
    fit_slope,
    interaction_norm,
    moment_norm,
    taylor_source_norm,
)
from classical import Trajectory, crossing_measure, integrate_flow, save_trajectory
from core import Grid, WaveField, l2_distance, l2_norm, make_grid, sample_function, save_field
from envelope import EnvelopeProblem, SplitRun, evolve_envelope, gauge_scaling_check, self_convergence_order
from errors import FitError, PhysicalConstraintError
from gaussian import GaussianState, build_closure, closure_residual, gaussian_l2_moment, save_closure, synthesize_envelope
from lab import (
    ClosureEnvelope,
    GaussianProfile,
    Packet,
    SampledEnvelope,
    SemiclassicalProblem,
    assemble_approx,
    axis_flow,
    axis_profile,
    default_flow_dt,
    evolve_logNLS,
    lab_gauge_residual,
    lab_grid,
    lab_tensorization_residual,
)
from records import AcceptanceCheck, SlopeFit, SweepRecord, emit_report
from run_config import RunConfig

logger = logging.getLogger(__name__)

Y_FRAME = "y-frame"
LAB_FRAME = "lab"
Y_FRAME_FLOW_DT = 1e-4
GROWTH_ORDER = 3


@dataclass
class ScenarioResult:
    scenario: str
    records: list[SweepRecord] = field(default_factory=list)
    fits: list[SlopeFit] = field(default_factory=list)
    checks: list[AcceptanceCheck] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    trajectories: list[Trajectory] = field(default_factory=list)
    closure: GaussianState | None = None
    snapshots: dict[str, WaveField] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


@dataclass
class Measurement:
    """Errors of one (eps, delta) run plus what the diagnostics need."""
    records: list[SweepRecord]
    mass_drift: float
    extras: dict = field(default_factory=dict)
    snapshots: dict[str, WaveField] = field(default_factory=dict)


def _path_label(config: RunConfig, frame: str, delta: float | None) -> str:
    if config.delta_list:
        return f"{frame}@delta={delta:g}"
    return frame


def _check(name: str, value: float, upper: float | None = None, lower: float | None = None) -> AcceptanceCheck:
    passed = bool(np.isfinite(value))
    bounds = []
    if upper is not None:
        passed = passed and value <= upper
        bounds.append(f"<= {upper:g}")
    if lower is not None:
        passed = passed and value >= lower
        bounds.append(f">= {lower:g}")
    return AcceptanceCheck(name=name, passed=passed, value=float(value), bound=" and ".join(bounds))


def y_frame_flow(config: RunConfig, packet: Packet) -> Trajectory:
    flow_dt = config.flow_dt or min(Y_FRAME_FLOW_DT, config.dt)
    return integrate_flow(config.potential_spec(), packet.q0, packet.p0, config.T, min(flow_dt, config.T))


def _envelope_problem(
    config: RunConfig,
    trajectory: Trajectory,
    u0: WaveField,
    lam: float,
    delta: float | None,
    mode: str = "quadratic",
    eps: float | None = None,
    alpha: float = 1.0,
) -> EnvelopeProblem:
    return EnvelopeProblem(
        u0=u0,
        trajectory=trajectory,
        lam=lam,
        T=config.T,
        dt=config.envelope.dt,
        mode=mode,
        eps=eps,
        alpha=alpha,
        delta=delta,
        output_times=config.measurement_times,
    )


def reference_envelope(
    config: RunConfig,
    trajectory: Trajectory,
    packet: Packet,
    y_grid: Grid,
    lam: float,
    delta: float | None,
) -> tuple[list[WaveField], float, GaussianState | SplitRun]:
    """The critical/linear envelope u (W = quadratic part) at the measurement times, from the closure or the PDE."""
    if config.envelope.source == "closure":
        if not isinstance(packet.profile, GaussianProfile):
            raise PhysicalConstraintError("The closure source needs a Gaussian profile")
        state = build_closure(trajectory, packet.profile.a0, packet.profile.b0, lam, config.T, config.dt)
        return [synthesize_envelope(state, t, y_grid) for t in config.measurement_times], 0.0, state
    u0 = sample_function(y_grid, packet.profile)
    run = evolve_envelope(_envelope_problem(config, trajectory, u0, lam, delta))
    return list(run.fields), run.mass_drift, run


def measure_y_frame(
    config: RunConfig, eps: float, delta: float | None, trajectory: Trajectory | None = None
) -> Measurement:
    """
    Errors measured in the moving frame, where the lab-frame norm equals the envelope norm:
    - linear:      ||v^eps - v||                 (lam = 0)
    - critical:    ||u^eps - u||                 (alpha = 1)
    - subcritical: ||u^eps e^(i theta) - v^eps||  theta = lam (d/2) t eps^(alpha-1) log eps
    """
    kind = config.kind
    packet = config.packet_specs()[0]
    trajectory = trajectory or y_frame_flow(config, packet)
    y_grid = config.envelope.build_grid(config.potential.dims)
    u0 = sample_function(y_grid, packet.profile)
    times = config.measurement_times
    lam = 0.0 if kind == "linear" else config.lam
    alpha = config.alpha if kind == "subcritical" else 1.0

    exact = evolve_envelope(_envelope_problem(config, trajectory, u0, lam, delta, mode="exact", eps=eps, alpha=alpha))
    extras: dict = {}
    if kind == "subcritical":
        linear = evolve_envelope(_envelope_problem(config, trajectory, u0, 0.0, delta, mode="exact", eps=eps))
        rate = 0.5 * trajectory.dims * config.lam * eps ** (alpha - 1.0) * np.log(eps)
        errors = [
            l2_distance(exact.fields[n] * np.exp(1j * rate * t), linear.fields[n]) for n, t in enumerate(times)
        ]
        drift = max(exact.mass_drift, linear.mass_drift)
        reference_fields = list(linear.fields)
    else:
        reference_fields, ref_drift, _ = reference_envelope(config, trajectory, packet, y_grid, lam, delta)
        errors = [l2_distance(exact.fields[n], reference_fields[n]) for n in range(len(times))]
        drift = max(exact.mass_drift, ref_drift)
        extras["taylor_source"] = [
            taylor_source_norm(config.potential_spec(), trajectory.state_at(t)[0], eps, reference_fields[n])
            for n, t in enumerate(times)
        ]

    path = _path_label(config, Y_FRAME, delta)
    records = [
        SweepRecord(
            eps=eps, T=config.T, t=t, error=error, scenario=kind, path=path,
            dt=exact.dt, delta=exact.delta, mass_drift=drift,
        )
        for t, error in zip(times, errors)
    ]
    snapshots = {}
    if config.snapshots:
        for n, t in enumerate(times):
            snapshots[f"exact_eps{eps:g}_t{t:g}"] = exact.fields[n]
            snapshots[f"reference_eps{eps:g}_t{t:g}"] = reference_fields[n]
    logger.info(f"{kind} error at eps={eps:g}: {errors[-1]:.3e} (t={times[-1]:g})")
    return Measurement(records, drift, extras, snapshots)


def lab_problem(config: RunConfig, packets: Sequence[Packet], eps: float, delta: float | None,
                times: Sequence[float]) -> SemiclassicalProblem:
    """Lab-frame problem on the configured box, sized for the largest momentum along the packet paths."""
    potential = config.potential_spec()
    flow_dt = config.flow_dt or default_flow_dt(eps)
    flows = tuple(integrate_flow(potential, p.q0, p.p0, config.T, min(flow_dt, config.T)) for p in packets)
    p_max = max(float(np.max(np.abs(f.p))) for f in flows)
    return SemiclassicalProblem(
        eps=eps, lam=config.lam, potential=potential, packets=tuple(packets), T=config.T, dt=config.lab.dt,
        grid=lab_grid(config.lab.bounds, eps, p_max, config.lab.counts), alpha=config.alpha, delta=delta,
        output_times=tuple(times), flows=flows,
    )


def measure_superposition(config: RunConfig, eps: float, delta: float | None) -> Measurement:
    """||psi^eps - psi_1app - psi_2app|| on the lab grid, with the interaction term along the run."""
    packets = config.packet_specs()
    times = config.measurement_times
    problem = lab_problem(config, packets, eps, delta, times)
    flows, grid = problem.flows, problem.grid
    run = evolve_logNLS(problem)

    y_grid = config.envelope.build_grid(config.potential.dims)
    approximations = []
    for packet, flow in zip(packets, flows):
        _, _, reference = reference_envelope(config, flow, packet, y_grid, config.lam, None)
        source = ClosureEnvelope(reference) if isinstance(reference, GaussianState) else SampledEnvelope(reference)
        approximations.append(
            assemble_approx(flow, source, eps, grid, times, lam=config.lam, alpha=config.alpha, mode="critical")
        )

    path = _path_label(config, LAB_FRAME, delta)
    widths = max(max(p.profile.widths) for p in packets)
    records, interaction = [], []
    for n, t in enumerate(times):
        psi = run.fields[n]
        first, second = approximations[0][n], approximations[1][n]
        error = l2_distance(psi, first + second)
        records.append(
            SweepRecord(
                eps=eps, T=config.T, t=t, error=error, scenario="superposition", path=path,
                dt=run.dt, delta=run.delta, mass_drift=run.mass_drift,
            )
        )
        separation = float(np.linalg.norm(flows[0].state_at(t)[0] - flows[1].state_at(t)[0]))
        interaction.append({
            "t": t,
            "separation": separation,
            "scaled_separation": separation / (np.sqrt(eps) * widths),
            "interaction": interaction_norm(first, second, config.lam, eps, run.delta, config.alpha),
        })
    logger.info(f"Superposition error at eps={eps:g}: {records[-1].error:.3e}; energy drift {run.energy_drift:.2e}")
    snapshots = {f"psi_eps{eps:g}_t{t:g}": run.fields[n] for n, t in enumerate(times)} if config.snapshots else {}
    return Measurement(records, run.mass_drift, {"interaction": interaction, "energy_drift": run.energy_drift}, snapshots)


def measure_error(config: RunConfig, eps: float, delta: float | None = None,
                  trajectory: Trajectory | None = None) -> Measurement:
    if config.kind == "superposition":
        return measure_superposition(config, eps, delta)
    return measure_y_frame(config, eps, delta, trajectory)


def error_curve(config: RunConfig) -> tuple[list[SweepRecord], dict[tuple[float, float | None], Measurement]]:
    """
    One measurement per (eps, delta), fanned out to a thread pool; records come
    back in deterministic order whatever the completion order.
    """
    trajectory = None
    if config.kind != "superposition":
        trajectory = y_frame_flow(config, config.packet_specs()[0])

    tasks = [(eps, delta) for eps in config.eps_values for delta in config.delta_values]
    workers = min(config.workers or settings.SWEEP_WORKERS, len(tasks))
    measurements: dict[tuple[float, float | None], Measurement] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(measure_error, config, eps, delta, trajectory): (eps, delta) for eps, delta in tasks
        }
        for future in as_completed(futures):
            measurements[futures[future]] = future.result()

    records = [r for key in tasks for r in measurements[key].records]
    records.sort(key=SweepRecord.sort_key)
    return records, measurements


def fit_records(records: list[SweepRecord], T: float) -> list[SlopeFit]:
    """Fits at the final measurement time T per solver path, plus fits of the sup over measurement times (path suffix '/sup')."""
    fits = []
    for path in sorted({r.path for r in records}):
        group = [r for r in records if r.path == path]
        fits.append(fit_slope(group, T))
        if len({r.t for r in group}) > 1:
            sup = []
            for eps in sorted({r.eps for r in group}):
                worst = max((r for r in group if r.eps == eps), key=lambda r: r.error)
                sup.append(worst.model_copy(update={"t": T, "path": f"{path}/sup"}))
            fits.append(fit_slope(sup, T))
    return fits


def _rate_checks(config: RunConfig, fits: list[SlopeFit]) -> list[AcceptanceCheck]:
    acceptance = config.acceptance
    checks = []
    for fit in fits:
        if fit.path.endswith("/sup"):
            continue
        if acceptance.slope_min is not None or acceptance.slope_max is not None:
            checks.append(_check(f"slope[{fit.path}]", fit.slope, acceptance.slope_max, acceptance.slope_min))
        if acceptance.r_squared_min is not None:
            checks.append(_check(f"r_squared[{fit.path}]", fit.r_squared, lower=acceptance.r_squared_min))
    return checks


def _error_checks(config: RunConfig, records: list[SweepRecord]) -> list[AcceptanceCheck]:
    acceptance = config.acceptance
    checks = []
    if acceptance.error_max is not None and records:
        checks.append(_check("max_error", max(r.error for r in records), acceptance.error_max))
    if acceptance.mass_drift_max is not None and records:
        checks.append(_check("mass_drift", max(r.mass_drift for r in records), acceptance.mass_drift_max))
    return checks


def interaction_ratio(profile: list[dict], factor: float) -> float:
    """
    Largest interaction at separated times (scaled separation >= factor) over
    its value at closest approach; the closest-approach time itself is excluded.
    """
    closest = min(range(len(profile)), key=lambda n: profile[n]["separation"])
    reference = profile[closest]["interaction"]
    separated = [
        item["interaction"] for n, item in enumerate(profile)
        if n != closest and item["scaled_separation"] >= factor
    ]
    if not separated:
        raise FitError(f"No measurement time has scaled separation >= {factor:g}")
    if reference == 0.0:
        raise FitError("Interaction vanishes at closest approach")
    return max(separated) / reference


def run_sweep(config: RunConfig) -> ScenarioResult:
    records, measurements = error_curve(config)
    result = ScenarioResult("sweep", records=records)
    try:
        result.fits = fit_records(records, config.measurement_times[-1])
    except FitError as exc:
        # Exact approximations (quadratic V) leave every error under the noise floor
        if config.acceptance.slope_min is not None or config.acceptance.slope_max is not None:
            raise
        logger.warning(f"No slope fit: {exc}")
    result.checks = _rate_checks(config, result.fits) + _error_checks(config, records)
    result.metadata["measurements"] = [
        {"eps": eps, "delta": delta, **m.extras} for (eps, delta), m in sorted(
            measurements.items(), key=lambda item: (item[0][0], -1.0 if item[0][1] is None else item[0][1])
        )
    ]
    for m in measurements.values():
        result.snapshots.update(m.snapshots)
    return result


def run_single(config: RunConfig) -> ScenarioResult:
    """One eps, one packet, in the moving frame; structural checks when requested."""
    packet = config.packet_specs()[0]
    trajectory = y_frame_flow(config, packet)
    measurement = measure_y_frame(config, config.eps, config.delta, trajectory)
    result = ScenarioResult("single", records=measurement.records, trajectories=[trajectory])
    result.snapshots.update(measurement.snapshots)
    result.metadata.update(measurement.extras)
    acceptance = config.acceptance
    result.checks = _error_checks(config, measurement.records)

    y_grid = config.envelope.build_grid(config.potential.dims)
    lam = 0.0 if config.kind == "linear" else config.lam
    alpha = config.alpha if config.kind == "subcritical" else 1.0
    problem = _envelope_problem(
        config, trajectory, sample_function(y_grid, packet.profile), lam, config.delta,
        mode="exact", eps=config.eps, alpha=alpha,
    )
    if acceptance.gauge_max is not None:
        residual = gauge_scaling_check(problem, 2.0)
        result.metadata["gauge_residual"] = residual
        result.checks.append(_check("gauge_residual", residual, acceptance.gauge_max))
    if acceptance.tensorization_max is not None:
        residual = tensorization_residual(problem, packet)
        result.metadata["tensorization_residual"] = residual
        result.checks.append(_check("tensorization_residual", residual, acceptance.tensorization_max))
    if acceptance.order_min is not None:
        order = self_convergence_order(problem)
        result.metadata["self_convergence_order"] = order
        result.checks.append(_check("self_convergence_order", order, lower=acceptance.order_min))

    if acceptance.lab_gauge_max is not None or acceptance.lab_tensorization_max is not None:
        lab = replace(lab_problem(config, [packet], config.eps, config.delta, [config.T]), lam=lam, alpha=alpha)
        if acceptance.lab_gauge_max is not None:
            residual = lab_gauge_residual(lab, 2.0)
            result.metadata["lab_gauge_residual"] = residual
            result.checks.append(_check("lab_gauge_residual", residual, acceptance.lab_gauge_max))
        if acceptance.lab_tensorization_max is not None:
            residual = lab_tensorization_residual(lab)
            result.metadata["lab_tensorization_residual"] = residual
            result.checks.append(_check("lab_tensorization_residual", residual, acceptance.lab_tensorization_max))
    return result


def run_superpose(config: RunConfig) -> ScenarioResult:
    measurement = measure_superposition(config, config.eps, config.delta)
    result = ScenarioResult("superpose", records=measurement.records)
    result.snapshots.update(measurement.snapshots)
    result.metadata.update(measurement.extras)
    result.checks = _error_checks(config, measurement.records)
    acceptance = config.acceptance
    if acceptance.interaction_ratio_max is not None:
        ratio = interaction_ratio(measurement.extras["interaction"], config.separation_factor)
        result.metadata["interaction_ratio"] = ratio
        result.checks.append(_check("interaction_ratio", ratio, acceptance.interaction_ratio_max))
    if acceptance.energy_drift_max is not None:
        result.checks.append(
            _check("energy_drift", measurement.extras["energy_drift"], acceptance.energy_drift_max)
        )
    return result


def run_classical(config: RunConfig) -> ScenarioResult:
    potential = config.potential_spec()
    result = ScenarioResult("classical")
    summaries = []
    for packet in config.packet_specs():
        trajectory = integrate_flow(potential, packet.q0, packet.p0, config.T, min(config.flow_dt or config.dt, config.T))
        result.trajectories.append(trajectory)
        constant, rate = fit_exponential_envelope(trajectory.times, trajectory.phase_space_size())
        summaries.append({
            "q_final": trajectory.q[-1].tolist(),
            "p_final": trajectory.p[-1].tolist(),
            "S_final": float(trajectory.S[-1]),
            "energy": float(trajectory.energy[0]),
            "energy_drift": trajectory.energy_drift,
            "growth_constant": constant,
            "growth_rate": rate,
        })
        if config.acceptance.energy_drift_max is not None:
            bound = config.acceptance.energy_drift_max * (1 + abs(trajectory.energy[0]))
            result.checks.append(_check("energy_drift", trajectory.energy_drift, bound))
    result.metadata["trajectories"] = summaries
    return result


def run_crossing(config: RunConfig) -> ScenarioResult:
    """Measure of {t : |q1 - q2| <= eps^gamma} for each eps, normalized by eps^gamma."""
    potential = config.potential_spec()
    packets = config.packet_specs()
    flow_dt = min(config.flow_dt or config.dt, config.T)
    first, second = (integrate_flow(potential, p.q0, p.p0, config.T, flow_dt) for p in packets)
    rows = []
    for eps in config.eps_values:
        threshold = eps ** config.gamma
        measure = crossing_measure(first, second, threshold)
        rows.append({"eps": eps, "threshold": threshold, "measure": measure, "normalized": measure / threshold})
    result = ScenarioResult("crossing", trajectories=[first, second], metadata={"crossing": rows, "gamma": config.gamma})
    normalized = [row["normalized"] for row in rows]
    factor = max(normalized) / min(normalized) if min(normalized) > 0 else float("inf")
    result.metadata["ratio_factor"] = factor
    if config.acceptance.ratio_factor_max is not None:
        result.checks.append(_check("crossing_ratio_factor", factor, config.acceptance.ratio_factor_max))
    return result


def tensorization_residual(problem: EnvelopeProblem, packet: Packet) -> float:
    """
    ||u_2d(T) - u_1(T) (x) u_2(T)|| / ||u_2d(T)|| for a separable potential and
    product initial data; delta = 0 so the logarithm splits exactly.
    """
    grid = problem.grid
    if grid.dims != 2:
        raise PhysicalConstraintError("Tensorization is checked on two-dimensional problems")
    T = problem.output_times[-1]
    full = evolve_envelope(
        replace(problem, u0=sample_function(grid, packet.profile), delta=0.0, output_times=(T,))
    ).final

    factors = []
    for axis in range(2):
        axis_grid = make_grid([(grid.lower[axis], grid.upper[axis])], [grid.counts[axis]])
        axis_problem = replace(
            problem,
            u0=sample_function(axis_grid, axis_profile(packet.profile, axis)),
            trajectory=axis_flow(problem.trajectory, axis),
            delta=0.0,
            output_times=(T,),
        )
        factors.append(evolve_envelope(axis_problem).final.values)

    product = np.multiply.outer(factors[0], factors[1])
    return l2_distance(full, full.with_values(product)) / l2_norm(full)


def _index_label(beta: tuple[int, ...]) -> str:
    return ",".join(str(b) for b in beta)


def growth_profile(fields: Sequence[WaveField], times: Sequence[float], order: int = GROWTH_ORDER) -> dict:
    """
    ||y^beta u(t)|| and ||d^beta u(t)|| for every |beta| <= order, each with a
    fitted envelope C exp(rate t). max_growth_rate is inf when some series has
    no envelope (a single time, or a vanishing norm).
    """
    dims = fields[0].grid.dims
    indices = [beta for beta in np.ndindex(*(order + 1,) * dims) if sum(beta) <= order]
    series = {
        "moments": {_index_label(beta): [moment_norm(f, beta) for f in fields] for beta in indices},
        "derivatives": {_index_label(beta): [derivative_norm(f, beta) for f in fields] for beta in indices},
    }
    envelopes, rates = {}, []
    for kind, norms in series.items():
        for label, values in norms.items():
            try:
                constant, rate = fit_exponential_envelope(times, values)
            except FitError as exc:
                logger.warning(f"No growth envelope for {kind}[{label}]: {exc}")
                rates.append(float("inf"))
                continue
            envelopes[f"{kind}[{label}]"] = {"constant": constant, "rate": rate}
            rates.append(rate)
    return {**series, "growth": envelopes, "max_growth_rate": max(rates)}


def run_gaussian(config: RunConfig) -> ScenarioResult:
    """Closure along the packet path, checked against the quadratic-mode envelope PDE."""
    packet = config.packet_specs()[0]
    profile = packet.profile
    potential = config.potential_spec()
    trajectory = integrate_flow(potential, packet.q0, packet.p0, config.T, min(config.flow_dt or config.dt, config.T))
    state = build_closure(trajectory, profile.a0, profile.b0, config.lam, config.T, config.dt)
    acceptance = config.acceptance
    result = ScenarioResult("gaussian", trajectories=[trajectory], closure=state)
    zero = np.zeros(state.dims, dtype=int)

    times = config.measurement_times
    masses = [gaussian_l2_moment(state, t, zero) for t in state.times]
    constant, rate = fit_exponential_envelope(state.times, state.width_energy())
    result.metadata.update({
        "tau_final": state.tau[-1].tolist(),
        "tau_min": float(state.tau.min()),
        "closure_residual": closure_residual(state),
        "closure_mass_drift": float(np.max(np.abs(np.array(masses) - masses[0])) / masses[0]),
        "width_growth_constant": constant,
        "width_growth_rate": rate,
    })

    y_grid = config.envelope.build_grid(state.dims)
    u0 = sample_function(y_grid, profile)
    problem = _envelope_problem(config, trajectory, u0, config.lam, config.delta)
    run = evolve_envelope(problem)
    differences = [l2_distance(synthesize_envelope(state, t, y_grid), run.fields[n]) for n, t in enumerate(times)]
    result.metadata["closure_pde_error"] = max(differences)
    result.metadata["pde_mass_drift"] = run.mass_drift

    growth = growth_profile(run.fields, times)
    result.metadata.update(growth)

    if acceptance.closure_pde_max is not None:
        result.checks.append(_check("closure_vs_pde", max(differences), acceptance.closure_pde_max))
    if acceptance.residual_max is not None:
        result.checks.append(_check("closure_residual", result.metadata["closure_residual"], acceptance.residual_max))
    if acceptance.tau_final is not None:
        offset = float(np.max(np.abs(state.tau[-1] - acceptance.tau_final)))
        result.checks.append(_check("tau_final", offset, acceptance.tau_tolerance))
    result.checks.append(_check("tau_positive", float(state.tau.min()), lower=0.0))
    if acceptance.mass_drift_max is not None:
        result.checks.append(_check("mass_drift", run.mass_drift, acceptance.mass_drift_max))
    if acceptance.growth_rate_max is not None:
        result.checks.append(_check("moment_growth", growth["max_growth_rate"], acceptance.growth_rate_max))
    if acceptance.gausson_max is not None:
        modulus0 = np.abs(u0.values)
        deviation = max(
            float(np.sqrt(np.sum((np.abs(f.values) - modulus0) ** 2) * y_grid.cell_volume)) for f in run.fields
        )
        result.metadata["gausson_deviation"] = deviation
        result.checks.append(_check("gausson_equilibrium", deviation, acceptance.gausson_max))
    if acceptance.gauge_max is not None:
        residual = gauge_scaling_check(problem, 2.0)
        result.metadata["gauge_residual"] = residual
        result.checks.append(_check("gauge_residual", residual, acceptance.gauge_max))
    if acceptance.order_min is not None:
        order = self_convergence_order(problem)
        result.metadata["self_convergence_order"] = order
        result.checks.append(_check("self_convergence_order", order, lower=acceptance.order_min))
    if acceptance.tensorization_max is not None:
        residual = tensorization_residual(problem, packet)
        result.metadata["tensorization_residual"] = residual
        result.checks.append(_check("tensorization_residual", residual, acceptance.tensorization_max))
    if config.snapshots:
        result.snapshots.update({f"pde_t{t:g}": run.fields[n] for n, t in enumerate(times)})
    return result


RUNNERS = {
    "classical": run_classical,
    "gaussian": run_gaussian,
    "single": run_single,
    "superpose": run_superpose,
    "sweep": run_sweep,
    "crossing": run_crossing,
}


def run_scenario(config: RunConfig) -> ScenarioResult:
    config.check_physical()
    logger.info(f"Running scenario '{config.scenario}' ({config.name})")
    return RUNNERS[config.scenario](config)


def write_outputs(result: ScenarioResult, config: RunConfig, directory: str | Path) -> Path:
    """Report pair, trajectory/closure CSVs and optional snapshots; called only after a successful run."""
    directory = Path(directory)
    metadata = {"name": config.name, "config": config.model_dump(mode="json"), **result.metadata}
    emit_report(result.records, result.fits, directory, config.scenario, result.checks, metadata)
    for index, trajectory in enumerate(result.trajectories):
        save_trajectory(trajectory, directory / f"trajectory_{index + 1}.csv")
    if result.closure is not None:
        save_closure(result.closure, directory / "closure.csv")
    for name, snapshot in sorted(result.snapshots.items()):
        save_field(snapshot, directory / "snapshots" / f"{name}.csv")
    return directory
