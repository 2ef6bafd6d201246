import numpy as np
import pytest

from classical import integrate_flow
from core import WaveField, l2_distance, l2_norm, make_grid, sample_function
from envelope import SplitRun
from errors import DomainError, FrameError, PhysicalConstraintError, ResolutionError
from gaussian import build_closure
from lab import (
    ClosureEnvelope,
    GaussianProfile,
    Packet,
    SampledEnvelope,
    SechProfile,
    SemiclassicalProblem,
    assemble_approx,
    check_resolution,
    coherent_init,
    evolve_exact_envelope,
    evolve_logNLS,
    gausson,
    lab_gauge_residual,
    lab_grid,
    lab_tensorization_residual,
    required_counts,
)
from potentials import make_potential

B0 = np.pi ** -0.25
PROFILE = GaussianProfile(a0=(1.0,), b0=B0)


def free_packet(eps, q0, p0, t):
    """Exact free coherent state with the normalized Gaussian profile."""
    def psi(x):
        spread = 1 + 1j * t
        envelope = B0 / np.sqrt(spread) * np.exp(-(x - q0 - p0 * t) ** 2 / (2 * eps * spread))
        return eps ** -0.25 * envelope * np.exp(1j * (p0 * (x - q0) - p0 ** 2 * t / 2) / eps)
    return psi


def test_gausson_profile():
    profile = gausson(-1.0)
    assert profile.a0 == (2.0,)
    assert profile.b0 == pytest.approx(np.e)
    with pytest.raises(PhysicalConstraintError):
        gausson(0.5)


def test_sech_profile_is_separable():
    profile = SechProfile(width=(1.0, 2.0), b0=1.0)
    assert profile(np.array(0.0), np.array(2.0)) == pytest.approx(1 / np.cosh(1.0))
    assert profile.widths == (1.0, 2.0)


def test_required_counts_resolve_oscillation_and_envelope():
    assert required_counts([(-1.0, 1.0)], 0.01, 1.0) == (2048,)
    # no momentum: only dx <= sqrt(eps)/4 applies
    assert required_counts([(-1.0, 1.0)], 0.01, 0.0) == (128,)


def test_coarse_grid_is_rejected():
    with pytest.raises(ResolutionError):
        check_resolution(make_grid([(-1.0, 1.0)], [64]), 0.01, 1.0)


def test_lab_grid_sizes_itself():
    grid = lab_grid([(-6.0, 6.0)], 0.1, 1.0)
    assert grid.counts == (1024,)


def test_coherent_state_is_normalized():
    grid = lab_grid([(-3.0, 3.0)], 0.05, 2.0)
    psi0 = coherent_init([Packet(PROFILE, (0.0,), (2.0,))], 0.05, grid)
    assert l2_norm(psi0) == pytest.approx(1.0, abs=1e-12)


def test_free_lab_solution_matches_closed_form():
    eps, T = 0.1, 0.5
    problem = SemiclassicalProblem(
        eps=eps, lam=0.0, potential=make_potential("zero"), packets=(Packet(PROFILE, (0.0,), (1.0,)),),
        T=T, dt=1e-3, grid=lab_grid([(-6.0, 6.0)], eps, 1.0), output_times=(0.25, T),
    )
    run = evolve_logNLS(problem)
    for t, field in zip(run.times, run.fields):
        assert l2_distance(field, sample_function(problem.grid, free_packet(eps, 0.0, 1.0, t))) < 1e-9
    assert run.energy_drift < 1e-10


def test_closure_assembly_matches_closed_form():
    eps, T = 0.1, 0.5
    trajectory = integrate_flow(make_potential("zero"), [0.0], [1.0], T, 1e-4)
    state = build_closure(trajectory, [1.0], B0, 0.0, T, 1e-3)
    grid = lab_grid([(-6.0, 6.0)], eps, 1.0)
    approx = assemble_approx(trajectory, ClosureEnvelope(state), eps, grid, [T], mode="linear")
    assert l2_distance(approx[0], sample_function(grid, free_packet(eps, 0.0, 1.0, T))) < 1e-8


def test_moving_frame_reproduces_lab_solution():
    eps, T = 0.1, 0.5
    problem = SemiclassicalProblem(
        eps=eps, lam=-1.0, potential=make_potential("cosine", coefficients=[1.0]),
        packets=(Packet(PROFILE, (0.5,), (0.0,)),), T=T, dt=2.5e-4,
        grid=make_grid([(-4.0, 5.0)], [256]),
    )
    lab = evolve_logNLS(problem)
    envelope = evolve_exact_envelope(problem, make_grid([(-16.0, 16.0)], [256]))
    approx = assemble_approx(
        problem.trajectories[0], SampledEnvelope(envelope), eps, problem.grid, [T], lam=-1.0, mode="critical"
    )
    assert l2_distance(lab.final, approx[0]) < 1e-5
    assert lab.energy_drift < 1e-4


def test_moving_frame_needs_one_packet():
    problem = SemiclassicalProblem(
        eps=0.1, lam=-1.0, potential=make_potential("zero"),
        packets=(Packet(PROFILE, (1.0,), (0.0,)), Packet(PROFILE, (-1.0,), (0.0,))), T=0.1, dt=1e-3,
    )
    with pytest.raises(FrameError):
        evolve_exact_envelope(problem, make_grid([(-16.0, 16.0)], [256]))


def test_box_must_cover_packet_path():
    problem = SemiclassicalProblem(
        eps=0.1, lam=0.0, potential=make_potential("zero"), packets=(Packet(PROFILE, (0.0,), (1.0,)),),
        T=3.0, dt=1e-3, grid=lab_grid([(-6.0, 6.0)], 0.1, 1.0),
    )
    with pytest.raises(DomainError):
        problem.check_grid()
    without_grid = SemiclassicalProblem(
        eps=0.1, lam=0.0, potential=make_potential("zero"), packets=(Packet(PROFILE, (0.0,), (1.0,)),),
        T=1.0, dt=1e-3,
    )
    with pytest.raises(PhysicalConstraintError):
        without_grid.check_grid()


def test_precomputed_flows_must_match_packets():
    flow = integrate_flow(make_potential("zero"), [0.0], [1.0], 0.5, 1e-3)
    problem = SemiclassicalProblem(
        eps=0.1, lam=0.0, potential=make_potential("zero"), packets=(Packet(PROFILE, (0.0,), (1.0,)),),
        T=1.0, dt=1e-3, flows=(flow,),
    )
    with pytest.raises(PhysicalConstraintError):
        problem.trajectories


def test_sampled_envelope_interpolates_band_limited_data():
    grid = make_grid([(-16.0, 16.0)], [256])
    field = sample_function(grid, lambda y: B0 * np.exp(-y ** 2 / 2))
    source = SampledEnvelope(SplitRun((0.0,), (field,), 0.0, 0.0, 1e-3))
    np.testing.assert_allclose(source.on_axes(0.0, grid.axes), field.values, atol=1e-13)
    y = np.array([-20.0, -0.3, 0.77, 3.14159, 16.5])
    expected = np.where(np.abs(y) < 16, B0 * np.exp(-y ** 2 / 2), 0.0)
    np.testing.assert_allclose(source.on_axes(0.0, [y]), expected, atol=1e-12)


def test_sampled_envelope_refuses_mass_at_the_edge():
    grid = make_grid([(-2.0, 2.0)], [64])
    field = WaveField(grid, np.ones(64))
    source = SampledEnvelope(SplitRun((0.0,), (field,), 0.0, 0.0, 1e-3))
    with pytest.raises(DomainError):
        source.on_axes(0.0, grid.axes)


def test_separated_packets_add_their_masses():
    eps = 0.01
    grid = lab_grid([(-4.0, 4.0)], eps, 1.0)
    psi0 = coherent_init([Packet(PROFILE, (-2.0,), (1.0,)), Packet(PROFILE, (2.0,), (-1.0,))], eps, grid)
    assert l2_norm(psi0) ** 2 == pytest.approx(2.0, abs=1e-10)


def test_lab_gauge_scaling_is_exact_for_the_scheme():
    eps = 0.05
    problem = SemiclassicalProblem(
        eps=eps, lam=-1.0, potential=make_potential("cosine", coefficients=[1.0]),
        packets=(Packet(PROFILE, (0.5,), (0.5,)),), T=0.2, dt=1e-3,
        grid=lab_grid([(-2.5, 3.5)], eps, 1.0),
    )
    assert lab_gauge_residual(problem, 2.0) < 1e-9
    with pytest.raises(PhysicalConstraintError):
        lab_gauge_residual(problem, 0.0)


def test_lab_solution_tensorizes_in_two_dimensions():
    eps = 0.1
    problem = SemiclassicalProblem(
        eps=eps, lam=-1.0, potential=make_potential("cosine", dims=2, coefficients=[1.0, 0.5]),
        packets=(Packet(GaussianProfile(a0=(2.0, 4.0), b0=0.6), (0.5, -0.2), (0.0, 0.0)),), T=0.2, dt=1e-3,
        grid=make_grid([(-3.5, 3.5), (-3.5, 3.5)], [128, 128]),
    )
    assert lab_tensorization_residual(problem) < 1e-10
    with pytest.raises(PhysicalConstraintError):
        lab_tensorization_residual(SemiclassicalProblem(
            eps=eps, lam=-1.0, potential=make_potential("zero"), packets=(Packet(PROFILE, (0.0,), (0.0,)),),
            T=0.2, dt=1e-3, grid=lab_grid([(-4.0, 4.0)], eps, 0.0),
        ))
