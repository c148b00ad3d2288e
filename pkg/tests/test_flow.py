import numpy as np
import pytest

from attractor_lab.flow import (
    FlowRun,
    check_cocycle,
    continuity_bound,
    flow_property,
    flow_S,
    flow_S_traj,
    ito_residual,
    solve_Z,
    tridiag_matvec,
)
from attractor_lab.gelfand import DriftSpec, Kind, Mesh1D, TripleSpec, dirichlet_basis
from attractor_lab.noise import make_environment, power_law_eigenvalues
from attractor_lab.stepper import StepperConfig, integrate_drift

MESH = Mesh1D(1.0, 16)
PLAP = TripleSpec(Kind.PLAPLACE, 3.0, MESH)


def make_run(mu=0.5, sigma=1.0, eta=0.0, seed=0, dt=0.01):
    env = make_environment(seed, -16.0, 3.0, dt, mu=mu, eigenvalues=power_law_eigenvalues(6),
                           basis=dirichlet_basis(PLAP, 6))
    return FlowRun(DriftSpec(PLAP, eta=eta, mu=mu, sigma=sigma), env, window=(-6.0, 2.0))


@pytest.fixture(scope="module")
def run():
    return make_run()


@pytest.fixture(scope="module")
def x0():
    return np.sin(3 * np.pi * MESH.nodes) * 2.0


def test_trivial_noise_reproduces_the_deterministic_solver_bitwise(x0):
    env = make_environment(0, -4.0, 2.0, 0.01)
    drift = DriftSpec(PLAP, eta=0.5)
    r = FlowRun(drift, env, window=(-3.0, 2.0))
    direct = integrate_drift(drift, x0, -1.0, 1.0, StepperConfig(dt=0.01)).final
    assert np.array_equal(flow_S(-1.0, 1.0, x0, r), direct)


def test_identity_at_equal_times(run, x0):
    assert np.array_equal(flow_S(-1.0, -1.0, x0, run), x0)


def test_conjugation_round_trip(run, x0):
    c = run.conjugation
    assert np.allclose(c.T_inv(0.5, c.T(0.5, x0)), x0, atol=1e-13)


@pytest.mark.parametrize("s,t", [(-4.0, 0.0), (-1.0, 1.5)])
def test_flow_property(run, x0, s, t):
    rep = flow_property(run, s, t, x0)
    assert rep.defect <= rep.budget


def test_flow_property_for_the_transformed_flow(run, x0):
    rep = flow_property(run, -2.0, 1.0, x0, which="Z")
    assert rep.defect <= rep.budget


@pytest.mark.parametrize("s", [0.0, -1.0, -3.0])
def test_cocycle(run, x0, s):
    assert check_cocycle(run, s, 1.0, x0) <= 5 * (run.pullback_tol + 1e-8)


def test_cocycle_exact_at_zero(run, x0):
    assert check_cocycle(run, 0.0, 1.0, x0) == 0.0


def test_batched_flow_matches_single(run, rng):
    X = rng.normal(size=(3, MESH.n))
    batch = flow_S(-2.0, 0.0, X, run)
    for i in range(3):
        assert np.allclose(batch[i], flow_S(-2.0, 0.0, X[i], run), atol=1e-12)


def test_flow_is_lipschitz_within_the_continuity_bound(run, rng):
    x = rng.normal(size=MESH.n)
    y = x + 0.1 * rng.normal(size=MESH.n)
    s, t = -2.0, 0.5
    d0 = PLAP.h_norm_array(x - y)
    d1 = PLAP.h_norm_array(flow_S(s, t, x, run) - flow_S(s, t, y, run))
    assert d1 <= continuity_bound(run, s, t, 0.0) * d0 * (1 + 1e-6)


def test_transformed_solution_consistent_with_solve_Z(run, x0):
    z = solve_Z(-1.0, 0.0, run.conjugation.T(-1.0, x0), run)
    s = flow_S(-1.0, 0.0, x0, run)
    assert np.allclose(run.conjugation.T_inv(0.0, z), s, atol=1e-12)


def test_trajectory_recording(run, x0):
    traj = flow_S_traj(-1.0, 0.0, x0, run)
    assert traj.times[0] == pytest.approx(-1.0) and traj.times[-1] == pytest.approx(0.0)
    assert np.allclose(traj.states[0], x0)


def test_ito_residual_shrinks_with_the_step():
    coarse = make_run(seed=2, dt=0.004)
    fine = make_run(seed=2, dt=0.001)
    x = np.sin(np.pi * MESH.nodes)
    r_coarse = ito_residual(coarse, -1.0, 0.0, x)
    r_fine = ito_residual(fine, -1.0, 0.0, x)
    assert r_fine < r_coarse


def test_flow_outside_window_rejected(run, x0):
    with pytest.raises(ValueError):
        flow_S(-10.0, 0.0, x0, run)


def test_tridiag_matvec():
    lo, di, up = np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0, 5.0]), np.array([6.0, 7.0, 0.0])
    x = np.array([1.0, -1.0, 2.0])
    A = np.diag(di) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)
    assert np.allclose(tridiag_matvec(lo, di, up, x), A @ x)
