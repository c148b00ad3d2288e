import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from attractor_lab.gelfand import DriftSpec, Kind, Mesh1D, TripleSpec, dirichlet_basis, dirichlet_eigenvalues
from attractor_lab.stepper import (
    NewtonDiverged,
    RandomPDEProblem,
    StepperConfig,
    integrate,
    integrate_drift,
    step_backward_euler,
    trajectory_from_binary,
    trajectory_to_binary,
    trajectory_to_csv,
)

MESH = Mesh1D(1.0, 24)
HEAT = TripleSpec(Kind.RDE, 2.0, MESH)
PLAP = TripleSpec(Kind.PLAPLACE, 3.0, MESH)
PME = TripleSpec(Kind.PME, 3.0, MESH)


def test_heat_mode_decays_by_the_discrete_factor():
    """Backward Euler multiplies an eigenmode by (1 + λ dt)^{-1} per step."""
    e1 = dirichlet_basis(HEAT, 1)[0]
    lam = dirichlet_eigenvalues(MESH, 1)[0]
    dt, steps = 0.01, 50
    traj = integrate_drift(DriftSpec(HEAT), e1, 0.0, dt * steps, StepperConfig(dt=dt))
    assert np.allclose(traj.final, e1 * (1 + lam * dt) ** (-steps), rtol=1e-9, atol=1e-14)


def test_batch_equals_single_runs_bitwise(rng):
    drift = DriftSpec(PLAP, eta=1.0)
    X = rng.normal(size=(4, MESH.n)) * np.array([[0.1], [1.0], [3.0], [10.0]])
    cfg = StepperConfig(dt=0.01)
    batch = integrate_drift(drift, X, 0.0, 0.5, cfg).final
    for i in range(4):
        single = integrate_drift(drift, X[i], 0.0, 0.5, cfg).final
        assert np.array_equal(batch[i], single)


def test_runs_are_deterministic(rng):
    drift = DriftSpec(PME, eta=0.5)
    x = rng.normal(size=MESH.n)
    a = integrate_drift(drift, x, 0.0, 0.3, StepperConfig(dt=0.01)).states
    b = integrate_drift(drift, x, 0.0, 0.3, StepperConfig(dt=0.01)).states
    assert np.array_equal(a, b)


def test_step_solves_the_implicit_equation(rng):
    drift = DriftSpec(PLAP, eta=0.3)
    v = rng.normal(size=MESH.n)
    prob = RandomPDEProblem(drift.apply, 0.0, 0.1, v, PLAP, jac=drift.jacobian)
    w = step_backward_euler(prob, v, 0.0, 0.1, StepperConfig())
    res = w - 0.1 * drift.apply(0.1, w) - v
    assert PLAP.h_norm_array(res) < 1e-9


def test_forcing_enters_as_a_constant_on_each_step():
    g = np.full(MESH.n, 2.0)
    prob = RandomPDEProblem(lambda t, v: np.zeros_like(v), 0.0, 1.0, np.zeros(MESH.n), HEAT,
                            forcing=lambda t: g)
    traj = integrate(prob, StepperConfig(dt=0.1))
    assert np.allclose(traj.final, 2.0)


def test_last_step_shortened():
    traj = integrate_drift(DriftSpec(HEAT), np.ones(MESH.n), 0.0, 0.25, StepperConfig(dt=0.1))
    assert traj.times[-1] == 0.25 and len(traj.times) == 4


def test_record_options():
    cfg = StepperConfig(dt=0.01, record_stride=10)
    traj = integrate_drift(DriftSpec(HEAT), np.ones(MESH.n), 0.0, 1.0, cfg, record_from=0.5)
    assert traj.times[0] == pytest.approx(0.5) and traj.times[-1] == pytest.approx(1.0)
    at = integrate_drift(DriftSpec(HEAT), np.ones(MESH.n), 0.0, 1.0, StepperConfig(dt=0.01),
                         record_at=[0.2, 0.7])
    assert np.allclose(at.times, [0.2, 0.7])
    with pytest.raises(ValueError):
        integrate_drift(DriftSpec(HEAT), np.ones(MESH.n), 0.0, 1.0, StepperConfig(dt=0.01), record_at=[0.005])


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"newton_tol": -1.0}, {"damping": 1.5}, {"newton_max": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        StepperConfig(**kw)


def test_nonfinite_drift_raises():
    prob = RandomPDEProblem(lambda t, v: np.full_like(v, np.nan), 0.0, 0.1, np.ones(MESH.n), HEAT)
    with pytest.raises(NewtonDiverged):
        integrate(prob, StepperConfig(dt=0.05))


def test_newton_without_jacobian_uses_finite_differences(rng):
    drift = DriftSpec(PLAP, eta=0.2)
    x = rng.normal(size=MESH.n)
    prob = RandomPDEProblem(drift.apply, 0.0, 0.2, x, PLAP)
    fd = integrate(prob, StepperConfig(dt=0.02)).final
    exact = integrate_drift(drift, x, 0.0, 0.2, StepperConfig(dt=0.02)).final
    assert np.allclose(fd, exact, atol=1e-8)


small = arrays(np.float64, MESH.n, elements=st.floats(-3, 3, allow_nan=False, width=64))


@given(x=small, y=small)
def test_scheme_preserves_order(x, y):
    """The implicit step of a monotone-in-order drift keeps x ≤ y nodewise."""
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    drift = DriftSpec(PLAP, eta=1.0)
    out = integrate_drift(drift, np.stack([lo, hi]), 0.0, 0.1, StepperConfig(dt=0.02)).final
    assert np.all(out[0] <= out[1] + 1e-9)


@given(x=small, y=small)
def test_scheme_is_contractive_in_h(x, y):
    drift = DriftSpec(PLAP)
    out = integrate_drift(drift, np.stack([x, y]), 0.0, 0.1, StepperConfig(dt=0.02)).final
    assert PLAP.h_norm_array(out[0] - out[1]) <= PLAP.h_norm_array(x - y) * (1 + 1e-9) + 1e-12


def test_exports_round_trip(tmp_path, rng):
    traj = integrate_drift(DriftSpec(PLAP), rng.normal(size=MESH.n), 0.0, 0.1, StepperConfig(dt=0.02))
    csv_path = tmp_path / "traj.csv"
    trajectory_to_csv(traj, csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], traj.times) and np.array_equal(data[:, 1:], traj.states)
    bin_path = tmp_path / "traj.bin"
    trajectory_to_binary(traj, bin_path)
    t, s = trajectory_from_binary(bin_path)
    assert np.array_equal(t, traj.times) and np.array_equal(s, traj.states)


def test_binary_magic_checked(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"notatraj" + bytes(16))
    with pytest.raises(ValueError):
        trajectory_from_binary(p)


def test_member_and_field_access(rng):
    traj = integrate_drift(DriftSpec(HEAT), rng.normal(size=(3, MESH.n)), 0.0, 0.05, StepperConfig(dt=0.01))
    m = traj.member(1)
    assert m.states.shape == (len(traj.times), MESH.n)
    assert m.field(0).mesh == MESH
