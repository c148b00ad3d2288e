import json
import math

import numpy as np
import pytest

from attractor_lab.gelfand import Kind, Mesh1D, TripleSpec, dirichlet_basis, dirichlet_eigenvalues
from attractor_lab.noise import make_environment, power_law_eigenvalues
from attractor_lab.stationary import (
    WindowExhausted,
    birkhoff_average,
    contraction_bound,
    contraction_rate,
    ensemble_moment,
    pullback_stationary,
    solve_aux,
    stationarity_check,
    sublinear_growth,
    verify_contraction,
)
from attractor_lab.stepper import StepperConfig
from attractor_lab import oracles

MESH = Mesh1D(1.0, 16)
PLAP = TripleSpec(Kind.PLAPLACE, 3.0, MESH)
HEAT = TripleSpec(Kind.RDE, 2.0, MESH)


def env_for(triple, seed=0, t_min=-20.0, t_max=3.0, mu=0.0):
    return make_environment(seed, t_min, t_max, 0.01, mu=mu, eigenvalues=power_law_eigenvalues(6),
                            basis=dirichlet_basis(triple, 6))


@pytest.fixture(scope="module")
def plap_solution():
    env = env_for(PLAP)
    return env, pullback_stationary(PLAP, env, 1e-6, t_eval=(-2.0, 2.0))


def test_pullback_gaps_shrink_below_tolerance(plap_solution):
    _, sol = plap_solution
    assert sol.cauchy_gaps[-1] < 1e-6
    assert sol.pullback_starts == sorted(sol.pullback_starts, reverse=True)
    assert sol.u.times[0] == pytest.approx(-2.0) and sol.u.times[-1] == pytest.approx(2.0)


def test_pullback_forgets_the_initial_datum(plap_solution):
    env, sol = plap_solution
    other = pullback_stationary(PLAP, env, 1e-6, t_eval=(-2.0, 2.0), initial=np.full(MESH.n, 5.0))
    assert PLAP.h_norm_array(other.at(1.0) - sol.at(1.0)) < 3e-6


@pytest.mark.parametrize("h", [0.5, 1.0])
def test_stationarity(plap_solution, h):
    env, _ = plap_solution
    assert stationarity_check(PLAP, env, h, 1e-6) <= 3e-6


def test_solution_ledger_round_trips(plap_solution):
    _, sol = plap_solution
    data = json.loads(sol.to_json())
    assert data["tol"] == 1e-6
    assert len(data["starts"]) == len(sol.pullback_starts)


def test_window_exhaustion_reported():
    env = env_for(PLAP, t_min=-2.0)
    with pytest.raises(WindowExhausted):
        pullback_stationary(PLAP, env, 1e-14, t_eval=(-1.0, 0.0), max_doublings=4)


def test_heat_stationary_mode_variance_matches_closed_form():
    """For the linear drift each mode of u is OU with variance q_k/(2λ_k)."""
    q = power_law_eigenvalues(3)
    seeds = range(200)
    B = dirichlet_basis(HEAT, 3)
    m2 = ensemble_moment(HEAT, seeds, 2, eigenvalues=q, basis=B, dt=0.01, horizon=2.0, burn_in=1.0)
    expected = sum(oracles.stationary_mode_variance(qk, lk) for qk, lk in zip(q, dirichlet_eigenvalues(MESH, 3)))
    assert m2 == pytest.approx(expected, rel=0.2)


def test_birkhoff_and_growth(plap_solution):
    _, sol = plap_solution
    avg = birkhoff_average(sol, 2, [1.0, 2.0, 4.0])
    assert all(a > 0 for a in avg)
    growth = sublinear_growth(sol, 1, [1.0, 4.0])
    assert growth[1] <= growth[0] * 4
    with pytest.raises(WindowExhausted):
        birkhoff_average(sol, 2, [10.0])
    with pytest.raises(ValueError):
        birkhoff_average(sol, 0, [1.0])


def test_contraction_bound_formula():
    assert contraction_bound(PLAP, 2.0, 1.0, 0.0, 5.0) == pytest.approx(((0.5 * 2.0) * 1.0) ** -2)
    assert contraction_bound(HEAT, 2.0, 1.0, 0.0, 3.0) == pytest.approx(9.0 * math.exp(-2.0))


@pytest.mark.parametrize("s1,s2,t", [(-8.0, -6.0, -5.5), (-5.0, -5.0, 0.0), (-3.0, -1.0, 2.0)])
def test_trajectories_from_different_starts_contract(s1, s2, t, rng):
    env = env_for(PLAP, seed=4)
    x, y = rng.normal(size=(2, MESH.n)) * 4
    rep = verify_contraction(PLAP, env, x, y, s1, s2, t)
    assert rep.passed, rep


def test_heat_contraction_rate_is_twice_the_first_eigenvalue(rng):
    env = env_for(HEAT, seed=1)
    x, y = rng.normal(size=(2, MESH.n))
    rate = contraction_rate(HEAT, env, x, y, -3.0, 0.0, StepperConfig(dt=0.01))
    # backward Euler rate 2 log(1 + λ dt)/dt, dominated by the slowest mode at late times
    lam = dirichlet_eigenvalues(MESH, 1)[0]
    assert rate >= 2 * math.log1p(lam * 0.01) / 0.01 * 0.95


def test_solve_aux_rejects_windows_outside_the_path():
    env = env_for(PLAP, t_min=-2.0)
    with pytest.raises(WindowExhausted):
        solve_aux(PLAP, env, -5.0, 0.0, np.zeros(MESH.n), StepperConfig())
