import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attractor_lab.gelfand import Kind, Mesh1D, TripleSpec, dirichlet_basis
from attractor_lab.noise import (
    BrownianPath,
    WindowError,
    grid_index,
    make_environment,
    ou_stationary,
    power_law_eigenvalues,
    sample_brownian,
    sample_trace_class_wiener,
    wiener_shift,
)

TR = TripleSpec(Kind.PLAPLACE, 3.0, Mesh1D(1.0, 16))


def test_grid_index_round_trip_and_rejection():
    assert grid_index(-1.25, 0.05) == -25
    with pytest.raises(ValueError):
        grid_index(0.013, 0.01)


def test_brownian_path_is_pinned_at_zero_and_deterministic():
    a = sample_brownian(7, -3.0, 2.0, 0.01)
    b = sample_brownian(7, -3.0, 2.0, 0.01)
    assert a(0.0) == 0.0
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_brownian(8, -3.0, 2.0, 0.01).values)


def test_extending_the_window_keeps_the_common_part():
    short = sample_brownian(1, -2.0, 1.0, 0.01)
    long = sample_brownian(1, -5.0, 3.0, 0.01)
    for t in (-2.0, -0.37, 0.0, 0.5, 1.0):
        assert short(t) == long(t)


def test_brownian_increment_variance():
    b = sample_brownian(0, -500.0, 500.0, 0.01)
    inc = np.diff(b.values)
    assert np.var(inc) / 0.01 == pytest.approx(1.0, abs=0.02)


@given(h=st.integers(-150, 150), t=st.integers(-100, 100))
def test_wiener_shift_identity(h, t):
    path = sample_brownian(3, -3.0, 3.0, 0.01)
    hs, ts = h * 0.01, t * 0.01
    shifted = wiener_shift(path, hs)
    assert shifted(ts) == pytest.approx(path(ts + hs) - path(hs), abs=1e-12)


def test_shift_composes():
    path = sample_brownian(3, -3.0, 3.0, 0.01)
    a = path.shift(0.4).shift(-0.7)
    b = path.shift(-0.3)
    for t in (-1.0, 0.0, 0.5):
        assert a(t) == pytest.approx(b(t), abs=1e-12)


def test_off_grid_shift_rejected():
    with pytest.raises(ValueError):
        sample_brownian(0, -1.0, 1.0, 0.01).shift(0.005)


def test_ou_is_pinned_to_the_path_and_has_the_right_variance():
    beta = sample_brownian(11, -20.0, 30000.0, 0.01)
    ou = ou_stationary(beta, 0.5, burn_in=20.0)
    assert ou.t_min == pytest.approx(0.0)
    z = ou.z_values[::300]
    assert np.var(z) == pytest.approx(0.5, abs=0.03)
    lag = 100
    corr = np.corrcoef(ou.z_values[:-lag:50], ou.z_values[lag::50])[0, 1]
    assert corr == pytest.approx(math.exp(-1.0), abs=0.05)
    assert np.allclose(ou.mu_values, np.exp(-0.5 * ou.z_values))


def test_ou_burn_in_must_fit():
    beta = sample_brownian(0, -1.0, 1.0, 0.01)
    with pytest.raises(ValueError):
        ou_stationary(beta, 1.0, burn_in=5.0)


def test_trace_class_wiener_second_moment():
    q = power_law_eigenvalues(8)
    B = dirichlet_basis(TR, 8)
    sq = []
    for seed in range(400):
        w = sample_trace_class_wiener(seed, q, B, (0.0, 1.0), 0.05)
        sq.append(TR.h_norm_array(w(1.0)) ** 2)
    assert np.mean(sq) == pytest.approx(q.sum(), rel=0.15)


def test_wiener_increments_match_path_differences():
    w = sample_trace_class_wiener(2, power_law_eigenvalues(4), dirichlet_basis(TR, 4), (-1.0, 1.0), 0.1)
    inc = w.increments()
    assert np.allclose(inc[3], w(-1.0 + 0.4) - w(-1.0 + 0.3))


def test_mismatched_basis_rejected():
    with pytest.raises(ValueError):
        sample_trace_class_wiener(0, power_law_eigenvalues(3), dirichlet_basis(TR, 4), (-1.0, 1.0), 0.1)


def test_power_law_needs_summable_decay():
    with pytest.raises(ValueError):
        power_law_eigenvalues(4, gamma=1.0)


@pytest.fixture(scope="module")
def env():
    return make_environment(5, -4.0, 3.0, 0.01, mu=0.7, eigenvalues=power_law_eigenvalues(4),
                            basis=dirichlet_basis(TR, 4))


def test_environment_window_and_errors(env):
    assert env.t_min == -4.0 and env.t_max == 3.0
    assert env.mu_t(0.0) == pytest.approx(math.exp(-0.7 * env.z(0.0)))
    with pytest.raises(WindowError):
        env.z(3.5)
    with pytest.raises(WindowError):
        env.restrict(-5.0, 0.0)


def test_environment_shift_moves_everything(env):
    h = 1.3
    s = env.shift(h)
    assert s.t_min == pytest.approx(env.t_min - h)
    for t in (-2.0, 0.0, 1.0):
        assert s.beta(t) == pytest.approx(env.beta(t + h) - env.beta(h), abs=1e-12)
        assert np.allclose(s.W(t), env.W(t + h) - env.W(h), atol=1e-12)
        # the OU functional is shift-covariant once burn-in transients have died out
        assert s.z(t) == pytest.approx(env.z(t + h), abs=1e-6)


def test_coarsen_keeps_grid_values(env):
    c = env.coarsen(4)
    assert c.dt == pytest.approx(0.04)
    assert c.beta(0.4) == env.beta(0.4)
    assert np.array_equal(c.W(-0.8), env.W(-0.8))


def test_environment_requires_negative_start():
    with pytest.raises(ValueError):
        make_environment(0, 5.0, 6.0, 0.01, burn_in=1.0)


def test_manifest_lists_noise_parameters(env):
    m = env.manifest()
    assert m["seed"] == 5 and m["modes"] == 4 and m["mu"] == 0.7


def test_mu_square_moment():
    mu = 0.6
    beta = sample_brownian(4, -20.0, 30000.0, 0.01)
    ou = ou_stationary(beta, mu)
    m2 = np.mean(ou.mu_values[::300] ** 2)
    assert m2 == pytest.approx(math.exp(mu ** 2), rel=0.1)


def test_brownian_path_is_read_only():
    b = BrownianPath(0, 0.1, np.zeros(3))
    with pytest.raises(ValueError):
        b.values[0] = 1.0
