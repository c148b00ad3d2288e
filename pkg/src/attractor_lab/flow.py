"""Conjugated flows Z and S for dX = A(t,X) dt + μ X ∘ dβ + σ dW.

With μ_t = e^{−μ z_t} and u the stationary solution of du = M(u) dt + σ μ_t dW,
the process Z_t = μ_t X_t − u_t has no noise term left:

    dZ/dt = A_ω(t, Z) + μ z_t Z,
    A_ω(t, v) = μ_t A(t, μ_t^{-1}(v + u_t)) + μ z_t u_t − M(u_t).

Substituting Z = Z̃/k with k(s,t) = exp(−μ∫_s^t z) removes the linear term, so
Z̃ solves dZ̃/dt = k A_ω(t, Z̃/k). The flow is S(t,s) = T(t)^{-1} Z(t,s) T(s)
with T(t)y = μ_t y − u_t. On a mesh V and H coincide as sets, so A_ω never
needs the branch for u_t ∉ V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gelfand import DriftSpec, Field, aux_drift, check_assumptions
from .noise import NoiseEnvironment, WindowError, grid_index
from .stationary import StationarySolution, WindowExhausted, pullback_stationary
from .stepper import RandomPDEProblem, StepperConfig, Trajectory, integrate


def tridiag_matvec(lower, diag, upper, x):
    out = diag * x
    out[..., 1:] += lower[..., 1:] * x[..., :-1]
    out[..., :-1] += upper[..., :-1] * x[..., 1:]
    return out


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=float)


@dataclass
class ConjugationMap:
    noise: NoiseEnvironment
    u: StationarySolution

    def u_at(self, t: float) -> np.ndarray:
        traj = self.u.u
        t0, dt = traj.times[0], self.u_dt
        x = (t - t0) / dt
        i = int(round(x))
        if abs(x - i) < 1e-9:
            if not 0 <= i < len(traj.times):
                raise WindowExhausted(f"time {t} outside the stationary window")
            return traj.states[i]
        i = int(math.floor(x))
        if not 0 <= i < len(traj.times) - 1:
            raise WindowExhausted(f"time {t} outside the stationary window")
        w = x - i
        return (1 - w) * traj.states[i] + w * traj.states[i + 1]

    @property
    def u_dt(self) -> float:
        times = self.u.u.times
        return float(times[1] - times[0]) if len(times) > 1 else 1.0

    def T(self, t: float, y) -> np.ndarray:
        return self.noise.mu_t(t) * _values(y) - self.u_at(t)

    def T_inv(self, t: float, y) -> np.ndarray:
        return (_values(y) + self.u_at(t)) / self.noise.mu_t(t)


def zero_stationary(triple, noise: NoiseEnvironment, window, dt: float) -> StationarySolution:
    n = int(round((window[1] - window[0]) / dt))
    times = window[0] + dt * np.arange(n + 1)
    traj = Trajectory(times, np.zeros((n + 1, triple.mesh.n)), np.zeros(n, int), np.zeros(n), triple.mesh)
    return StationarySolution(traj, [], [], noise, triple, 0.0, 0.0, tuple(window))


class FlowRun:
    """All flow evaluations for one (drift, ω) pair on the window [t_lo, t_hi]."""

    def __init__(self, drift: DriftSpec, noise: NoiseEnvironment, cfg: Optional[StepperConfig] = None,
                 window: Optional[tuple] = None, pullback_tol: float = 1e-6,
                 stationary: Optional[StationarySolution] = None):
        self.drift = drift
        self.noise = noise
        self.cfg = cfg or StepperConfig(dt=noise.dt)
        self.window = tuple(window) if window is not None else (noise.t_min, noise.t_max)
        self.pullback_tol = pullback_tol
        triple = drift.triple
        if stationary is None:
            if noise.wiener is None or drift.sigma == 0.0:
                stationary = zero_stationary(triple, noise, self.window, self.cfg.dt)
            else:
                stationary = pullback_stationary(triple, noise, pullback_tol, self.cfg,
                                                 sigma=drift.sigma, t_eval=self.window)
        self.conjugation = ConjugationMap(noise, stationary)
        self.M = aux_drift(triple)
        self.trivial = drift.mu == 0.0 and not np.any(stationary.u.states)
        # cumulative trapezoid of z on the noise grid
        ou = noise.ou
        self._z_times = ou.times
        self._z_cum = np.concatenate([[0.0], np.cumsum(0.5 * (ou.z_values[1:] + ou.z_values[:-1]) * ou.dt)])
        self.trajectories = {}

    @property
    def triple(self):
        return self.drift.triple

    @property
    def mu(self) -> float:
        return self.drift.mu

    def _check(self, s, t):
        lo, hi = self.window
        if s < lo - 1e-9 or t > hi + 1e-9:
            raise WindowExhausted(f"[{s}, {t}] outside the flow window [{lo}, {hi}]")
        if s > t:
            raise ValueError("need s <= t")

    def z_integral(self, s: float, t: float) -> float:
        return float(np.interp(t, self._z_times, self._z_cum) - np.interp(s, self._z_times, self._z_cum))

    def k(self, s: float, t: float) -> float:
        """k(s,t) = exp(−μ ∫_s^t z_r dr)."""
        if self.mu == 0.0:
            return 1.0
        return math.exp(-self.mu * self.z_integral(s, t))

    @property
    def k_cache(self):
        return {"times": self._z_times, "cumulative_z": self._z_cum}

    # -- right-hand sides ---------------------------------------------------

    def a_omega(self, t: float, v: np.ndarray) -> np.ndarray:
        mu_t = self.noise.mu_t(t)
        u = self.conjugation.u_at(t)
        z = self.noise.z(t)
        out = mu_t * self.drift.apply(t, (v + u) / mu_t) - self.M.apply(t, u)
        if self.mu != 0.0:
            out = out + self.mu * z * u
        return out

    def transformed(self, t: float, v: np.ndarray) -> np.ndarray:
        out = self.a_omega(t, v)
        if self.mu != 0.0:
            out = out + self.mu * self.noise.z(t) * v
        return out

    def _k_problem(self, s: float, t: float, x: np.ndarray) -> RandomPDEProblem:
        drift = self.drift
        if self.trivial:
            return RandomPDEProblem(drift.apply, s, t, x, drift.triple, jac=drift.jacobian,
                                    splitting=drift.splitting)
        conj, noise = self.conjugation, self.noise

        def rhs(r, w):
            kk = self.k(s, r)
            return kk * self.a_omega(r, w / kk)

        def jac(r, w):
            kk = self.k(s, r)
            mu_r = noise.mu_t(r)
            return drift.jacobian(r, (w / kk + conj.u_at(r)) / mu_r)

        def splitting(r, w):
            kk = self.k(s, r)
            mu_r = noise.mu_t(r)
            u = conj.u_at(r)
            (lo, di, up), b0 = drift.splitting(r, (w / kk + u) / mu_r)
            bu = tridiag_matvec(lo, di, up, np.broadcast_to(u, w.shape).copy())
            rest = self.mu * noise.z(r) * u - self.M.apply(r, u) if self.mu != 0.0 else -self.M.apply(r, u)
            return (lo, di, up), kk * bu + kk * mu_r * b0 + kk * rest

        return RandomPDEProblem(rhs, s, t, x, drift.triple, jac=jac, splitting=splitting)

    def solve_Z_traj(self, s: float, t: float, x, **record) -> Trajectory:
        """Trajectory of Z̃ mapped back to Z at the recorded times."""
        self._check(s, t)
        xv = _values(x)
        traj = integrate(self._k_problem(s, t, xv), self.cfg, **record)
        if self.mu != 0.0:
            ks = np.array([self.k(s, r) for r in traj.times])
            shape = (-1,) + (1,) * (traj.states.ndim - 1)
            traj.states = traj.states / ks.reshape(shape)
        return traj


def transformed_drift(t: float, v, run: FlowRun) -> np.ndarray:
    """A_ω(t, v) + μ z_t v."""
    run._check(t, t)
    return run.transformed(t, _values(v))


def solve_Z(s: float, t: float, x, run: FlowRun, cfg: Optional[StepperConfig] = None) -> np.ndarray:
    if cfg is not None and cfg != run.cfg:
        run = _with_cfg(run, cfg)
    xv = _values(x)
    if s == t:
        run._check(s, t)
        return xv.copy()
    return run.solve_Z_traj(s, t, xv, record_at=[t]).states[-1]


def _with_cfg(run: FlowRun, cfg: StepperConfig) -> FlowRun:
    if abs(cfg.dt - run.cfg.dt) > 1e-15:
        raise ValueError("the flow stepper must use the grid of the stationary solution")
    other = object.__new__(FlowRun)
    other.__dict__.update(run.__dict__)
    other.cfg = cfg
    return other


def flow_S(s: float, t: float, x, run: FlowRun, cfg: Optional[StepperConfig] = None) -> np.ndarray:
    """S(t,s;ω)x = T(t)^{-1} Z(t,s) T(s) x (x may be a batch)."""
    if t == s:
        run._check(s, t)
        return np.array(x, dtype=float)
    conj = run.conjugation
    z = solve_Z(s, t, conj.T(s, x), run, cfg)
    return conj.T_inv(t, z)


def flow_S_traj(s: float, t: float, x, run: FlowRun, **record) -> Trajectory:
    conj = run.conjugation
    traj = run.solve_Z_traj(s, t, conj.T(s, x), **record)
    traj.states = np.stack([conj.T_inv(r, z) for r, z in zip(traj.times, traj.states)])
    return traj


# ---------------------------------------------------------------------------
# identity checks


def snap(run: FlowRun, t: float) -> float:
    """Nearest time on the stepper grid of the run."""
    t0 = run.conjugation.u.u.times[0]
    dt = run.cfg.dt
    return t0 + dt * round((t - t0) / dt)


@dataclass
class FlowPropertyReport:
    defect: float
    budget: float
    midpoint: float
    passed: bool


def flow_property(run: FlowRun, s: float, t: float, x, r: Optional[float] = None,
                  which: str = "S") -> FlowPropertyReport:
    """Compare the one-shot map over [s,t] with the composition through r.

    The budget is 5·(largest one-step H-increment along the one-shot path),
    i.e. 5·dt times the observed path speed.
    """
    r = snap(run, 0.5 * (s + t) if r is None else r)
    conj = run.conjugation
    x0 = conj.T(s, x) if which == "S" else _values(x)
    full = run.solve_Z_traj(s, t, x0)
    mid = run.solve_Z_traj(s, r, x0, record_at=[r]).states[-1]
    two = run.solve_Z_traj(r, t, mid, record_at=[t]).states[-1]
    one = full.states[-1]
    if which == "S":
        one, two = conj.T_inv(t, one), conj.T_inv(t, two)
    tr = run.triple
    inc = tr.h_norm_array(np.diff(full.states, axis=0))
    budget = 5.0 * float(np.max(inc)) if inc.size else 0.0
    defect = float(tr.h_norm_array(one - two))
    return FlowPropertyReport(defect, budget, r, defect <= budget)


def check_cocycle(run: FlowRun, s: float, t: float, x, cfg: Optional[StepperConfig] = None) -> float:
    """‖S(t,s;ω)x − S(t−s,0;θ_s ω)x‖_H with the shifted flow rebuilt from scratch."""
    if cfg is not None:
        run = _with_cfg(run, cfg)
    direct = flow_S(s, t, x, run)
    lo, hi = run.window
    shifted_noise = run.noise.shift(snap(run, s) if s != 0 else 0.0)
    shifted = FlowRun(run.drift, shifted_noise, run.cfg, window=(lo - s, hi - s),
                      pullback_tol=run.pullback_tol)
    other = flow_S(0.0, t - s, x, shifted)
    return float(run.triple.h_norm_array(direct - other))


def continuity_bound(run: FlowRun, s: float, t: float, C_hat: float) -> float:
    """Lipschitz constant (μ_s/μ_t)·exp(½∫_s^t (Ĉ + 2μ z_r) dr) of S(t,s) in H."""
    noise = run.noise
    expo = 0.5 * (C_hat * (t - s) + 2.0 * run.mu * run.z_integral(s, t))
    return noise.mu_t(s) / noise.mu_t(t) * math.exp(expo)


def ito_residual(run: FlowRun, s: float, t: float, x) -> float:
    """H-norm of X_t − X_s − ∫A(X)dr − μ∫X∘dβ − σ(W_t − W_s) along S(·,s)x.

    The drift integral is taken at right endpoints (as in the scheme) and the
    Stratonovich integral by midpoint values of X.
    """
    traj = flow_S_traj(s, t, x, run)
    X, times = traj.states, traj.times
    drift = run.drift
    noise = run.noise
    acc = X[-1] - X[0]
    for n in range(len(times) - 1):
        dt = times[n + 1] - times[n]
        acc = acc - dt * drift.apply(times[n + 1], X[n + 1])
        if run.mu != 0.0:
            db = noise.beta.at(times[n + 1]) - noise.beta.at(times[n])
            acc = acc - run.mu * 0.5 * (X[n] + X[n + 1]) * db
    if noise.wiener is not None and drift.sigma != 0.0:
        acc = acc - drift.sigma * (noise.W(snap(run, t)) - noise.W(snap(run, s)))
    return float(run.triple.h_norm_array(acc))
