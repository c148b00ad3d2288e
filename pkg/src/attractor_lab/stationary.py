"""Stationary solutions of du = M(u) dt + σ μ_t dW by pullback, and their checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gelfand import Field, Kind, TripleSpec, aux_drift, h_norm
from .noise import NoiseEnvironment, WindowError, grid_index, make_environment
from .stepper import RandomPDEProblem, StepperConfig, Trajectory, integrate


class PullbackNotCauchy(RuntimeError):
    """Successive pullback trajectories stopped getting closer."""


class WindowExhausted(WindowError):
    """The noise window does not reach back far enough."""


def steps_per(cfg: StepperConfig, noise: NoiseEnvironment) -> int:
    m = cfg.dt / noise.dt
    if abs(m - round(m)) > 1e-9 * m or round(m) < 1:
        raise ValueError("the stepper dt must be a positive multiple of the noise dt")
    return int(round(m))


class ForcingTable:
    """Per-step additive forcing σ Σ μ_{t_j} ΔW_j / dt on the stepper grid starting at t0.

    The sum runs over the fine noise steps inside each stepper step, with μ at
    the left endpoint of every fine step.
    """

    def __init__(self, noise: NoiseEnvironment, t0: float, t1: float, dt: float, sigma: float,
                 multiplier: bool = True):
        self.t0 = t0
        self.dt = dt
        w = noise.wiener
        n_steps = int(round((t1 - t0) / dt))
        if w is None or sigma == 0.0:
            self.table = None
            return
        m = int(round(dt / noise.dt))
        j0 = w.index(t0)
        inc = w.increments()[j0:j0 + n_steps * m]
        if inc.shape[0] != n_steps * m:
            raise WindowExhausted("Wiener path does not cover the integration interval")
        if multiplier and noise.mu != 0.0:
            k0 = noise.ou.index(t0)
            inc = inc * noise.ou.mu_values[k0:k0 + n_steps * m, None]
        self.table = sigma * inc.reshape(n_steps, m, -1).sum(axis=1) / dt

    def __call__(self, t: float) -> np.ndarray:
        return self.table[int(round((t - self.t0) / self.dt))]

    @property
    def active(self) -> bool:
        return self.table is not None


def _check_window(noise: NoiseEnvironment, s: float, t: float):
    if s < noise.t_min - 1e-9 or t > noise.t_max + 1e-9:
        raise WindowExhausted(f"[{s}, {t}] is not inside the noise window [{noise.t_min}, {noise.t_max}]")


def solve_aux(triple: TripleSpec, noise: NoiseEnvironment, s: float, t: float, x, cfg: StepperConfig,
              sigma: float = 1.0, **record) -> Trajectory:
    """X(·, s; ω)x for dX = M(X) dt + σ μ_t dW."""
    _check_window(noise, s, t)
    M = aux_drift(triple)
    forcing = ForcingTable(noise, s, t, cfg.dt, sigma)
    prob = RandomPDEProblem(M.apply, s, t, getattr(x, "values", x), triple,
                            forcing=forcing if forcing.active else None,
                            jac=M.jacobian, splitting=M.splitting)
    return integrate(prob, cfg, **record)


@dataclass
class StationarySolution:
    u: Trajectory
    pullback_starts: list
    cauchy_gaps: list
    noise: NoiseEnvironment
    triple: TripleSpec
    tol: float
    sigma: float
    t_eval: tuple

    def at(self, t: float) -> np.ndarray:
        return self.u.at(t)

    def field(self, t: float) -> Field:
        return Field(self.triple.mesh, self.at(t))

    def ledger(self) -> dict:
        return {"starts": [float(s) for s in self.pullback_starts],
                "gaps": [float(g) for g in self.cauchy_gaps], "tol": self.tol,
                "t_eval": list(self.t_eval), "noise": self.noise.manifest()}

    def to_json(self) -> str:
        return json.dumps(self.ledger(), indent=2)


StationarydSolution = StationarySolution


def pullback_stationary(triple: TripleSpec, noise: NoiseEnvironment, tol: float = 1e-6,
                        cfg: Optional[StepperConfig] = None, *, sigma: float = 1.0,
                        t_eval: Optional[tuple] = None, T0: float = 1.0, initial=None,
                        max_doublings: int = 30) -> StationarySolution:
    """u on ``t_eval`` as the limit of X(·, s_n)x with s_n = t_eval[0] − 2^n T0.

    Stops once the sup over the evaluation window of successive H-gaps drops
    below ``tol``; raises PullbackNotCauchy if the gap fails to decrease three
    doublings in a row.
    """
    cfg = cfg or StepperConfig(dt=noise.dt)
    steps_per(cfg, noise)
    t_lo, t_hi = t_eval if t_eval is not None else (noise.t_min, noise.t_max)
    if t_lo > t_hi:
        raise ValueError("empty evaluation window")
    x0 = np.zeros(triple.mesh.n) if initial is None else np.asarray(getattr(initial, "values", initial), float)
    starts, gaps = [], []
    prev = None
    worse = 0
    for n in range(max_doublings + 1):
        s = t_lo - (2 ** n) * T0
        if s < noise.t_min - 1e-9:
            raise WindowExhausted(f"pullback start {s} precedes the noise window (gaps so far {gaps})")
        traj = solve_aux(triple, noise, s, t_hi, x0, cfg, sigma=sigma, record_from=t_lo)
        starts.append(s)
        if prev is not None:
            gap = float(np.max(triple.h_norm_array(traj.states - prev.states)))
            if gaps and gap >= gaps[-1] and gap >= tol:
                worse += 1
                if worse >= 3:
                    raise PullbackNotCauchy(f"gaps {gaps + [gap]} stopped decreasing")
            else:
                worse = 0
            gaps.append(gap)
            if gap < tol:
                return StationarySolution(traj, starts, gaps, noise, triple, tol, sigma, (t_lo, t_hi))
        prev = traj
    raise PullbackNotCauchy(f"no convergence after {max_doublings} doublings: gaps {gaps}")


# ---------------------------------------------------------------------------


@dataclass
class ContractionReport:
    observed: float
    bound: float
    passed: bool
    slack: float
    c_hat: float


def contraction_bound(triple: TripleSpec, c_hat: float, t: float, s2: float, start_gap: float) -> float:
    """Squared-distance bound after time t − s2 for a strongly monotone drift with constant ĉ."""
    beta = triple.alpha / 2.0
    if beta == 1.0:
        return start_gap ** 2 * math.exp(-c_hat * (t - s2))
    if t == s2:
        return start_gap ** 2
    return ((beta - 1.0) * c_hat * (t - s2)) ** (-1.0 / (beta - 1.0))


def verify_contraction(triple: TripleSpec, noise: NoiseEnvironment, x, y, s1: float, s2: float, t: float,
                       cfg: Optional[StepperConfig] = None, *, sigma: float = 1.0,
                       c_hat: Optional[float] = None, slack: float = 0.1) -> ContractionReport:
    """Compare ‖X(t,s2)x − X(t,s1)y‖² with ((β−1)ĉ(t−s2))^{−1/(β−1)} (β = α/2 > 1).

    For α = 2 the bound is ‖x − X(s2,s1)y‖² e^{−ĉ(t−s2)}.
    """
    if not s1 <= s2 <= t:
        raise ValueError("need s1 <= s2 <= t")
    cfg = cfg or StepperConfig(dt=noise.dt)
    c = triple.strong_monotonicity_h if c_hat is None else c_hat
    xv = np.asarray(getattr(x, "values", x), float)
    yv = np.asarray(getattr(y, "values", y), float)
    ty = solve_aux(triple, noise, s1, t, yv, cfg, sigma=sigma, record_at=[s2, t])
    ys2, yt = ty.states[0], ty.states[-1]
    xt = solve_aux(triple, noise, s2, t, xv, cfg, sigma=sigma, record_at=[t]).states[-1]
    observed = float(triple.h_norm_array(xt - yt) ** 2)
    start_gap = float(triple.h_norm_array(xv - ys2))
    if triple.alpha > 2 and t > s2:
        bound = min(contraction_bound(triple, c, t, s2, start_gap), start_gap ** 2)
    else:
        bound = contraction_bound(triple, c, t, s2, start_gap)
    return ContractionReport(observed, bound, observed <= bound * (1 + slack) + 1e-14, slack, c)


def contraction_rate(triple: TripleSpec, noise: NoiseEnvironment, x, y, s: float, t: float,
                     cfg: Optional[StepperConfig] = None, sigma: float = 1.0) -> float:
    """Fitted exponential decay rate of ‖X(r,s)x − X(r,s)y‖² over r ∈ [s, t]."""
    cfg = cfg or StepperConfig(dt=noise.dt)
    tx = solve_aux(triple, noise, s, t, x, cfg, sigma=sigma)
    ty = solve_aux(triple, noise, s, t, y, cfg, sigma=sigma)
    d2 = triple.h_norm_array(tx.states - ty.states) ** 2
    keep = d2 > 1e-26
    slope = np.polyfit(tx.times[keep], np.log(d2[keep]), 1)[0]
    return float(-slope)


def stationarity_check(triple: TripleSpec, base_noise: NoiseEnvironment, h: float, tol: float = 1e-6,
                       cfg: Optional[StepperConfig] = None, *, sigma: float = 1.0,
                       base: Optional[StationarySolution] = None, t_eval: Optional[tuple] = None) -> float:
    """‖u_h(ω) − u_0(θ_h ω)‖_H, each side from its own pullback.

    The shifted pullback uses the evaluation window of the base run moved by
    −h, so both runs start from the same absolute times.
    """
    cfg = cfg or StepperConfig(dt=base_noise.dt)
    if base is None:
        window = t_eval if t_eval is not None else (min(0.0, h), max(0.0, h))
        base = pullback_stationary(triple, base_noise, tol, cfg, sigma=sigma, t_eval=window)
    lo, hi = base.t_eval
    shifted_noise = base_noise.shift(h)
    shifted = pullback_stationary(triple, shifted_noise, tol, cfg, sigma=sigma, t_eval=(lo - h, hi - h))
    return float(triple.h_norm_array(base.at(h) - shifted.at(0.0)))


def birkhoff_average(solution: StationarySolution, k: int, windows: Sequence[float]) -> list:
    """(1/T)∫_{t0}^{t0+T} ‖u_r‖_H^k dr for each T, with t0 the start of the evaluation window."""
    if k < 1:
        raise ValueError("k must be >= 1")
    traj = solution.u
    norms = solution.triple.h_norm_array(traj.states) ** k
    t0 = traj.times[0]
    out = []
    for T in windows:
        m = traj.times <= t0 + T + 1e-9
        if traj.times[m][-1] < t0 + T - 1e-9:
            raise WindowExhausted(f"window {T} exceeds the stored solution")
        out.append(float(np.trapezoid(norms[m], traj.times[m]) / T))
    return out


def sublinear_growth(solution: StationarySolution, k: int, windows: Sequence[float]) -> list:
    """max_{r ∈ [t0, t0+T]} ‖u_r‖_H^k / T for each T."""
    traj = solution.u
    norms = solution.triple.h_norm_array(traj.states) ** k
    t0 = traj.times[0]
    return [float(np.max(norms[traj.times <= t0 + T + 1e-9]) / T) for T in windows]


def ensemble_moment(triple: TripleSpec, seeds: Sequence[int], k: int, *, eigenvalues, basis, dt: float,
                    mu: float = 0.0, sigma: float = 1.0, horizon: float = 8.0, burn_in: float = 20.0) -> float:
    """Monte-Carlo E‖u_0‖_H^k: a single long pullback start per seed, all seeds in one batch.

    A start ``horizon`` before 0 from initial 0 leaves a transient of order
    e^{−ĉ·horizon} for α = 2; callers pick the horizon accordingly.
    """
    envs = [make_environment(int(s), -horizon, 0.0, dt, mu=mu, burn_in=burn_in,
                             eigenvalues=eigenvalues, basis=basis).restrict(-horizon, 0.0) for s in seeds]
    cfg = StepperConfig(dt=dt)
    tabs = [ForcingTable(e, -horizon, 0.0, dt, sigma) for e in envs]
    M = aux_drift(triple)

    def forcing(t):
        return np.stack([tb(t) for tb in tabs])

    prob = RandomPDEProblem(M.apply, -horizon, 0.0, np.zeros((len(envs), triple.mesh.n)), triple,
                            forcing=forcing, jac=M.jacobian, splitting=M.splitting)
    final = integrate(prob, cfg, record_at=[0.0]).states[-1]
    return float(np.mean(triple.h_norm_array(final) ** k))
