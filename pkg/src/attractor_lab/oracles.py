"""Closed-form reference values: comparison ODEs, Barenblatt profiles, linear SDEs, rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import beta as beta_fn

from .gelfand import Kind, TripleSpec, dirichlet_basis, dirichlet_eigenvalues
from .noise import BrownianPath, NoiseEnvironment, grid_index
from .stepper import Trajectory

P_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# comparison ODE  y' = −h y^β


def comparison_closed_form(q0: float, beta: float, h_integral: float) -> float:
    """(q0^{−(β−1)} + (β−1)∫h)^{−1/(β−1)}, the solution of y' = −h y^β from q0."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    if q0 < 0 or h_integral < 0:
        raise ValueError("q0 and the integral of h must be nonnegative")
    if q0 == 0:
        return 0.0
    inv = 0.0 if math.isinf(q0) else q0 ** (-(beta - 1.0))
    denom = inv + (beta - 1.0) * h_integral
    if denom == 0:
        return math.inf
    try:
        return denom ** (-1.0 / (beta - 1.0))
    except OverflowError:
        return math.inf


def rk4(f: Callable[[float, float], float], y0: float, t0: float, t1: float, steps: int) -> float:
    """Classical fourth-order Runge–Kutta for a scalar ODE."""
    y, t = float(y0), float(t0)
    dt = (t1 - t0) / steps
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt * k1 / 2)
        k3 = f(t + dt / 2, y + dt * k2 / 2)
        k4 = f(t + dt, y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        t += dt
    return y


def rk4_vec(f, y0: np.ndarray, t0: float, t1: float, steps: int) -> np.ndarray:
    """RK4 applied elementwise to an array of independent scalar ODEs."""
    y = np.array(y0, dtype=float)
    dt = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt * k1 / 2)
        k3 = f(t + dt / 2, y + dt * k2 / 2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        t += dt
    return y


@dataclass
class AprioriResult:
    R: float
    a1: float
    s0: float


def apriori_bound(p: Callable[[float], float], h: Callable[[float], float], beta: float, t: float,
                  search_window: float = 100.0, grid: int = 4000, detail: bool = False):
    """R(t, p, h) bounding y(t) for y' ≤ −h y^β + p started at any s ≤ s₀.

    p is floored at δ = 1e-8. The point a₁ ≤ t solves
    ∫_{a₁}^t h = (2/(β−1))·(2p(t)/h(t))^{−(β−1)/β}; it is bracketed on a grid
    over [t − search_window, t] and refined by linear interpolation of the
    monotone cumulative integral. R = sup over [a₁−1, t] of (2p/h)^{1/β}, and
    the same a₁ serves as s₀.
    """
    if beta <= 1:
        raise ValueError("beta must exceed 1")

    def pf(r):
        return max(float(p(r)), P_FLOOR)

    target = (2.0 / (beta - 1.0)) * (2.0 * pf(t) / float(h(t))) ** (-(beta - 1.0) / beta)
    rs = np.linspace(t, t - search_window, grid + 1)
    hv = np.array([float(h(r)) for r in rs])
    if np.any(hv <= 0):
        raise ValueError("h must be positive on the search window")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (hv[1:] + hv[:-1]) * (rs[:-1] - rs[1:]))])
    k = np.nonzero(cum >= target)[0]
    if k.size == 0:
        raise ValueError("search window too short to bracket a1")
    j = int(k[0])
    if j == 0:
        a1 = float(t)
    else:
        frac = (target - cum[j - 1]) / (cum[j] - cum[j - 1])
        a1 = float(rs[j - 1] + frac * (rs[j] - rs[j - 1]))
    rr = np.linspace(a1 - 1.0, t, grid + 1)
    ratio = np.array([2.0 * pf(r) / float(h(r)) for r in rr])
    R = float(np.max(ratio) ** (1.0 / beta))
    if detail:
        return AprioriResult(R, a1, a1)
    return R


# ---------------------------------------------------------------------------
# Barenblatt profiles of u_t = div(|∇u|^{α−2}∇u)


@dataclass(frozen=True)
class BarenblattParams:
    alpha: float
    d: int = 1
    mass: float = 1.0
    k: float = field(init=False)
    q: float = field(init=False)
    c_mass: float = field(init=False)

    def __post_init__(self):
        a, d = float(self.alpha), int(self.d)
        if a <= 2:
            raise ValueError("Barenblatt profiles need alpha > 2")
        if d < 1 or self.mass <= 0:
            raise ValueError("need d >= 1 and positive mass")
        k = 1.0 / (a - 2.0 + a / d)
        q = ((a - 2.0) / a) * (k / d) ** (1.0 / (a - 1.0))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c_mass", _c_from_mass(a, d, q, self.mass))

    @classmethod
    def from_constant(cls, alpha: float, C: float, d: int = 1) -> "BarenblattParams":
        probe = cls(alpha, d, 1.0)
        return cls(alpha, d, barenblatt_mass(alpha, d, probe.q, C))

    @property
    def exponent(self) -> float:
        """(α−1)/(α−2), the power of the positive part."""
        return (self.alpha - 1.0) / (self.alpha - 2.0)


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def barenblatt_mass(alpha: float, d: int, q: float, C: float) -> float:
    """∫ (C − q|x|^a)₊^m dx in closed form, a = α/(α−1), m = (α−1)/(α−2).

    With x = (C/q)^{1/a} y the integral is C^m (C/q)^{d/a} |S^{d−1}| B(d/a, m+1)/a.
    It does not depend on t, which is the mass conservation of the profile.
    """
    a = alpha / (alpha - 1.0)
    m = (alpha - 1.0) / (alpha - 2.0)
    return C ** m * (C / q) ** (d / a) * _sphere_area(d) * beta_fn(d / a, m + 1.0) / a


def _c_from_mass(alpha: float, d: int, q: float, mass: float) -> float:
    unit = barenblatt_mass(alpha, d, q, 1.0)
    a = alpha / (alpha - 1.0)
    m = (alpha - 1.0) / (alpha - 2.0)
    return (mass / unit) ** (1.0 / (m + d / a))


def barenblatt(t: float, xi, params: BarenblattParams):
    if t <= 0:
        raise ValueError("Barenblatt profiles are defined for t > 0")
    a = params.alpha
    r = np.abs(np.asarray(xi, dtype=float))
    inner = params.c_mass - params.q * r ** (a / (a - 1.0)) * t ** (-params.k * a / (params.d * (a - 1.0)))
    out = t ** (-params.k) * np.maximum(inner, 0.0) ** params.exponent
    return float(out) if np.ndim(out) == 0 else out


def barenblatt_support_radius(t: float, params: BarenblattParams) -> float:
    if t <= 0:
        raise ValueError("Barenblatt profiles are defined for t > 0")
    a = params.alpha
    return t ** (params.k / params.d) * (params.c_mass / params.q) ** ((a - 1.0) / a)


def barenblatt_dt(t: float, xi, params: BarenblattParams, eps: float = 1e-6):
    """Time derivative by a centred difference (the profile is smooth in t inside the support)."""
    return (barenblatt(t + eps, xi, params) - barenblatt(t - eps, xi, params)) / (2 * eps)


# ---------------------------------------------------------------------------
# rates


def equil_rate_bound(lambda_sm: float, alpha: float, mu: float, beta_path: BrownianPath,
                     s: float, t: float) -> float:
    """((α/2−1) λ ∫_s^t e^{(α−2)μ(β_r−β_t)} dr)^{−2/(α−2)}, trapezoid on the path grid."""
    if alpha <= 2:
        raise ValueError("the rate formula needs alpha > 2")
    if lambda_sm <= 0:
        raise ValueError("lambda_sm must be positive")
    if s > t:
        raise ValueError("need s <= t")
    integral = rate_integral(alpha, mu, beta_path, s, t)
    if integral <= 0:
        return math.inf
    return ((alpha / 2.0 - 1.0) * lambda_sm * integral) ** (-2.0 / (alpha - 2.0))


def rate_integral(alpha: float, mu: float, beta_path: BrownianPath, s: float, t: float) -> float:
    if s == t:
        return 0.0
    if mu == 0:
        return t - s
    i, j = beta_path.index(s), beta_path.index(t)
    seg = beta_path.values[i:j + 1]
    vals = np.exp((alpha - 2.0) * mu * (seg - beta_path.values[j]))
    return float(np.trapezoid(vals, dx=beta_path.dt))


def arcsine_integral(q: float, beta_path: BrownianPath, s: float, t: float) -> float:
    """∫_s^t e^{q(β_r−β_t)} dr, nondecreasing as s decreases."""
    return rate_integral(q + 2.0, 1.0, beta_path, s, t) if q != 0 else t - s


# ---------------------------------------------------------------------------
# linear SDE  dX = Δ_h X dt + σ dW


def linear_sde_exact(triple: TripleSpec, noise: NoiseEnvironment, initial: Optional[np.ndarray] = None,
                     t_start: Optional[float] = None, t_end: Optional[float] = None,
                     sigma: float = 1.0, stride: int = 1) -> Trajectory:
    """Exact per-step recursion of dX = Δ_h X dt + σ dW for W piecewise linear on the grid.

    In the eigenbasis of Δ_h each coordinate solves x' = −λx + σ ΔW/Δt on every
    grid cell, so x ← e^{−λΔt} x + σ (1 − e^{−λΔt})/(λΔt) ΔW exactly. This is
    the continuous-time solution driven by the interpolated noise, the same
    noise the backward Euler scheme sees.
    """
    if triple.kind != Kind.RDE:
        raise ValueError("kind mismatch: the linear oracle needs the reaction-diffusion triple")
    mesh = triple.mesh
    n = mesh.n
    dt = noise.dt
    t0 = noise.t_min if t_start is None else t_start
    t1 = noise.t_max if t_end is None else t_end
    E = dirichlet_basis(triple, n)  # rows: H-orthonormal eigenvectors
    lam = dirichlet_eigenvalues(mesh)
    h = mesh.h
    x = np.zeros(n) if initial is None else (E @ np.asarray(initial, dtype=float)) * h
    decay = np.exp(-lam * dt)
    gain = (1.0 - decay) / (lam * dt)
    times, states = [t0], [x @ E]
    if noise.wiener is not None and sigma != 0:
        w = noise.wiener
        j0, j1 = w.index(t0), w.index(t1)
        inc = (w.increments()[j0:j1] @ E.T) * h * sigma
    else:
        j0, j1 = grid_index(t0, dt), grid_index(t1, dt)
        inc = np.zeros((j1 - j0, n))
    for m in range(inc.shape[0]):
        x = decay * x + gain * inc[m]
        if (m + 1) % stride == 0 or m + 1 == inc.shape[0]:
            times.append(t0 + (m + 1) * dt)
            states.append(x @ E)
    k = len(times) - 1
    return Trajectory(np.array(times), np.array(states), np.zeros(k, int), np.zeros(k), mesh)


def stationary_mode_variance(q: float, lam: float) -> float:
    """Variance q/(2λ) of the stationary OU coordinate dx = −λx dt + √q dβ."""
    return q / (2.0 * lam)
