"""Driving noise: two-sided Brownian paths, trace-class Wiener paths, Wiener shifts, OU.

All paths live on an integer-indexed uniform grid ``t_i = i·dt`` that contains 0.
Increments to the right and to the left of the origin come from two separate
generator streams keyed by ``(seed, stream, direction)``. Both sides are
generated outward from 0, so a longer window extends a shorter one without
changing the shared values.

Stratonovich integrals ∫ μ_r ∘ dW_r are evaluated as left-point sums. This is
exact in the limit because μ is a functional of β alone and β is independent
of W, so the two have no cross-variation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

_GRID_TOL = 1e-9


def grid_index(t: float, dt: float) -> int:
    """Integer i with t = i·dt, or ValueError if t is off the grid."""
    x = t / dt
    i = round(x)
    if abs(x - i) > _GRID_TOL * max(1.0, abs(x)):
        raise ValueError(f"time {t} is not on the grid of spacing {dt}")
    return int(i)


def _increments(seed: int, stream: int, direction: int, count: int, dt: float) -> np.ndarray:
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, direction])
    return rng.standard_normal(count) * math.sqrt(dt)


def _two_sided(seed: int, stream: int, i_min: int, i_max: int, dt: float) -> np.ndarray:
    fwd = np.cumsum(_increments(seed, stream, 0, i_max, dt))
    bwd = np.cumsum(_increments(seed, stream, 1, -i_min, dt))
    return np.concatenate([bwd[::-1], [0.0], fwd])


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Scalar path sampled at t_i = (i0 + j)·dt, j = 0..len(values)−1."""

    i0: int
    dt: float
    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def t_min(self) -> float:
        return self.i0 * self.dt

    @property
    def t_max(self) -> float:
        return (self.i0 + len(self.values) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (self.i0 + np.arange(len(self.values))) * self.dt

    def index(self, t: float) -> int:
        j = grid_index(t, self.dt) - self.i0
        if not 0 <= j < len(self.values):
            raise ValueError(f"time {t} outside [{self.t_min}, {self.t_max}]")
        return j

    def __call__(self, t: float) -> float:
        return float(self.values[self.index(t)])

    def at(self, t: float) -> float:
        """Value at any t in the window, linear between grid points."""
        return float(np.interp(t, self.times, self.values))

    def shift(self, h: float) -> "BrownianPath":
        return wiener_shift(self, h)


@dataclass(frozen=True, eq=False)
class HWienerPath:
    """W_t = Σ_k √q_k β^k_t e_k with the mode paths stored as rows of ``mode_values``."""

    i0: int
    dt: float
    eigenvalues: np.ndarray
    basis: np.ndarray
    mode_values: np.ndarray
    seed: Optional[int] = None
    _increments: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        for name in ("eigenvalues", "basis", "mode_values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    @property
    def t_min(self) -> float:
        return self.i0 * self.dt

    @property
    def t_max(self) -> float:
        return (self.i0 + self.mode_values.shape[1] - 1) * self.dt

    @property
    def mode_paths(self) -> list:
        return [BrownianPath(self.i0, self.dt, row, self.seed) for row in self.mode_values]

    def index(self, t: float) -> int:
        j = grid_index(t, self.dt) - self.i0
        if not 0 <= j < self.mode_values.shape[1]:
            raise ValueError(f"time {t} outside [{self.t_min}, {self.t_max}]")
        return j

    def __call__(self, t: float) -> np.ndarray:
        j = self.index(t)
        return (np.sqrt(self.eigenvalues) * self.mode_values[:, j]) @ self.basis

    def increments(self) -> np.ndarray:
        """Field increments W_{t_{j+1}} − W_{t_j} as rows, computed once."""
        if self._increments is None:
            d = np.diff(self.mode_values, axis=1) * np.sqrt(self.eigenvalues)[:, None]
            inc = d.T @ self.basis
            inc.setflags(write=False)
            object.__setattr__(self, "_increments", inc)
        return self._increments

    def shift(self, h: float) -> "HWienerPath":
        return wiener_shift(self, h)


def sample_brownian(seed: int, t_min: float, t_max: float, dt: float, stream: int = 0) -> BrownianPath:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_min < 0 < t_max:
        raise ValueError("the window must contain 0 in its interior")
    i_min, i_max = grid_index(t_min, dt), grid_index(t_max, dt)
    return BrownianPath(i_min, dt, _two_sided(seed, stream, i_min, i_max, dt), seed)


def wiener_shift(path, h: float):
    """(θ_h ω)_t = ω_{t+h} − ω_h, restricted to the grid shifted by h."""
    k = grid_index(h, path.dt)
    if isinstance(path, BrownianPath):
        j = k - path.i0
        if not 0 <= j < len(path.values):
            raise ValueError(f"shift {h} exceeds the sampled window")
        return BrownianPath(path.i0 - k, path.dt, path.values - path.values[j], path.seed)
    if isinstance(path, HWienerPath):
        j = k - path.i0
        if not 0 <= j < path.mode_values.shape[1]:
            raise ValueError(f"shift {h} exceeds the sampled window")
        vals = path.mode_values - path.mode_values[:, j:j + 1]
        return HWienerPath(path.i0 - k, path.dt, path.eigenvalues, path.basis, vals, path.seed)
    raise TypeError(f"cannot shift {type(path).__name__}")


@dataclass(frozen=True, eq=False)
class OUPath:
    """Stationary OU z_t on the part of the base grid past the burn-in."""

    base: BrownianPath
    i0: int
    z_values: np.ndarray
    mu_exponent: float
    mu_values: np.ndarray
    burn_in: float

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def t_min(self) -> float:
        return self.i0 * self.dt

    @property
    def t_max(self) -> float:
        return (self.i0 + len(self.z_values) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (self.i0 + np.arange(len(self.z_values))) * self.dt

    def index(self, t: float) -> int:
        j = grid_index(t, self.dt) - self.i0
        if not 0 <= j < len(self.z_values):
            raise ValueError(f"time {t} outside [{self.t_min}, {self.t_max}]")
        return j

    def z(self, t: float) -> float:
        return float(self.z_values[self.index(t)])

    def mu(self, t: float) -> float:
        return float(self.mu_values[self.index(t)])


def ou_stationary(beta: BrownianPath, mu: float, burn_in: float = 20.0) -> OUPath:
    """z from z = 0 at beta.t_min via z_{n+1} = e^{−Δ} z_n + e^{−Δ/2} Δβ_n, kept after burn_in."""
    dt = beta.dt
    skip = grid_index(burn_in, dt)
    if skip < 0 or skip >= len(beta.values):
        raise ValueError("path does not cover the burn-in period")
    decay = math.exp(-dt)
    inc = np.diff(beta.values) * math.exp(-dt / 2.0)
    z = np.concatenate([[0.0], lfilter([1.0], [1.0, -decay], inc)])[skip:]
    z.setflags(write=False)
    mu_vals = np.exp(-mu * z)
    mu_vals.setflags(write=False)
    return OUPath(beta, beta.i0 + skip, z, float(mu), mu_vals, float(burn_in))


def sample_trace_class_wiener(seed: int, eigenvalues: Sequence[float], basis, window, dt: float,
                              first_stream: int = 1) -> HWienerPath:
    """Mode k uses generator stream ``first_stream + k``; stream 0 is left for β."""
    q = np.asarray(eigenvalues, dtype=float)
    B = np.asarray([getattr(b, "values", b) for b in basis], dtype=float)
    if B.ndim != 2 or B.shape[0] != q.size:
        raise ValueError(f"{q.size} eigenvalues but {B.shape[0] if B.ndim else 0} basis vectors")
    if np.any(q < 0):
        raise ValueError("eigenvalues must be nonnegative")
    t_min, t_max = window
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_min <= 0 <= t_max:
        raise ValueError("the window must contain 0")
    i_min, i_max = grid_index(t_min, dt), grid_index(t_max, dt)
    modes = np.stack([_two_sided(seed, first_stream + k, i_min, i_max, dt) for k in range(q.size)]) \
        if q.size else np.zeros((0, i_max - i_min + 1))
    return HWienerPath(i_min, dt, q, B, modes, seed)


def power_law_eigenvalues(modes: int, gamma: float = 2.0, scale: float = 1.0) -> np.ndarray:
    """q_k = scale·k^{−γ}."""
    if gamma <= 1:
        raise ValueError("gamma must exceed 1 for a trace-class covariance")
    return scale * np.arange(1, modes + 1, dtype=float) ** (-gamma)


@dataclass(frozen=True, eq=False)
class NoiseEnvironment:
    """One sampled ω: β on [t_min − burn_in, t_max], W and OU on [t_min, t_max].

    ``wiener`` may be None (no additive noise). The usable window is
    [t_min, t_max]; everything is indexed on the grid of spacing ``dt``.
    """

    beta: BrownianPath
    ou: OUPath
    wiener: Optional[HWienerPath]
    t_min: float
    t_max: float

    @property
    def dt(self) -> float:
        return self.beta.dt

    @property
    def mu(self) -> float:
        return self.ou.mu_exponent

    @property
    def burn_in(self) -> float:
        return self.ou.burn_in

    @property
    def seed(self):
        return self.beta.seed

    @property
    def times(self) -> np.ndarray:
        i0, i1 = grid_index(self.t_min, self.dt), grid_index(self.t_max, self.dt)
        return np.arange(i0, i1 + 1) * self.dt

    def _check(self, t: float):
        if not (self.t_min - 1e-9 * self.dt <= t <= self.t_max + 1e-9 * self.dt):
            raise WindowError(f"time {t} outside the noise window [{self.t_min}, {self.t_max}]")

    def z(self, t: float) -> float:
        self._check(t)
        return float(np.interp(t, self.ou.times, self.ou.z_values))

    def mu_t(self, t: float) -> float:
        self._check(t)
        return float(np.interp(t, self.ou.times, self.ou.mu_values))

    def W(self, t: float) -> np.ndarray:
        self._check(t)
        return self.wiener(t)

    def shift(self, h: float) -> "NoiseEnvironment":
        """Environment of θ_h ω; the OU path is recomputed on the shifted β."""
        beta = wiener_shift(self.beta, h)
        ou = ou_stationary(beta, self.mu, self.burn_in)
        wiener = wiener_shift(self.wiener, h) if self.wiener is not None else None
        return NoiseEnvironment(beta, ou, wiener, self.t_min - h, self.t_max - h)

    def coarsen(self, m: int) -> "NoiseEnvironment":
        """Same ω observed on every m-th grid point (the grid must stay aligned with 0)."""
        if m == 1:
            return self
        dt = self.dt * m
        for t in (self.t_min, self.t_max, self.beta.t_min):
            grid_index(t, dt)
        b = self.beta
        off = (-b.i0) % m
        if off:
            raise ValueError("window start is not aligned with the coarse grid")
        beta = BrownianPath(b.i0 // m, dt, b.values[::m], b.seed)
        ou = ou_stationary(beta, self.mu, self.burn_in)
        wiener = None
        if self.wiener is not None:
            w = self.wiener
            wiener = HWienerPath(w.i0 // m, dt, w.eigenvalues, w.basis, w.mode_values[:, ::m], w.seed)
        return NoiseEnvironment(beta, ou, wiener, self.t_min, self.t_max)

    def restrict(self, t_min: float, t_max: float) -> "NoiseEnvironment":
        if t_min < self.t_min - 1e-12 or t_max > self.t_max + 1e-12:
            raise WindowError("restriction exceeds the sampled window")
        return replace(self, t_min=t_min, t_max=t_max)

    def stochastic_increments(self, t0: float, t1: float, sigma: float = 1.0,
                              multiplier: bool = True) -> np.ndarray:
        """Left-point sum Σ σ μ_{t_j} (W_{t_{j+1}} − W_{t_j}) over the grid in [t0, t1]."""
        if self.wiener is None:
            return 0.0
        w = self.wiener
        j0, j1 = w.index(t0), w.index(t1)
        inc = w.increments()[j0:j1]
        if multiplier and self.mu != 0.0:
            k0 = self.ou.index(t0)
            weights = self.ou.mu_values[k0:k0 + (j1 - j0)]
            return sigma * (weights @ inc)
        return sigma * inc.sum(axis=0)

    def manifest(self) -> dict:
        w = self.wiener
        return {
            "seed": self.seed, "dt": self.dt, "t_min": self.t_min, "t_max": self.t_max,
            "burn_in": self.burn_in, "mu": self.mu,
            "modes": 0 if w is None else w.modes,
            "eigenvalues": [] if w is None else [float(x) for x in w.eigenvalues],
        }


class WindowError(ValueError):
    """Requested time lies outside the sampled noise window."""


def make_environment(seed: int, t_min: float, t_max: float, dt: float, *, mu: float = 0.0,
                     burn_in: float = 20.0, eigenvalues=None, basis=None) -> NoiseEnvironment:
    """Sample β (stream 0) over [t_min − burn_in, t_max] and W (streams 1..K) over [t_min, t_max]."""
    lo = t_min - burn_in
    if lo >= 0:
        raise ValueError("t_min − burn_in must be negative")
    beta = sample_brownian(seed, lo, max(t_max, dt), dt)
    if t_max < beta.t_max:
        beta = BrownianPath(beta.i0, dt, beta.values[:grid_index(t_max, dt) - beta.i0 + 1], seed)
    ou = ou_stationary(beta, mu, burn_in)
    wiener = None
    if eigenvalues is not None:
        wiener = sample_trace_class_wiener(seed, eigenvalues, basis, (min(t_min, 0.0), max(t_max, 0.0)), dt)
    return NoiseEnvironment(beta, ou, wiener, float(t_min), float(t_max))
