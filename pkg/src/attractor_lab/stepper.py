"""Backward Euler with damped Newton for dv/dt = F(t, v) + g(t).

States are handled in batches ``(B, N)``. Members share the time grid but
converge independently: a member stops iterating as soon as its own residual
is below tolerance, and the block-tridiagonal solve has no coupling between
blocks. A batch therefore reproduces the corresponding single runs bit for bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg.lapack import dgtsv

from .gelfand import Field, TripleSpec

Jacobian = tuple  # (lower, diag, upper), each shaped like the state


class NewtonDiverged(RuntimeError):
    def __init__(self, message: str, t: Optional[float] = None, residual: Optional[float] = None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t
        self.residual = residual


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-2
    newton_tol: float = 1e-10
    newton_max: int = 50
    damping: float = 1.0
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.newton_max < 1 or self.record_stride < 1:
            raise ValueError("newton_max and record_stride must be >= 1")


@dataclass
class RandomPDEProblem:
    """dv/dt = rhs(t, v) + forcing(t) on [t_start, t_end].

    ``rhs`` and ``jac`` act on arrays with nodes on the last axis. ``forcing(t)``
    is the constant value used on the step [t, t+dt). ``splitting(t, w)`` may
    return ``(B(w), b(t))`` with rhs(t, w) = B(w) w + b(t); it drives a
    lagged-coefficient iteration when Newton stalls.
    """

    rhs: Callable[[float, np.ndarray], np.ndarray]
    t_start: float
    t_end: float
    initial: np.ndarray
    triple: TripleSpec
    forcing: Optional[Callable[[float], np.ndarray]] = None
    jac: Optional[Callable[[float, np.ndarray], Jacobian]] = None
    splitting: Optional[Callable] = None

    def __post_init__(self):
        init = self.initial.values if isinstance(self.initial, Field) else self.initial
        self.initial = np.array(init, dtype=float)
        if self.initial.shape[-1] != self.triple.mesh.n:
            raise ValueError("initial datum does not match the mesh")
        if self.t_end < self.t_start:
            raise ValueError("t_end must not precede t_start")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, N) or (n_times, B, N)
    newton_iters: np.ndarray
    residuals: np.ndarray
    mesh: object = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.times)

    def index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} was not recorded")
        return j

    def at(self, t: float) -> np.ndarray:
        return self.states[self.index(t)]

    def field(self, i: int) -> Field:
        return Field(self.mesh, self.states[i])

    def member(self, b: int) -> "Trajectory":
        return Trajectory(self.times, self.states[:, b], self.newton_iters, self.residuals, self.mesh)


def _residual_norm(triple: TripleSpec, F: np.ndarray) -> np.ndarray:
    return triple.h_norm_array(F)


def _solve_tridiag(lower, diag, upper, rhs):
    """Solve blockwise tridiagonal systems given per-member (B, N) bands."""
    shape = rhs.shape
    d = diag.ravel()
    dl = lower.ravel()[1:]
    du = upper.ravel()[:-1]
    _, _, _, x, info = dgtsv(dl, d, du, rhs.ravel())
    if info != 0:
        raise np.linalg.LinAlgError(f"singular step matrix (info={info})")
    return x.reshape(shape)


def _fd_jacobian(rhs, t, w):
    """Tridiagonal part of the Jacobian by three-colour finite differences."""
    B, N = w.shape
    base = rhs(t, w)
    lower = np.zeros_like(w)
    diag = np.zeros_like(w)
    upper = np.zeros_like(w)
    eps = 1e-7 * (1.0 + np.max(np.abs(w), axis=1, keepdims=True))
    idx = np.arange(N)
    for colour in range(3):
        cols = idx[idx % 3 == colour]
        pert = w.copy()
        pert[:, cols] += eps
        d = (rhs(t, pert) - base) / eps
        diag[:, cols] = d[:, cols]
        c = cols[cols + 1 < N]
        lower[:, c + 1] = d[:, c + 1]
        c = cols[cols >= 1]
        upper[:, c - 1] = d[:, c - 1]
    return lower, diag, upper


def _newton(problem: RandomPDEProblem, v: np.ndarray, t1: float, dt: float, g, cfg: StepperConfig,
            guess: Optional[np.ndarray] = None):
    """Solve w − dt·rhs(t1, w) = v + dt·g for each member; returns (w, iters, residual).

    ``guess`` is an optional drift increment added to v + dt·g as the starting iterate.
    """
    triple = problem.triple
    rhs = problem.rhs
    jac = problem.jac
    base = v + dt * g if g is not None else v
    tol = cfg.newton_tol * (1.0 + triple.h_norm_array(v))
    w = base + guess if guess is not None else base.copy()
    F = w - dt * rhs(t1, w) - base
    res = triple.h_norm_array(F)
    if guess is not None:
        # keep the plain start where the extrapolated one is worse
        F0 = base - dt * rhs(t1, base) - base
        r0 = triple.h_norm_array(F0)
        worse = r0 < res
        if worse.any():
            w[worse], F[worse], res[worse] = base[worse], F0[worse], r0[worse]
    active = ~(res <= tol)
    iters = 0
    nb = v.shape[0]
    while active.any():
        if iters >= cfg.newton_max:
            return _fallback(problem, v, t1, dt, g, cfg, w, res, tol)
        iters += 1
        full = bool(active.all())
        idx = slice(None) if full else np.nonzero(active)[0]
        wa, Fa, ra, ba, ta = w[idx], F[idx], res[idx], base[idx], tol[idx]
        if jac is not None:
            lo, di, up = jac(t1, wa)
        else:
            lo, di, up = _fd_jacobian(rhs, t1, wa)
        try:
            delta = _solve_tridiag(-dt * lo, 1.0 - dt * di, -dt * up, Fa)
        except np.linalg.LinAlgError:
            return _fallback(problem, v, t1, dt, g, cfg, w, res, tol)
        lam = cfg.damping
        trial = wa - lam * delta if lam != 1.0 else wa - delta
        Ft = trial - dt * rhs(t1, trial) - ba
        rt = triple.h_norm_array(Ft)
        ok = (rt < (1.0 - 1e-4 * lam) * ra) | (rt <= ta)
        if not ok.all():
            # backtrack only the members whose residual did not drop
            m = wa.shape[0]
            lams = np.full(m, lam)
            todo = ~ok
            for _ in range(30):
                lams[todo] *= 0.5
                j = np.nonzero(todo)[0]
                tj = wa[j] - lams[j, None] * delta[j]
                Fj = tj - dt * rhs(t1, tj) - ba[j]
                rj = triple.h_norm_array(Fj)
                good = (rj < (1.0 - 1e-4 * lams[j]) * ra[j]) | (rj <= ta[j])
                acc = j[good]
                trial[acc], Ft[acc], rt[acc] = tj[good], Fj[good], rj[good]
                todo[acc] = False
                if not todo.any():
                    break
            if todo.any():
                return _fallback(problem, v, t1, dt, g, cfg, w, res, tol)
        if full:
            w, F, res = trial, Ft, rt
        else:
            w[idx], F[idx], res[idx] = trial, Ft, rt
        active = ~(res <= tol)
    return w, iters, float(res.max()) if nb else 0.0


def _fallback(problem, v, t1, dt, g, cfg, w, res, tol):
    """Lagged-coefficient iteration (I − dt B(w_k)) w_{k+1} = v + dt (b + g)."""
    if problem.splitting is None:
        raise NewtonDiverged("Newton iteration failed to reduce the residual", t1, float(np.max(res)))
    triple = problem.triple
    base = v + dt * g if g is not None else v
    w = w.copy()
    for it in range(20 * cfg.newton_max):
        (lo, di, up), b = problem.splitting(t1, w)
        try:
            w = _solve_tridiag(-dt * lo, 1.0 - dt * di, -dt * up, base + dt * b)
        except np.linalg.LinAlgError as err:
            raise NewtonDiverged(f"fixed-point iteration hit {err}", t1, float(np.max(res))) from err
        F = w - dt * problem.rhs(t1, w) - base
        res = _residual_norm(triple, F)
        if np.all(res <= tol):
            return w, cfg.newton_max + it + 1, float(np.max(res))
    raise NewtonDiverged("Newton and fixed-point iterations both failed", t1, float(np.max(res)))


def step_backward_euler(problem: RandomPDEProblem, v, t: float, dt: float,
                        cfg: StepperConfig) -> np.ndarray:
    """One implicit step from t to t + dt with the forcing frozen at t."""
    arr = v.values if isinstance(v, Field) else np.asarray(v, dtype=float)
    single = arr.ndim == 1
    V = arr[None, :] if single else arr
    g = problem.forcing(t) if problem.forcing is not None else None
    w, _, _ = _newton(problem, V, t + dt, dt, g, cfg)
    out = w[0] if single else w
    return Field(problem.triple.mesh, out) if isinstance(v, Field) else out


def integrate(problem: RandomPDEProblem, cfg: StepperConfig, *, record_from: Optional[float] = None,
              record_at: Optional[Sequence[float]] = None, retry: bool = True) -> Trajectory:
    """Uniform-grid trajectory from t_start to t_end.

    The last step is shortened if dt does not divide the interval. States are
    recorded every ``record_stride`` steps from ``record_from`` on (and always
    at t_end), or only at the grid times listed in ``record_at``.
    """
    init = problem.initial
    single = init.ndim == 1
    V = init[None, :].copy() if single else init.copy()
    t0, t1 = problem.t_start, problem.t_end
    dt = cfg.dt
    n_steps = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    times_grid = t0 + dt * np.arange(n_steps + 1)
    if n_steps:
        times_grid[-1] = t1
    if record_at is not None:
        wanted = np.zeros(n_steps + 1, dtype=bool)
        for s in record_at:
            j = int(round((s - t0) / dt))
            if j < 0 or j > n_steps or abs(times_grid[j] - s) > 1e-9 * max(1.0, abs(s)):
                raise ValueError(f"record time {s} is not on the step grid")
            wanted[j] = True
    else:
        wanted = np.zeros(n_steps + 1, dtype=bool)
        start = 0
        if record_from is not None:
            start = max(0, int(math.ceil((record_from - t0) / dt - 1e-9)))
        wanted[start::cfg.record_stride] = True
        wanted[-1] = True
    rec_times, rec_states = [], []
    iters = np.zeros(n_steps, dtype=int)
    resid = np.zeros(n_steps)
    if wanted[0]:
        rec_times.append(t0)
        rec_states.append(V.copy())
    forcing = problem.forcing
    guess = None
    for n in range(n_steps):
        t = times_grid[n]
        h = times_grid[n + 1] - t
        g = forcing(t) if forcing is not None else None
        try:
            V_old = V
            V, iters[n], resid[n] = _newton(problem, V, times_grid[n + 1], h, g, cfg, guess)
            # drift part of this step seeds the next Newton solve
            guess = V - V_old - (h * g if g is not None else 0.0)
        except NewtonDiverged as err:
            if not retry:
                raise NewtonDiverged("step failed", t, err.residual) from err
            try:
                half = 0.5 * h
                W, i1, _ = _newton(problem, V, t + half, half, g, cfg)
                V, i2, resid[n] = _newton(problem, W, t + h, half, g, cfg)
                iters[n] = i1 + i2
            except NewtonDiverged as err2:
                raise NewtonDiverged("step failed after halving dt", t, err2.residual) from err2
        if wanted[n + 1]:
            rec_times.append(times_grid[n + 1])
            rec_states.append(V.copy())
    states = np.array(rec_states)
    if single:
        states = states[:, 0, :]
    return Trajectory(np.array(rec_times), states, iters, resid, problem.triple.mesh)


def integrate_drift(drift, initial, t_start: float, t_end: float, cfg: StepperConfig, forcing=None,
                    **kwargs) -> Trajectory:
    """Convenience wrapper for dv = A(t, v) dt + forcing."""
    prob = RandomPDEProblem(drift.apply, t_start, t_end, initial, drift.triple, forcing=forcing,
                            jac=drift.jacobian, splitting=drift.splitting)
    return integrate(prob, cfg, **kwargs)


# ---------------------------------------------------------------------------
# export

BINARY_MAGIC = b"ALTRAJ01"


def trajectory_to_csv(traj: Trajectory, path) -> None:
    states = traj.states
    if states.ndim != 2:
        raise ValueError("CSV export handles single-member trajectories")
    header = "t," + ",".join(f"v{i}" for i in range(states.shape[1]))
    np.savetxt(path, np.column_stack([traj.times, states]), delimiter=",", header=header,
               comments="", fmt="%.17g")


def trajectory_to_binary(traj: Trajectory, path) -> None:
    """Header: 8-byte magic, N and row count as little-endian uint64; then rows (t, v_1..v_N) as <f8."""
    states = traj.states
    if states.ndim != 2:
        raise ValueError("binary export handles single-member trajectories")
    rows = np.column_stack([traj.times, states]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQ", states.shape[1], len(traj.times)))
        fh.write(rows.tobytes())


def trajectory_from_binary(path):
    with open(path, "rb") as fh:
        if fh.read(8) != BINARY_MAGIC:
            raise ValueError("not a trajectory dump")
        n, count = struct.unpack("<QQ", fh.read(16))
        rows = np.frombuffer(fh.read(), dtype="<f8").reshape(count, n + 1)
    return rows[:, 0].copy(), rows[:, 1:].copy()
