"""Discretized Gelfand triples V ⊆ H ⊆ V* on an interval, and the drift families.

Three geometries are supported on a uniform Dirichlet mesh of (0, L):

* ``PLAPLACE``: H = L² (h-weighted ℓ²), V = W^{1,α}_0 (ℓ^α norm of the
  forward-difference gradient on the N+1 cell edges).
* ``PME``: H = H^{-1} (‖v‖_H² = h vᵀ(−Δ_h)^{-1} v), V = L^α.
* ``RDE``: α = 2, H = L², V = H¹_0.

Operators act on arrays whose last axis holds the N nodal values, so a batch
of states ``(B, N)`` is evaluated in one call. Jacobians are returned as
``(lower, diag, upper)`` triples of the same shape, with ``lower[..., 0]`` and
``upper[..., -1]`` equal to zero so batches can be stacked into one
block-tridiagonal system.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigvalsh_tridiagonal
from scipy.optimize import minimize

JAC_EPS = 1e-8


class Kind(str, enum.Enum):
    PLAPLACE = "plaplace"
    PME = "pme"
    RDE = "rde"


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of (0, length) with ``n`` interior nodes."""

    length: float = 1.0
    n: int = 32

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 interior nodes, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a grid function (Dirichlet boundary values are implicit)."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.n,):
            raise ValueError(f"expected {self.mesh.n} nodal values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, mesh: Mesh1D) -> "Field":
        return cls(mesh, np.zeros(mesh.n))

    @classmethod
    def from_function(cls, mesh: Mesh1D, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(mesh, fn(mesh.nodes))

    def _other(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.mesh != self.mesh:
                raise ValueError("mesh mismatch")
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return Field(self.mesh, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.mesh, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.mesh, self._other(other) - self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            raise TypeError("fields multiply by scalars only")
        return Field(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Field(self.mesh, self.values / float(scalar))

    def __neg__(self):
        return Field(self.mesh, -self.values)

    def __le__(self, other):
        return bool(np.all(self.values <= self._other(other)))

    def __repr__(self):
        return f"Field(n={self.mesh.n}, max|v|={np.max(np.abs(self.values)):.3g})"


ArrayLike = Union[Field, np.ndarray]


# ---------------------------------------------------------------------------
# grid operators on arrays (last axis = nodes)


def _pad(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (v.shape[-1] + 2,))
    out[..., 1:-1] = v
    return out


def gradient(v: np.ndarray, h: float) -> np.ndarray:
    """Forward differences on the N+1 edges, boundary zeros included."""
    p = _pad(v)
    return (p[..., 1:] - p[..., :-1]) / h


def laplacian(v: np.ndarray, h: float) -> np.ndarray:
    p = _pad(v)
    return (p[..., 2:] - 2.0 * p[..., 1:-1] + p[..., :-2]) / (h * h)


def signed_power(r: np.ndarray, alpha: float) -> np.ndarray:
    """Φ(r) = |r|^{α-2} r."""
    if alpha == 2:
        return np.array(r, dtype=float, copy=True)
    return np.abs(r) ** (alpha - 2.0) * r


def p_laplacian(v: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """Flux-differenced div(|∇v|^{α-2}∇v) with Dirichlet data."""
    flux = signed_power(gradient(v, h), alpha)
    return (flux[..., 1:] - flux[..., :-1]) / h


def _reg_slope(r: np.ndarray, alpha: float) -> np.ndarray:
    # derivative of Φ with the degenerate factor regularized
    if alpha == 2:
        return np.ones_like(r)
    return (alpha - 1.0) * (r * r + JAC_EPS * JAC_EPS) ** ((alpha - 2.0) / 2.0)


def p_laplacian_jac(v: np.ndarray, alpha: float, h: float):
    a = _reg_slope(gradient(v, h), alpha) / (h * h)
    lower = a[..., :-1].copy()
    upper = a[..., 1:].copy()
    diag = -(lower + upper)
    lower[..., 0] = 0.0
    upper[..., -1] = 0.0
    return lower, diag, upper


def scaled_laplacian_jac(d: np.ndarray, h: float):
    """Tridiagonal entries of Δ_h · diag(d)."""
    s = d / (h * h)
    lower = np.zeros_like(s)
    upper = np.zeros_like(s)
    lower[..., 1:] = s[..., :-1]
    upper[..., :-1] = s[..., 1:]
    return lower, -2.0 * s, upper


# ---------------------------------------------------------------------------
# triples


@functools.lru_cache(maxsize=64)
def _laplacian_factor(length: float, n: int):
    h = length / (n + 1)
    ab = np.empty((2, n))
    ab[0, :] = -1.0 / (h * h)
    ab[1, :] = 2.0 / (h * h)
    return cholesky_banded(ab, lower=False)


def _first_eigvec(mesh: Mesh1D) -> np.ndarray:
    return np.sin(np.pi * mesh.nodes / mesh.length)


def _log_ratio(kind: Kind, alpha: float, mesh: Mesh1D, factor):
    """log(‖v‖_V / ‖v‖_H) and its gradient (scale invariant)."""
    h = mesh.h

    def fun(v):
        if kind == Kind.PME:
            kv = cho_solve_banded((factor, False), v)
            hh = h * v @ kv
            grad_h = h * kv / hh
            vv = h * np.sum(np.abs(v) ** alpha)
            grad_v = h * signed_power(v, alpha) / vv
        else:
            hh = h * v @ v
            grad_h = h * v / hh
            g = gradient(v, h)
            vv = h * np.sum(np.abs(g) ** alpha)
            grad_v = -h * p_laplacian(v, alpha, h) / vv
        val = math.log(vv) / alpha - 0.5 * math.log(hh)
        return val, grad_v - grad_h

    return fun


@functools.lru_cache(maxsize=64)
def _min_ratio(kind: Kind, alpha: float, length: float, n: int):
    """Smallest ‖v‖_V/‖v‖_H on the mesh, with its minimizer."""
    mesh = Mesh1D(length, n)
    factor = _laplacian_factor(length, n)
    h = mesh.h
    lam1 = float(eigvalsh_tridiagonal(np.full(n, 2.0 / h**2), np.full(n - 1, -1.0 / h**2),
                                      select="i", select_range=(0, 0))[0])
    v0 = _first_eigvec(mesh)
    if kind == Kind.RDE or alpha == 2:
        # quadratic case: the first Dirichlet eigenpair is exact
        if kind == Kind.PME:
            return lam1, v0, lam1
        return math.sqrt(lam1), v0, lam1
    fun = _log_ratio(kind, alpha, mesh, factor)
    best_val, _ = fun(v0)
    best = v0
    res = minimize(fun, v0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15})
    if res.fun < best_val:
        best_val, best = float(res.fun), res.x
    best = best / np.max(np.abs(best))
    return math.exp(best_val), best, lam1


@dataclass(frozen=True)
class TripleSpec:
    """A discretized Gelfand triple with its embedding constant.

    ``embedding_lambda`` is the smallest λ with ‖v‖_H² ≤ λ‖v‖_V² on the
    mesh, obtained by minimizing the norm ratio (exact eigenvalue for α = 2).
    """

    kind: Kind
    alpha: float
    mesh: Mesh1D
    embedding_lambda: float = field(init=False)
    lambda1: float = field(init=False)
    extremal: np.ndarray = field(init=False, repr=False, compare=False)
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        alpha = float(self.alpha)
        if not alpha >= 2:
            raise ValueError(f"alpha must be >= 2, got {alpha}")
        if kind == Kind.RDE and alpha != 2:
            raise ValueError("the reaction-diffusion triple requires alpha = 2")
        object.__setattr__(self, "alpha", alpha)
        ratio, vec, lam1 = _min_ratio(kind, alpha, self.mesh.length, self.mesh.n)
        object.__setattr__(self, "embedding_lambda", ratio ** -2)
        object.__setattr__(self, "lambda1", lam1)
        object.__setattr__(self, "extremal", vec)
        object.__setattr__(self, "_factor", _laplacian_factor(self.mesh.length, self.mesh.n))

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def hoelder_lambda(self) -> float:
        """Cruder embedding constant L^{1-2/α}/λ₁ from Hölder plus Poincaré."""
        return self.mesh.length ** (1.0 - 2.0 / self.alpha) / self.lambda1

    @property
    def structural_constant(self) -> float:
        """c_V with −2⟨M(u)−M(v), u−v⟩ ≥ c_V‖u−v‖_V^α for the auxiliary operator M."""
        return 2.0 ** (3.0 - self.alpha)

    @property
    def strong_monotonicity_h(self) -> float:
        """Sharp H-norm constant of M: c_V / λ^{α/2}."""
        return self.structural_constant * self.embedding_lambda ** (-self.alpha / 2.0)

    def inv_laplacian(self, v: np.ndarray) -> np.ndarray:
        """(−Δ_h)^{-1} applied along the last axis."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return cho_solve_banded((self._factor, False), v)
        flat = v.reshape(-1, v.shape[-1]).T
        return cho_solve_banded((self._factor, False), flat).T.reshape(v.shape)

    def whiten(self, v: np.ndarray) -> np.ndarray:
        """Linear map E with ‖v‖_H = |E v| (Euclidean), along the last axis."""
        v = np.asarray(v, dtype=float)
        if self.kind != Kind.PME:
            return math.sqrt(self.h) * v
        # −Δ = UᵀU, so vᵀ(−Δ)^{-1}v = |U^{-T} v|²
        from scipy.linalg import solve_banded

        u = self._factor
        n = self.mesh.n
        lower = np.zeros((2, n))
        lower[0] = u[1]
        lower[1, :-1] = u[0, 1:]
        flat = v.reshape(-1, n).T
        out = solve_banded((1, 0), lower, flat)
        return math.sqrt(self.h) * out.T.reshape(v.shape)

    def h_norm_array(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == Kind.PME:
            return np.sqrt(np.maximum(self.h * np.sum(v * self.inv_laplacian(v), axis=-1), 0.0))
        return np.sqrt(self.h * np.sum(v * v, axis=-1))

    def v_norm_array(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a = self.alpha
        if self.kind == Kind.PME:
            return (self.h * np.sum(np.abs(v) ** a, axis=-1)) ** (1.0 / a)
        return (self.h * np.sum(np.abs(gradient(v, self.h)) ** a, axis=-1)) ** (1.0 / a)

    def dual_norm_array(self, g: np.ndarray) -> np.ndarray:
        """Norm of g in V*, with the pairing identified through H."""
        g = np.asarray(g, dtype=float)
        a = self.alpha
        ap = a / (a - 1.0)
        h = self.h
        if self.kind == Kind.PME:
            w = self.inv_laplacian(g)
            return (h * np.sum(np.abs(w) ** ap, axis=-1)) ** (1.0 / ap)
        if self.kind == Kind.RDE or a == 2:
            return np.sqrt(np.maximum(h * np.sum(g * self.inv_laplacian(g), axis=-1), 0.0))
        # ⟨g, v⟩ = h Σ_edges G_j (Dv)_j with G_j = h Σ_{i>j} g_i and Σ_j (Dv)_j = 0,
        # so the dual norm is min_c ‖G − c‖_{ℓ^{α'}(h)}
        tail = h * np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]
        G = np.concatenate([tail, np.zeros(g.shape[:-1] + (1,))], axis=-1)
        c = _lp_center(G, ap)
        return (h * np.sum(np.abs(G - c[..., None]) ** ap, axis=-1)) ** (1.0 / ap)


def _lp_center(G: np.ndarray, p: float, iters: int = 80) -> np.ndarray:
    """argmin_c Σ|G_j − c|^p along the last axis, by bisection on the derivative."""
    lo = G.min(axis=-1)
    hi = G.max(axis=-1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        d = G - mid[..., None]
        slope = np.sum(np.abs(d) ** (p - 1.0) * np.sign(d), axis=-1)
        # slope > 0 means the optimum lies above mid
        up = slope > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _arr(v: ArrayLike, triple: TripleSpec) -> np.ndarray:
    if isinstance(v, Field):
        if v.mesh != triple.mesh:
            raise ValueError("mesh mismatch")
        return v.values
    arr = np.asarray(v, dtype=float)
    if arr.shape[-1:] != (triple.mesh.n,):
        raise ValueError(f"mesh mismatch: expected last axis {triple.mesh.n}, got {arr.shape}")
    return arr


def h_norm(v: ArrayLike, triple: TripleSpec) -> float:
    return float(triple.h_norm_array(_arr(v, triple)))


def v_norm(v: ArrayLike, triple: TripleSpec) -> float:
    return float(triple.v_norm_array(_arr(v, triple)))


def dual_norm(g: ArrayLike, triple: TripleSpec) -> float:
    return float(triple.dual_norm_array(_arr(g, triple)))


def dual_pair(w: ArrayLike, v: ArrayLike, triple: TripleSpec) -> float:
    """⟨w, v⟩ for w ∈ V*, v ∈ V, which is the H inner product on H × H."""
    w, v = _arr(w, triple), _arr(v, triple)
    if triple.kind == Kind.PME:
        return float(triple.h * w @ triple.inv_laplacian(v))
    return float(triple.h * w @ v)


# ---------------------------------------------------------------------------
# drift ingredients


@dataclass(frozen=True)
class ConstantSource:
    """Spatially uniform source f(t) = value."""

    value: float = 0.0

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class SinusoidalSource:
    """Time-periodic uniform source amplitude·sin(frequency·t); breaks autonomy."""

    amplitude: float = 1.0
    frequency: float = 1.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t)


@dataclass(frozen=True)
class LinearReaction:
    """G(t, u) = slope·u."""

    slope: float = 0.0

    def __call__(self, t, u):
        return self.slope * np.asarray(u)

    def derivative(self, t, u):
        return np.full_like(np.asarray(u, dtype=float), self.slope)


@dataclass(frozen=True)
class TanhReaction:
    """G(t, u) = slope·tanh(u): bounded, nondecreasing for slope ≥ 0."""

    slope: float = 1.0

    def __call__(self, t, u):
        return self.slope * np.tanh(u)

    def derivative(self, t, u):
        return self.slope / np.cosh(u) ** 2


def _growth_constant(reaction) -> float:
    """Smallest C with |G(t,u)|² ≤ C|u|² + f probed on a log grid; raises if superlinear."""
    u = np.logspace(-3, 6, 46)
    u = np.concatenate([-u[::-1], u])
    times = (-10.0, 0.0, 10.0)
    ratios = []
    for t in times:
        g = np.asarray(reaction(t, u), dtype=float)
        big = np.abs(u) >= 1e3
        ratios.append(np.max(g[big] ** 2 / u[big] ** 2))
        r_hi = np.abs(g[-1]) / abs(u[-1])
        r_mid = np.abs(g[np.searchsorted(u, 1e3)]) / 1e3
        if r_hi > 10.0 * r_mid + 1.0:
            raise ValueError("reaction term grows faster than linearly")
    return float(max(ratios))


@dataclass(frozen=True)
class DriftSpec:
    """Drift A(t, v) together with its noise intensities and declared constants.

    PLAPLACE: A v = diffusion·Δ_p v + η v + f(t)
    PME:      A v = diffusion·Δ_h(|v|^{α-2} v) + η v + f(t)
    RDE:      A v = diffusion·Δ_h v + G(t, v) + f(t)

    ``f`` is a spatially uniform source. ``mu`` scales the linear
    multiplicative noise and ``sigma`` the additive trace-class noise.
    """

    triple: TripleSpec
    eta: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0
    lambda_sm: float = 0.0
    diffusion: float = 1.0
    f: Optional[Callable[[float], float]] = None
    reaction: Optional[Callable] = None
    c: Optional[float] = None
    C: Optional[float] = None
    reaction_growth: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("additive noise scale must be nonnegative")
        if self.lambda_sm < 0:
            raise ValueError("lambda_sm must be nonnegative")
        if self.diffusion < 0:
            raise ValueError("diffusion must be nonnegative")
        if self.c is not None and self.c <= 0:
            raise ValueError("coercivity constant c must be positive")
        if self.reaction is not None:
            if self.triple.kind != Kind.RDE:
                raise ValueError("reaction terms belong to the reaction-diffusion kind")
            object.__setattr__(self, "reaction_growth", _growth_constant(self.reaction))

    @property
    def kind(self) -> Kind:
        return self.triple.kind

    @property
    def alpha(self) -> float:
        return self.triple.alpha

    @property
    def phi_exponent(self) -> float:
        return self.triple.alpha

    @property
    def additive_scale(self) -> float:
        return self.sigma

    @property
    def autonomous(self) -> bool:
        return self.f is None or isinstance(self.f, ConstantSource)

    def source(self, t: float) -> float:
        return 0.0 if self.f is None else float(self.f(t))

    # -- vectorized evaluation -------------------------------------------

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        tr = self.triple
        h = tr.h
        if tr.kind == Kind.PLAPLACE:
            out = self.diffusion * p_laplacian(v, tr.alpha, h) + self.eta * v
        elif tr.kind == Kind.PME:
            out = self.diffusion * laplacian(signed_power(v, tr.alpha), h) + self.eta * v
        else:
            out = self.diffusion * laplacian(v, h) + self.eta * v
            if self.reaction is not None:
                out = out + self.reaction(t, v)
        s = self.source(t)
        if s != 0.0:
            out = out + s
        return out

    def jacobian(self, t: float, v: np.ndarray):
        tr = self.triple
        h = tr.h
        if tr.kind == Kind.PLAPLACE:
            lower, diag, upper = p_laplacian_jac(v, tr.alpha, h)
        elif tr.kind == Kind.PME:
            lower, diag, upper = scaled_laplacian_jac(_reg_slope(v, tr.alpha), h)
        else:
            lower, diag, upper = scaled_laplacian_jac(np.ones_like(v), h)
        k = self.diffusion
        lower, diag, upper = k * lower, k * diag + self.eta, k * upper
        if tr.kind == Kind.RDE and self.reaction is not None:
            diag = diag + self.reaction.derivative(t, v)
        return lower, diag, upper

    def splitting(self, t: float, v: np.ndarray):
        """Lagged-coefficient form A(t, w) ≈ B(v) w + b(t), used as a Newton fallback."""
        tr = self.triple
        h = tr.h
        if tr.kind == Kind.PME:
            coef = np.abs(v) ** (tr.alpha - 2.0)
        elif tr.kind == Kind.PLAPLACE:
            g = np.abs(gradient(v, h)) ** (tr.alpha - 2.0) / (h * h)
            lower = g[..., :-1].copy()
            upper = g[..., 1:].copy()
            diag = -(lower + upper)
            lower[..., 0] = 0.0
            upper[..., -1] = 0.0
            k = self.diffusion
            return (k * lower, k * diag + self.eta, k * upper), self.source(t)
        else:
            return self.jacobian(t, v), self.source(t)
        lower, diag, upper = scaled_laplacian_jac(coef, h)
        k = self.diffusion
        return (k * lower, k * diag + self.eta, k * upper), self.source(t)


def _check_kind(drift: DriftSpec, kind: Kind):
    if drift.kind != kind:
        raise ValueError(f"kind mismatch: drift is {drift.kind.value}, expected {kind.value}")


def _wrap(like: ArrayLike, values: np.ndarray, triple: TripleSpec):
    return Field(triple.mesh, values) if isinstance(like, Field) else values


def p_laplace_apply(v: ArrayLike, drift: DriftSpec, t: float = 0.0):
    _check_kind(drift, Kind.PLAPLACE)
    return _wrap(v, drift.apply(t, _arr(v, drift.triple)), drift.triple)


def pme_apply(v: ArrayLike, drift: DriftSpec, t: float = 0.0):
    _check_kind(drift, Kind.PME)
    return _wrap(v, drift.apply(t, _arr(v, drift.triple)), drift.triple)


def rde_apply(v: ArrayLike, t: float, drift: DriftSpec):
    _check_kind(drift, Kind.RDE)
    return _wrap(v, drift.apply(t, _arr(v, drift.triple)), drift.triple)


def aux_drift(triple: TripleSpec) -> DriftSpec:
    """The strongly monotone operator M as a drift: Δ_p, Δ_h(|v|^{α-2}v) or Δ_h."""
    return DriftSpec(triple)


def aux_monotone_M(v: ArrayLike, triple: TripleSpec):
    return _wrap(v, aux_drift(triple).apply(0.0, _arr(v, triple)), triple)


# ---------------------------------------------------------------------------
# numeric assumption checker


@dataclass
class AssumptionEntry:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class AssumptionReport:
    entries: list
    c_hat: float
    C_hat: float
    f_hat: float
    growth_ratio: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> AssumptionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def summary(self) -> str:
        return "\n".join(f"{e.name}: {'PASS' if e.passed else 'FAIL'} ({e.value:.4g}) {e.detail}"
                         for e in self.entries)


def random_fields(triple: TripleSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Mixed test set: smooth mode sums, rough nodal noise and bumps, at scales 1e-2..1e2."""
    n = triple.mesh.n
    x = triple.mesh.nodes / triple.mesh.length
    out = np.empty((count, n))
    for i in range(count):
        scale = 10.0 ** rng.uniform(-2, 2)
        kind = i % 3
        if kind == 0:
            k = np.arange(1, min(n, 12) + 1)
            coef = rng.normal(size=k.size) / k
            v = coef @ np.sin(np.pi * np.outer(k, x))
        elif kind == 1:
            v = rng.normal(size=n)
        else:
            c, w = rng.uniform(0.1, 0.9), rng.uniform(0.03, 0.3)
            v = np.maximum(1.0 - ((x - c) / w) ** 2, 0.0) * rng.choice([-1.0, 1.0])
            if not np.any(v):
                v = np.sin(np.pi * x)
        out[i] = scale * v / max(np.max(np.abs(v)), 1e-300)
    return out


def _pair_batch(triple, h_pair):
    return lambda w, v: triple.h * np.sum(w * (triple.inv_laplacian(v) if h_pair else v), axis=-1)


def check_assumptions(drift: DriftSpec, samples: int = 200, seed: int = 0) -> AssumptionReport:
    """Empirical worst-case constants of the standing hypotheses over random fields and times.

    A1 hemicontinuity, A2 weak monotonicity, A3 coercivity, A4 growth, and
    A2' strong monotonicity when ``lambda_sm`` is set.

    Constants are measured in the forms
      monotonicity  2⟨A(u)−A(v), u−v⟩ ≤ Ĉ‖u−v‖_H²,
      coercivity    2⟨A(v), v⟩ ≤ Ĉ‖v‖_H² − ĉ‖v‖_V^α + f̂,
      growth        ‖A(v)‖_{V*} ≤ K(1 + ‖v‖_V^{α−1}).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    tr = drift.triple
    rng = np.random.default_rng(seed)
    pair = _pair_batch(tr, tr.kind == Kind.PME)
    U = random_fields(tr, samples, rng)
    Vf = random_fields(tr, samples, rng)
    # adversarial antisymmetric pairs along the norm-ratio minimizer
    ext = tr.extremal[None, :] * np.logspace(-2, 2, 9)[:, None]
    U = np.vstack([U, ext, np.zeros((1, tr.mesh.n))])
    Vf = np.vstack([Vf, -ext, np.zeros((1, tr.mesh.n))])
    Vf[-1, 0] = 1e-3
    times = rng.uniform(-10, 10, size=U.shape[0])
    AU = np.stack([drift.apply(t, u) for t, u in zip(times, U)])
    AV = np.stack([drift.apply(t, v) for t, v in zip(times, Vf)])
    entries = []

    # A1: t ↦ ⟨A(u + t v), w⟩ continuous, probed by shrinking increments
    w = random_fields(tr, 1, rng)[0]
    u0, v0 = U[0], Vf[0]
    vals = [float(pair(drift.apply(0.0, u0 + s * v0), w)) for s in (0.0, 1e-4, 1e-6, 1e-8)]
    jump = max(abs(x - vals[0]) for x in vals[1:])
    scale = 1.0 + abs(vals[0])
    entries.append(AssumptionEntry("A1", jump <= 1e-3 * scale or abs(vals[-1] - vals[0]) <= 1e-6 * scale,
                                   jump, "hemicontinuity probe"))

    # A2: monotonicity up to a linear term
    D = U - Vf
    dn2 = tr.h_norm_array(D) ** 2
    mono = 2.0 * pair(AU - AV, D)
    ok = dn2 > 1e-14
    C_hat = float(max(0.0, np.max(mono[ok] / dn2[ok]))) if np.any(ok) else 0.0
    entries.append(AssumptionEntry("A2", bool(np.all(mono[ok] <= C_hat * dn2[ok] * (1 + 1e-9) + 1e-12)),
                                   C_hat, "measured C-hat"))

    # A3: coercivity; c-hat from the large-field limit, f-hat as the remainder
    X = np.vstack([U, Vf])
    AX = np.vstack([AU, AV])
    tx = np.concatenate([times, times])
    src = np.array([drift.source(t) for t in tx])
    AX_hom = AX - src[:, None]
    hn2 = tr.h_norm_array(X) ** 2
    vn = tr.v_norm_array(X)
    coer = 2.0 * pair(AX_hom, X)
    nz = vn > 1e-12
    ratio = (C_hat * hn2[nz] - coer[nz]) / vn[nz] ** tr.alpha
    # the V-term dominates for large fields; read ĉ off the upper quartile of ‖v‖_V
    big = vn[nz] >= np.quantile(vn[nz], 0.75) if np.any(nz) else nz[nz]
    c_hat = max(float(np.min(ratio[big])), 0.0) if np.any(nz) else 0.0
    if drift.diffusion == 0:
        c_hat = 0.0
    # the source contributes 2⟨f, v⟩ ≤ ‖v‖_H² + ‖f‖_H², folded into Ĉ + 1 and f̂
    if np.any(src != 0):
        ones = np.ones(tr.mesh.n)
        f_src = float(np.max(src ** 2) * tr.h_norm_array(ones) ** 2)
        C_coer = C_hat + 1.0
    else:
        f_src, C_coer = 0.0, C_hat
    full = 2.0 * pair(AX, X)
    # f̂ takes up what small fields leave over
    f_hat = f_src + max(0.0, float(np.max(coer - C_hat * hn2 + c_hat * vn ** tr.alpha)))
    bound = C_coer * hn2 - c_hat * vn ** tr.alpha + f_hat
    coer_ok = bool(np.all(full <= bound + 1e-9 * (1 + np.abs(bound))))
    entries.append(AssumptionEntry("A3", coer_ok and c_hat >= -1e-12, c_hat,
                                   f"c-hat={c_hat:.4g}, f-hat={f_hat:.4g}"))
    entries.append(AssumptionEntry("coercive", c_hat > 1e-12, c_hat, "strict coercivity c-hat > 0"))

    # A4: growth
    dn = tr.dual_norm_array(AX_hom)
    growth = dn / (1.0 + vn ** (tr.alpha - 1.0))
    growth_ratio = float(np.max(growth))
    entries.append(AssumptionEntry("A4", bool(np.isfinite(growth_ratio)), growth_ratio,
                                   "sup ‖A v‖_* / (1 + ‖v‖_V^{α-1})"))

    if drift.lambda_sm > 0:
        dh = tr.h_norm_array(D)
        ok2 = dh > 1e-12
        lhs = -mono[ok2]
        entries.append(AssumptionEntry(
            "A2'", bool(np.all(lhs >= drift.lambda_sm * dh[ok2] ** tr.alpha * (1 - 1e-9))),
            float(np.min(lhs / dh[ok2] ** tr.alpha)), f"declared lambda_sm={drift.lambda_sm:.4g}"))

    if tr.kind == Kind.RDE and drift.reaction is not None:
        limit = drift.diffusion * tr.lambda1
        root = math.sqrt(drift.reaction_growth)
        entries.append(AssumptionEntry("reaction", root < limit, root,
                                       f"sqrt(C_G) vs diffusion*lambda1={limit:.4g}"))
    if tr.alpha == 2 and c_hat > 0:
        lam = tr.embedding_lambda
        entries.append(AssumptionEntry("dissipative", C_hat < c_hat / (4 * lam) or C_hat == 0.0, C_hat,
                                       f"C-hat vs c-hat/(4 lambda)={c_hat / (4 * lam):.4g}"))
    return AssumptionReport(entries, c_hat, C_hat, f_hat, growth_ratio)


def measure_strong_monotonicity(triple: TripleSpec, samples: int = 1000, seed: int = 0) -> float:
    """inf of −2⟨M(u)−M(v), u−v⟩/‖u−v‖_H^α over random and extremal pairs."""
    rng = np.random.default_rng(seed)
    M = aux_drift(triple)
    U = random_fields(triple, samples, rng)
    Vf = random_fields(triple, samples, rng)
    ext = triple.extremal[None, :] * np.logspace(-2, 2, 5)[:, None]
    U = np.vstack([U, ext])
    Vf = np.vstack([Vf, -ext])
    D = U - Vf
    pair = _pair_batch(triple, triple.kind == Kind.PME)
    lhs = -2.0 * pair(M.apply(0.0, U) - M.apply(0.0, Vf), D)
    return float(np.min(lhs / triple.h_norm_array(D) ** triple.alpha))


def dirichlet_basis(triple: TripleSpec, modes: int) -> np.ndarray:
    """First ``modes`` Dirichlet eigenvectors, orthonormal in the H inner product."""
    mesh = triple.mesh
    if modes > mesh.n:
        raise ValueError("more modes than mesh nodes")
    k = np.arange(1, modes + 1)
    B = np.sqrt(2.0 / mesh.length) * np.sin(np.pi * np.outer(k, mesh.nodes) / mesh.length)
    if triple.kind == Kind.PME:
        h = mesh.h
        lam = (2.0 / h**2) * (1.0 - np.cos(k * np.pi * h / mesh.length))
        B = B * np.sqrt(lam)[:, None]
    return B


def dirichlet_eigenvalues(mesh: Mesh1D, modes: Optional[int] = None) -> np.ndarray:
    k = np.arange(1, (modes or mesh.n) + 1)
    h = mesh.h
    return (2.0 / h**2) * (1.0 - np.cos(k * np.pi * h / mesh.length))
