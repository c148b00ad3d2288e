"""Long-time behaviour: absorption radii, pullback clouds, collapse rates, synchronization, entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, directed_hausdorff
from scipy.stats import binomtest

from . import oracles
from .flow import FlowRun, flow_S, snap
from .gelfand import DriftSpec, Kind, LinearReaction, Mesh1D, TripleSpec, dirichlet_basis
from .noise import _increments, grid_index, power_law_eigenvalues
from .stepper import NewtonDiverged, RandomPDEProblem, StepperConfig, integrate


class ErgodicRateNotNegative(RuntimeError):
    """The time-averaged linear growth rate is not negative on the available window."""


class NoBumpFits(ValueError):
    """The domain is shorter than the support of a single bump."""


def hausdorff(a: np.ndarray, b: np.ndarray, triple: TripleSpec) -> float:
    ea, eb = triple.whiten(np.atleast_2d(a)), triple.whiten(np.atleast_2d(b))
    return max(directed_hausdorff(ea, eb)[0], directed_hausdorff(eb, ea)[0])


def diameter(points: np.ndarray, triple: TripleSpec) -> float:
    e = triple.whiten(np.atleast_2d(points))
    return float(cdist(e, e).max()) if len(e) > 1 else 0.0


# ---------------------------------------------------------------------------
# absorption


def _structure(drift: DriftSpec):
    """(C_A, λ_V) with 2⟨A(a)−A(b), a−b⟩ ≤ C_A‖a−b‖_H² − λ_V‖a−b‖_V^α."""
    tr = drift.triple
    lam_v = drift.diffusion * (tr.structural_constant if tr.kind != Kind.RDE else 2.0)
    C_A = 2.0 * drift.eta
    if drift.reaction is not None:
        slope = drift.reaction.slope if isinstance(drift.reaction, LinearReaction) else math.sqrt(drift.reaction_growth)
        C_A += 2.0 * slope
    return C_A, lam_v


@dataclass
class AbsorptionReport:
    t: float
    R: float
    s0: float
    kappa: float
    ergodic_rate: float
    empirical_max: float = float("nan")
    empirical: list = field(default_factory=list)
    passed: bool = True

    @property
    def ratio(self) -> float:
        return self.empirical_max / self.R if self.R > 0 else float("nan")


def tempered_radius(eta: float) -> Callable[[float], float]:
    """ρ(s) with ρ(s)² = e^{η|s|/2}."""
    return lambda s: math.exp(eta * abs(s) / 4.0)


def absorption_radius(run: FlowRun, t: float, *, starts: Optional[Sequence[float]] = None,
                      radius: Optional[Callable[[float], float]] = None, samples: int = 4,
                      seed: int = 0, kappas: Optional[Sequence[float]] = None) -> AbsorptionReport:
    """Explicit absorbing radius for Z(t, s)D(s) and an empirical check.

    Along Z, y = ‖Z‖_H² obeys y' ≤ (C_A + 2μz)y − λ_V μ^{2−α}‖Z‖_V^α + 2‖g‖_*‖Z‖_V
    with g_τ = A_ω(τ, 0). Half of the V-term absorbs the forcing by Young's
    inequality; the other half is bounded below through the embedding and a
    tangent line y^β ≥ κy − (β−1)(κ/β)^{β/(β−1)}. This gives y' ≤ a(τ)y + f̃(τ)
    and R² = 2∫_{window}^t e^{∫_r^t a} f̃ dr. The start s₀ is the latest time
    with sup_{s' ≤ s₀} ‖D(s')‖² e^{∫_{s'}^t a} ≤ R²/2, where ‖D(s)‖ bounds
    ‖T(s)x‖ over the initial family. κ is chosen to minimize R.
    """
    drift = run.drift
    tr = drift.triple
    alpha = tr.alpha
    beta = alpha / 2.0
    lo = run.window[0]
    dt = run.cfg.dt
    times = lo + dt * np.arange(int(round((t - lo) / dt)) + 1)
    noise = run.noise
    mu_v = np.array([noise.mu_t(r) for r in times])
    z_v = np.array([noise.z(r) for r in times])
    G = np.stack([run.a_omega(r, np.zeros(tr.mesh.n)) for r in times])
    gdual = tr.dual_norm_array(G)
    C_A, lam_v = _structure(drift)
    half = 0.5 * lam_v * mu_v ** (2.0 - alpha)  # ε in Young and the retained V-coefficient
    ap = alpha / (alpha - 1.0)
    delta = (half * alpha) ** (1.0 / alpha)
    f_young = (2.0 * gdual / delta) ** ap / ap
    b = half * tr.embedding_lambda ** (-beta)
    base_rate = C_A + 2.0 * drift.mu * z_v

    def profile(kappa):
        if beta == 1.0:
            a = base_rate - b
            ftil = f_young
        else:
            a = base_rate - kappa * b
            ftil = f_young + b * (beta - 1.0) * (kappa / beta) ** (beta / (beta - 1.0))
        # ∫_r^t a for every grid r, by trapezoid
        seg = 0.5 * (a[1:] + a[:-1]) * dt
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        I = float(np.trapezoid(np.exp(tail) * ftil, dx=dt))
        return a, tail, I

    if beta == 1.0:
        kappas = [1.0]
    elif kappas is None:
        kappas = np.logspace(-3, 3, 61)
    u_norm = np.array([tr.h_norm_array(run.conjugation.u_at(r)) for r in times])

    def start_time(a, tail, I):
        rate = -float(np.mean(a))
        if radius is None:
            log_rho = min(rate, 1.0) * np.abs(times) / 4.0
        else:
            log_rho = np.log([radius(r) for r in times])
        with np.errstate(divide="ignore"):
            log_d = 2.0 * np.logaddexp(np.log(mu_v) + log_rho, np.log(u_norm))
        ok = np.maximum.accumulate(log_d + tail) <= math.log(I)
        return float(times[np.nonzero(ok)[0][-1]]) if ok[0] else -math.inf

    # smallest radius among slopes that admit an absorption time, else the earliest-absorbing slope
    best = None
    for kappa in kappas:
        a, tail, I = profile(kappa)
        if -np.mean(a) <= 0:
            continue
        s0 = start_time(a, tail, I)
        key = (not math.isfinite(s0), I if math.isfinite(s0) else -s0)
        if best is None or key < best[0]:
            best = (key, kappa, a, I, s0)
    if best is None:
        raise ErgodicRateNotNegative("time-averaged growth rate is not negative for any slope")
    _, kappa, a, I, s0 = best
    rate = -float(np.mean(a))
    half_rate = -float(np.mean(a[len(a) // 2:]))
    if half_rate <= 0:
        raise ErgodicRateNotNegative(f"growth rate over the late half of the window is {-half_rate:.4g}")
    R = math.sqrt(2.0 * I)
    # growth exponent capped at 1: still tempered, and keeps initial data within floating range
    grow = min(rate, 1.0)
    rho = radius or tempered_radius(grow)
    report = AbsorptionReport(t, R, s0, float(kappa), rate)
    if starts is None:
        if not math.isfinite(s0):
            return report
        # initial norms grow like e^{grow|s|/4}; keep them within a factor 100 of the one at s0
        span = min(s0 - lo, 4.0 * math.log(100.0) / grow)
        starts = list(s0 - span * np.linspace(0.0, 1.0, 5))
    rng = np.random.default_rng(seed)
    emp = []
    for s in starts:
        s = snap(run, s)
        if s > s0 + 1e-12:
            continue
        dirs = rng.normal(size=(samples, tr.mesh.n))
        dirs /= tr.h_norm_array(dirs)[:, None]
        x = dirs * rho(s) * rng.uniform(0, 1, size=(samples, 1))
        x[0] = dirs[0] * rho(s)
        Z = run.solve_Z_traj(s, t, run.conjugation.T(s, x), record_at=[t]).states[-1]
        emp.append((s, float(np.max(tr.h_norm_array(Z)))))
    report.empirical = emp
    report.empirical_max = max((e for _, e in emp), default=0.0)
    report.passed = report.empirical_max <= R
    return report


# ---------------------------------------------------------------------------
# clouds


@dataclass
class CollapseRecord:
    s: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    eta: np.ndarray
    slack: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.observed <= self.bound * (1.0 + self.slack)))

    def rows(self):
        return list(zip(self.s.tolist(), self.observed.tolist(), self.bound.tolist()))


CollapseReport = CollapseRecord


@dataclass
class AttractorEstimate:
    t_eval: float
    cloud: np.ndarray
    absorption_radius: float = float("nan")
    pullback_starts: list = field(default_factory=list)
    drift_diagnostic: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    collapse: Optional[CollapseRecord] = None
    entropy: Optional[list] = None

    def to_json(self) -> dict:
        out = {"t_eval": self.t_eval, "cloud": self.cloud.tolist(), "absorption_radius": self.absorption_radius,
               "pullback_starts": list(map(float, self.pullback_starts)),
               "drift_diagnostic": list(map(float, self.drift_diagnostic)),
               "failures": [list(map(str, f)) for f in self.failures]}
        if self.collapse is not None:
            out["collapse"] = [list(r) for r in self.collapse.rows()]
        if self.entropy is not None:
            out["entropy"] = [list(r) for r in self.entropy]
        return out


def pullback_cloud(run: FlowRun, t: float, starts: Sequence[float], seeds_of_initial: int, *,
                   radius: float = 1.0, seed: int = 0) -> AttractorEstimate:
    """{S(t,s)x : s ∈ starts, x ∈ samples} with the same samples reused for every start.

    Samples are drawn uniformly in direction and radius from the H-ball of the
    given radius. The diagnostic lists Hausdorff distances between the clouds
    of successive starts.
    """
    starts = [snap(run, s) for s in starts]
    if any(b > a for a, b in zip(starts, starts[1:])):
        raise ValueError("starts must be decreasing")
    tr = run.triple
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(seeds_of_initial, tr.mesh.n))
    dirs /= tr.h_norm_array(dirs)[:, None]
    x = dirs * radius * rng.uniform(0, 1, size=(seeds_of_initial, 1)) ** (1.0 / tr.mesh.n)
    clouds, failures, used = [], [], []
    for s in starts:
        try:
            clouds.append(flow_S(s, t, x, run))
            used.append(s)
        except NewtonDiverged:
            kept = []
            for i in range(seeds_of_initial):
                try:
                    kept.append(flow_S(s, t, x[i], run))
                except NewtonDiverged as err:
                    failures.append((s, i, str(err)))
            if kept:
                clouds.append(np.array(kept))
                used.append(s)
    diag = [hausdorff(a, b, tr) for a, b in zip(clouds, clouds[1:])]
    cloud = np.vstack(clouds) if clouds else np.zeros((0, tr.mesh.n))
    return AttractorEstimate(t, cloud, pullback_starts=used, drift_diagnostic=diag, failures=failures)


def default_lambda_sm(drift: DriftSpec) -> float:
    """Strong-monotonicity constant λ in the H-norm for Δ_p or Δ_h Φ drifts with η ≤ 0."""
    if drift.lambda_sm > 0:
        return drift.lambda_sm
    tr = drift.triple
    if tr.kind == Kind.RDE or tr.alpha <= 2 or drift.eta > 0:
        return 0.0
    return drift.diffusion * tr.strong_monotonicity_h


def collapse_rate_check(run: FlowRun, x, s_list: Sequence[float], t: float, *,
                        lambda_sm: Optional[float] = None, slack: float = 0.1,
                        others: Optional[np.ndarray] = None) -> CollapseRecord:
    """Observed ‖S(t,s)x − η‖² against the equilibrium rate bound for each s.

    η is S(t, s_min)x. With ``others`` (a batch of initial data) every datum
    is started at every s and the largest distance to η is reported.
    """
    drift = run.drift
    lam = default_lambda_sm(drift) if lambda_sm is None else lambda_sm
    if lam <= 0 or drift.alpha <= 2:
        raise ValueError("collapse rates need alpha > 2 and a positive lambda_sm")
    s_list = sorted(snap(run, s) for s in s_list)
    t = snap(run, t)
    tr = run.triple
    x = np.asarray(getattr(x, "values", x), float)
    data = x[None, :] if others is None else np.vstack([x[None, :], np.atleast_2d(others)])
    eta = flow_S(s_list[0], t, x, run)
    obs, bnd = [], []
    for s in s_list:
        img = flow_S(s, t, data, run)
        obs.append(float(np.max(tr.h_norm_array(img - eta) ** 2)))
        bnd.append(oracles.equil_rate_bound(lam, drift.alpha, drift.mu, run.noise.beta, s, t))
    return CollapseRecord(np.array(s_list), np.array(obs), np.array(bnd), eta, slack)


# ---------------------------------------------------------------------------
# synchronization


@dataclass
class SyncResult:
    t_list: list
    probabilities: list
    intervals: list
    order_violations: int
    diameters: np.ndarray  # (paths, len(t_list))

    def __iter__(self):
        return iter(self.probabilities)

    def __getitem__(self, i):
        return self.probabilities[i]

    def __len__(self):
        return len(self.probabilities)


def wilson_interval(successes: int, trials: int, level: float = 0.95):
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def synchronization_mc(drift: DriftSpec, interval, t_list: Sequence[float], paths: int, eps: float, *,
                       modes: int = 8, gamma: float = 2.0, seed: int = 0, dt: float = 0.01,
                       order_tol: float = 1e-8) -> SyncResult:
    """Fraction of paths whose images of {x, (x+y)/2, y} have H-diameter > eps at each t.

    Paths solve dX = A(X) dt + σ dW from time 0 with W = Σ √q_k β^k e_k,
    q_k = k^{−γ}; path p draws its modes from seed ``seed + p``. All paths and
    the three initial data are integrated as one batch.
    """
    if drift.mu != 0.0:
        raise ValueError("synchronization runs use additive noise only (mu = 0)")
    tr = drift.triple
    x = np.asarray(getattr(interval[0], "values", interval[0]), float)
    y = np.asarray(getattr(interval[1], "values", interval[1]), float)
    if np.any(x > y):
        raise ValueError("interval endpoints must satisfy x <= y nodewise")
    corners = np.stack([x, 0.5 * (x + y), y])
    t_list = [float(t) for t in t_list]
    t_end = max(t_list)
    n_steps = grid_index(t_end, dt)
    q = power_law_eigenvalues(modes, gamma)
    basis = dirichlet_basis(tr, modes) * np.sqrt(q)[:, None]
    if drift.sigma != 0.0:
        # (paths, steps, modes) Brownian increments, forward streams only
        inc = np.stack([np.stack([_increments(seed + p, 1 + k, 0, n_steps, dt) for k in range(modes)], axis=1)
                        for p in range(paths)])
    else:
        inc = None

    def forcing(t):
        n = int(round(t / dt))
        f = drift.sigma * (inc[:, n, :] @ basis) / dt
        return np.repeat(f, 3, axis=0)

    init = np.tile(corners, (paths, 1))
    prob = RandomPDEProblem(drift.apply, 0.0, t_end, init, tr, forcing=forcing if inc is not None else None,
                            jac=drift.jacobian, splitting=drift.splitting)
    traj = integrate(prob, StepperConfig(dt=dt), record_at=t_list)
    diam = np.zeros((paths, len(t_list)))
    violations = 0
    for j, t in enumerate(t_list):
        st = traj.at(t).reshape(paths, 3, -1)
        violations += int(np.sum(np.any(st[:, 0] > st[:, 1] + order_tol, axis=1)))
        violations += int(np.sum(np.any(st[:, 1] > st[:, 2] + order_tol, axis=1)))
        e = tr.whiten(st)
        d01 = np.linalg.norm(e[:, 0] - e[:, 1], axis=1)
        d02 = np.linalg.norm(e[:, 0] - e[:, 2], axis=1)
        d12 = np.linalg.norm(e[:, 1] - e[:, 2], axis=1)
        diam[:, j] = np.maximum(np.maximum(d01, d02), d12)
    probs, cis = [], []
    for j in range(len(t_list)):
        k = int(np.sum(diam[:, j] > eps))
        probs.append(k / paths)
        cis.append(wilson_interval(k, paths))
    return SyncResult(t_list, probs, cis, violations, diam)


# ---------------------------------------------------------------------------
# entropy


def covering_entropy(cloud, delta_grid: Sequence[float], triple: Optional[TripleSpec] = None) -> list:
    """Greedy counts N_δ with (δ, N_δ, ln N_δ) rows.

    Seeds are picked in order among points farther than 2δ from all earlier
    seeds, so the count is the size of a maximal 2δ-separated subset. It lies
    between the covering numbers for radii 2δ and δ, hence ln N_δ is a lower
    bound for the δ-entropy.
    """
    pts = np.atleast_2d(np.asarray(cloud, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("cloud must be nonempty")
    e = triple.whiten(pts) if triple is not None else pts
    D = cdist(e, e)
    out = []
    for delta in delta_grid:
        covered = np.zeros(len(e), dtype=bool)
        count = 0
        for i in range(len(e)):
            if covered[i]:
                continue
            count += 1
            covered |= D[i] <= 2.0 * delta
        out.append((float(delta), count, math.log(count)))
    return out


@dataclass
class BumpFamily:
    eps: float
    alpha: float
    d: int
    s0: float
    centers: np.ndarray
    params: oracles.BarenblattParams
    profiles: np.ndarray  # (count, N), one bump per row
    separation: float

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def entropy_exponent(self) -> float:
        return entropy_exponent(self.alpha, self.d)

    def combinations(self, m: Optional[int] = None) -> np.ndarray:
        """All 2^m sums over subsets of the first m bumps."""
        m = self.count if m is None else m
        if m > self.count:
            raise ValueError("not enough bumps")
        masks = (np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]) & 1
        return masks @ self.profiles[:m]


def entropy_exponent(alpha: float, d: int = 1) -> float:
    """d(α−2)/(d(α−2)+α), the growth exponent of the entropy lower bound."""
    return d * (alpha - 2.0) / (d * (alpha - 2.0) + alpha)


def bump_family(eps: float, alpha: float, domain: Mesh1D, s0: float = 1.0, d: int = 1,
                triple: Optional[TripleSpec] = None) -> BumpFamily:
    """Disjoint Barenblatt bumps whose support radius at time s0 equals eps.

    C(M) = q (eps·s0^{−k/d})^{α/(α−1)} fixes the support; the matching mass
    follows from the closed-form integral. Centres sit at eps, 3eps, ….
    """
    if d != 1:
        raise ValueError("meshes are one-dimensional")
    if domain.length < 2.0 * eps:
        raise NoBumpFits(f"a bump of radius {eps} does not fit into length {domain.length}")
    probe = oracles.BarenblattParams(alpha, d, 1.0)
    C = probe.q * (eps * s0 ** (-probe.k / d)) ** (alpha / (alpha - 1.0))
    params = oracles.BarenblattParams.from_constant(alpha, C, d)
    count = int(math.floor(domain.length / (2.0 * eps) + 1e-9))
    centers = eps * (2 * np.arange(count) + 1)
    x = domain.nodes
    profiles = np.stack([oracles.barenblatt(s0, x - c, params) for c in centers])
    tr = triple or TripleSpec(Kind.PLAPLACE, alpha, domain)
    separation = float(np.min(tr.h_norm_array(profiles))) if count else 0.0
    return BumpFamily(eps, alpha, d, s0, centers, params, profiles, separation)


def barenblatt_entropy_lower(delta: float, alpha: float, d: int = 1, domain: Optional[Mesh1D] = None,
                             s0: float = 1.0) -> int:
    """Number of disjoint bumps of radius delta that fit, |R_δ|; ln N ≥ |R_δ| ln 2 on the bump cloud."""
    if alpha <= 2:
        raise ValueError("alpha must exceed 2")
    domain = domain or Mesh1D(1.0, 400)
    if domain.length < 2.0 * delta:
        raise NoBumpFits(f"a bump of radius {delta} does not fit into length {domain.length}")
    return int(math.floor(domain.length / (2.0 * delta) + 1e-9))
