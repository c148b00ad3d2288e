"""Command-line experiments: ``attractor-lab <subcommand> [--config path] [--seed k] [--out dir]``.

Every subcommand writes ``<out>/<subcommand>/manifest.json`` plus CSV tables.
Passing a manifest as ``--config`` replays the run and reproduces its CSVs
bit for bit. Exit status: 0 success, 2 configuration error, 3 numerical
failure (the failing stage is printed to stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
from pathlib import Path
from typing import Callable, Optional

from .config import ConfigError, RunConfig, load

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COLUMNS = {
    "stationary": {
        "stationary.csv": "t, norm_u (H-norm of the stationary solution)",
        "pullback.csv": "start, cauchy_gap (sup-gap to the previous start; empty for the first)",
        "stationarity.csv": "h, defect, tolerance, pass",
        "birkhoff.csv": "T, mean_norm2 (time average of the squared H-norm)",
    },
    "flow": {
        "flow.csv": "s, t, r, defect, budget, pass (composition through r against one run)",
        "cocycle.csv": "s, t, defect (shifted-path flow against the direct flow)",
    },
    "absorb": {
        "absorb.csv": "t, R, s0, kappa, ergodic_rate, empirical_max, pass",
        "absorb_empirical.csv": "s, max_norm (largest H-norm of Z(t,s)x over the sampled family)",
    },
    "collapse": {"collapse.csv": "s, observed2, bound, pass (observed2 <= 1.1 bound)"},
    "sync": {
        "sync.csv": "t, probability, ci_low, ci_high, order_violations",
        "diameters.csv": "path, t, diameter",
    },
    "entropy": {
        "entropy.csv": "delta, count, log_count (greedy covering of the pullback cloud)",
        "entropy_lower.csv": "delta, bumps, log_lower (ln 2 times the number of disjoint bumps)",
        "bumps.csv": "m, count, required, pass (covering count of 2^m bump sums at a third of the separation)",
    },
    "oracle": {"oracle.csv": "name, value, expected, tolerance, pass"},
}


class NumericalFailure(RuntimeError):
    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"{stage}: {type(err).__name__}: {err}")
        self.stage = stage


class Writer:
    """Single writer for one experiment directory."""

    def __init__(self, root: Path):
        self.root = root
        self.files = []

    def csv(self, name: str, header, rows) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / name, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)
        if name != "manifest.json":
            self.files.append(name)


def _fmt(x):
    import numpy as np

    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return x


def thread_cap() -> Optional[int]:
    raw = os.environ.get("ATTRACTOR_LAB_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ATTRACTOR_LAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("ATTRACTOR_LAB_THREADS must be a positive integer")
    return n


def _apply_thread_cap(n: Optional[int]) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


# ---------------------------------------------------------------------------
# builders


def build(cfg: RunConfig, seed: int):
    from .gelfand import ConstantSource, DriftSpec, Kind, LinearReaction, Mesh1D, TripleSpec, dirichlet_basis
    from .noise import make_environment, power_law_eigenvalues
    from .stepper import StepperConfig

    d, n, s = cfg.drift, cfg.noise, cfg.solver
    triple = TripleSpec(Kind(d.kind), d.alpha, Mesh1D(d.length, s.n))
    drift = DriftSpec(triple, eta=d.eta, mu=d.mu, sigma=d.sigma, lambda_sm=d.lambda_sm, diffusion=d.diffusion,
                      f=ConstantSource(d.source) if d.source else None,
                      reaction=LinearReaction(d.reaction_slope) if d.kind == "rde" and d.reaction_slope else None)
    eig = basis = None
    if n.modes > 0:
        eig = power_law_eigenvalues(n.modes, n.gamma, n.scale)
        basis = dirichlet_basis(triple, n.modes)
    noise = make_environment(seed, n.t_min, n.t_max, n.dt, mu=d.mu, burn_in=n.burn_in,
                             eigenvalues=eig, basis=basis)
    step = StepperConfig(dt=s.dt, newton_tol=s.newton_tol, newton_max=s.newton_max)
    return triple, drift, noise, step


def _flow_run(cfg, drift, noise, step):
    from .flow import FlowRun

    return FlowRun(drift, noise, step, window=cfg.experiment.window, pullback_tol=cfg.experiment.pullback_tol)


def _stage(name: str, fn: Callable, *args, **kwargs):
    from .noise import WindowError
    from .stepper import NewtonDiverged
    from .stationary import PullbackNotCauchy
    from .attractor import ErgodicRateNotNegative, NoBumpFits
    import numpy as np

    try:
        return fn(*args, **kwargs)
    except (NewtonDiverged, PullbackNotCauchy, WindowError, ErgodicRateNotNegative, NoBumpFits,
            np.linalg.LinAlgError, FloatingPointError, OverflowError) as err:
        raise NumericalFailure(name, err) from err


def _initial(triple, count: int, seed: int):
    import numpy as np

    rng = np.random.default_rng([seed, 99])
    x = rng.normal(size=(count, triple.mesh.n))
    return x / triple.h_norm_array(x)[:, None]


# ---------------------------------------------------------------------------
# subcommands


def cmd_stationary(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .stationary import birkhoff_average, pullback_stationary, stationarity_check

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    sol = _stage("pullback", pullback_stationary, triple, noise, e.pullback_tol, step,
                 sigma=drift.sigma, t_eval=e.window)
    norms = triple.h_norm_array(sol.u.states)
    out.csv("stationary.csv", ["t", "norm_u"], zip(sol.u.times.tolist(), norms.tolist()))
    gaps = [float("nan")] + list(sol.cauchy_gaps)
    out.csv("pullback.csv", ["start", "cauchy_gap"], zip(sol.pullback_starts, gaps))
    rows = []
    for h in e.shifts:
        defect = _stage(f"stationarity h={h}", stationarity_check, triple, noise, h, e.pullback_tol, step,
                        sigma=drift.sigma)
        rows.append((float(h), defect, 3 * e.pullback_tol, defect <= 3 * e.pullback_tol))
    out.csv("stationarity.csv", ["h", "defect", "tolerance", "pass"], rows)
    span = e.window[1] - e.window[0]
    Ts = [span * f for f in (0.25, 0.5, 1.0)]
    out.csv("birkhoff.csv", ["T", "mean_norm2"], zip(Ts, birkhoff_average(sol, 2, Ts)))


def cmd_flow(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .flow import check_cocycle, flow_property

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    run = _stage("stationary", _flow_run, cfg, drift, noise, step)
    x = _initial(triple, 1, seed)[0]
    rows, cyc = [], []
    for s in e.starts:
        rep = _stage(f"flow s={s}", flow_property, run, s, e.t_eval, x)
        rows.append((float(s), e.t_eval, rep.midpoint, rep.defect, rep.budget, rep.passed))
        cyc.append((float(s), e.t_eval, _stage(f"cocycle s={s}", check_cocycle, run, s, e.t_eval, x)))
    out.csv("flow.csv", ["s", "t", "r", "defect", "budget", "pass"], rows)
    out.csv("cocycle.csv", ["s", "t", "defect"], cyc)


def cmd_absorb(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .attractor import absorption_radius

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    run = _stage("stationary", _flow_run, cfg, drift, noise, step)
    rep = _stage("absorption", absorption_radius, run, e.t_eval, samples=e.samples, seed=seed)
    out.csv("absorb.csv", ["t", "R", "s0", "kappa", "ergodic_rate", "empirical_max", "pass"],
            [(rep.t, rep.R, rep.s0, rep.kappa, rep.ergodic_rate, rep.empirical_max, rep.passed)])
    out.csv("absorb_empirical.csv", ["s", "max_norm"], rep.empirical)


def cmd_collapse(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .attractor import collapse_rate_check

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    run = _stage("stationary", _flow_run, cfg, drift, noise, step)
    x = _initial(triple, e.samples, seed)
    rec = _stage("collapse", collapse_rate_check, run, x[0], list(e.starts), e.t_eval, others=x[1:])
    rows = [(s, o, b, o <= b * (1 + rec.slack)) for s, o, b in rec.rows()]
    out.csv("collapse.csv", ["s", "observed2", "bound", "pass"], rows)


def _sync_interval(triple, e):
    from .attractor import bump_family

    fam = bump_family(e.bump_radius, triple.alpha, triple.mesh)
    if fam.count < 2:
        raise ConfigError("bump_radius leaves room for fewer than two bumps")
    y = fam.profiles[0] + fam.profiles[-1]
    y = y / y.max()
    return -y, y


def cmd_sync(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .attractor import synchronization_mc
    from .gelfand import DriftSpec

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    x, y = _stage("interval", _sync_interval, triple, e)
    res = _stage("sync", synchronization_mc, drift, (x, y), list(e.t_grid), e.paths, e.eps,
                 modes=max(cfg.noise.modes, 1), gamma=cfg.noise.gamma, seed=seed, dt=cfg.solver.dt)
    out.csv("sync.csv", ["t", "probability", "ci_low", "ci_high", "order_violations"],
            [(t, p, lo, hi, res.order_violations) for t, p, (lo, hi) in zip(res.t_list, res.probabilities,
                                                                           res.intervals)])
    out.csv("diameters.csv", ["path", "t", "diameter"],
            [(i, t, float(res.diameters[i, j])) for i in range(e.paths) for j, t in enumerate(res.t_list)])


def cmd_entropy(cfg: RunConfig, out: Writer, seed: int) -> None:
    from .attractor import barenblatt_entropy_lower, bump_family, covering_entropy, pullback_cloud

    e = cfg.experiment
    triple, drift, noise, step = _stage("setup", build, cfg, seed)
    run = _stage("stationary", _flow_run, cfg, drift, noise, step)
    starts = sorted(e.starts, reverse=True)
    est = _stage("cloud", pullback_cloud, run, e.t_eval, starts, e.samples, seed=seed)
    rows = covering_entropy(est.cloud, e.delta_grid, triple)
    est.entropy = rows
    out.csv("entropy.csv", ["delta", "count", "log_count"], rows)
    out.json("cloud.json", est.to_json())
    lower = []
    for delta in e.delta_grid:
        k = _stage("bump count", barenblatt_entropy_lower, delta, max(triple.alpha, 3.0), 1, triple.mesh)
        lower.append((delta, k, k * math.log(2.0)))
    out.csv("entropy_lower.csv", ["delta", "bumps", "log_lower"], lower)
    fam = _stage("bump family", bump_family, e.bump_radius, max(triple.alpha, 3.0), triple.mesh)
    m_max = min(e.bump_count, fam.count)
    bumps = []
    for m in range(1, m_max + 1):
        count = covering_entropy(fam.combinations(m), [fam.separation / 3.0], triple)[0][1]
        bumps.append((m, count, 2 ** (m - 1), count >= 2 ** (m - 1)))
    out.csv("bumps.csv", ["m", "count", "required", "pass"], bumps)


def oracle_checks(seed: int = 0) -> list:
    """(name, value, expected, tolerance) for the closed-form self-tests."""
    import numpy as np

    from . import oracles
    from .attractor import covering_entropy, entropy_exponent
    from .gelfand import Kind, Mesh1D, TripleSpec
    from .noise import make_environment

    rows = []
    q0, beta, h = 2.0, 2.5, 1.5
    exact = oracles.comparison_closed_form(q0, beta, h * 1.0)
    approx = oracles.rk4(lambda t, y: -h * y ** beta, q0, 0.0, 1.0, 2000)
    rows.append(("comparison_rk4", approx, exact, 1e-6 * exact))
    rows.append(("apriori_unit", oracles.apriori_bound(lambda r: 1.0, lambda r: 1.0, 2.0, 0.0),
                 math.sqrt(2.0), 1e-9))
    params = oracles.BarenblattParams(3.0, 1, 1.0)
    xs = np.linspace(-3, 3, 200001)
    mass = float(np.trapezoid(oracles.barenblatt(1.0, xs, params), xs))
    rows.append(("barenblatt_mass", mass, 1.0, 1e-6))
    rows.append(("entropy_exponent", entropy_exponent(3.0, 1), 0.25, 1e-15))
    tr = TripleSpec(Kind.RDE, 2.0, Mesh1D(1.0, 32))
    rows.append(("embedding_alpha2", tr.embedding_lambda, 1.0 / tr.lambda1, 1e-10))
    pts = np.array([[0.0], [1.0]])
    rows.append(("covering_two_points", covering_entropy(pts, [0.4])[0][1], 2, 0))
    # samples 5 time units apart are correlated by e^{-5} only
    env = make_environment(seed, -1.0, 50000.0, 0.01, mu=0.5, burn_in=20.0)
    z = env.ou.z_values[env.ou.times >= 0][::500]
    rows.append(("ou_variance", float(np.var(z)), 0.5, 0.03))
    return rows


def cmd_oracle(cfg: RunConfig, out: Writer, seed: int) -> None:
    rows = [(n, float(v), float(x), float(t), abs(v - x) <= t) for n, v, x, t in _stage("oracle", oracle_checks, seed)]
    out.csv("oracle.csv", ["name", "value", "expected", "tolerance", "pass"], rows)
    bad = [r[0] for r in rows if not r[4]]
    if bad:
        raise NumericalFailure("oracle", RuntimeError(f"self-tests failed: {', '.join(bad)}"))


COMMANDS = {
    "stationary": (cmd_stationary, "pullback construction of the stationary solution, stationarity and time averages"),
    "flow": (cmd_flow, "flow-property and cocycle identities"),
    "absorb": (cmd_absorb, "explicit absorbing radius with an empirical check"),
    "collapse": (cmd_collapse, "pullback collapse distances against the equilibrium rate bound"),
    "sync": (cmd_sync, "Monte-Carlo synchronization of ordered interval images (additive noise only)"),
    "entropy": (cmd_entropy, "covering counts of pullback clouds and Barenblatt bump families"),
    "oracle": (cmd_oracle, "closed-form self-tests"),
}


def check_for(command: str, cfg: RunConfig) -> None:
    """Cross-checks that depend on the subcommand; raise ConfigError before any work."""
    d = cfg.drift
    if command == "sync" and d.mu != 0:
        raise ConfigError("sync needs [drift] mu = 0")
    if command == "sync" and d.kind != "plaplace":
        raise ConfigError("sync runs the p-Laplace drift")
    if command == "collapse":
        if d.alpha <= 2:
            raise ConfigError("collapse needs [drift] alpha > 2")
        if d.lambda_sm <= 0 and (d.kind == "rde" or d.eta > 0):
            raise ConfigError("collapse needs lambda_sm > 0, or eta <= 0 for the measured constant")
    if command in ("absorb", "flow", "collapse", "entropy"):
        lo = cfg.experiment.window[0]
        if lo - 1.0 < cfg.noise.t_min:
            raise ConfigError("[experiment] window must start at least one time unit after [noise] t_min")


def _help_epilog(command: str) -> str:
    lines = ["CSV columns:"]
    for name, cols in COLUMNS[command].items():
        lines.append(f"  {name}: {cols}")
    return "\n".join(lines)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attractor-lab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=_help_epilog(name),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="INI file or a manifest.json to replay (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", default="out", help="output root; files go to <out>/<subcommand>/")
    return parser


def _versions() -> dict:
    import numpy
    import scipy

    try:
        from importlib.metadata import version

        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
            "attractor_lab": pkg}


def run(command: str, config_path: Optional[str] = None, seed: Optional[int] = None, out: str = "out") -> int:
    try:
        cap = thread_cap()
        _apply_thread_cap(cap)
        cfg = load(config_path)
        if seed is not None:
            cfg.seed = seed
        check_for(command, cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    writer = Writer(Path(out) / command)
    fn = COMMANDS[command][0]
    status, failure = EXIT_OK, None
    try:
        fn(cfg, writer, cfg.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as err:
        print(f"numerical failure in stage {err}", file=sys.stderr)
        status, failure = EXIT_NUMERIC, str(err)
    writer.json("manifest.json", {"command": command, "config": cfg.to_dict(), "seed": cfg.seed,
                                  "threads": cap, "versions": _versions(), "outputs": writer.files,
                                  "status": status, "failure": failure})
    return status


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return run(args.command, args.config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
