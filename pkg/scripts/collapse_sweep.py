"""Observed pullback distances against the equilibrium rate bound.

For each (alpha, mu, seed) prints the largest observed/bound ratio over the
start times. Ratios well below 1 mean the bound is loose but valid.
"""
import argparse

import numpy as np

from attractor_lab.attractor import collapse_rate_check
from attractor_lab.flow import FlowRun
from attractor_lab.gelfand import DriftSpec, Kind, Mesh1D, TripleSpec, dirichlet_basis
from attractor_lab.noise import make_environment, power_law_eigenvalues


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, nargs="+", default=[3.0, 4.0])
    ap.add_argument("--mu", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n", type=int, default=32)
    args = ap.parse_args()

    mesh = Mesh1D(1.0, args.n)
    starts = list(np.linspace(-9.0, -0.5, 10))
    for alpha in args.alpha:
        tr = TripleSpec(Kind.PLAPLACE, alpha, mesh)
        basis = dirichlet_basis(tr, 8)
        for mu in args.mu:
            for seed in range(args.seeds):
                env = make_environment(seed, -20.0, 0.0, 0.01, mu=mu, eigenvalues=power_law_eigenvalues(8),
                                       basis=basis)
                run = FlowRun(DriftSpec(tr, mu=mu, sigma=1.0), env, window=(-10.0, 0.0))
                x = np.random.default_rng(seed).normal(size=(4, args.n))
                rec = collapse_rate_check(run, x[0], starts, 0.0, others=x[1:])
                ratio = np.max(rec.observed / rec.bound)
                print(f"alpha={alpha:g} mu={mu:g} seed={seed} max_ratio={ratio:.3e} passed={rec.passed}")


if __name__ == "__main__":
    main()
