"""Evolve the closed-form Barenblatt profile from t=1 to t=2 and report errors.

A mesh/step refinement table: relative L2 error and mass drift per (N, dt).
"""
import argparse

import numpy as np

from attractor_lab import oracles
from attractor_lab.gelfand import DriftSpec, Kind, Mesh1D, TripleSpec
from attractor_lab.stepper import StepperConfig, integrate_drift


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=3.0)
    ap.add_argument("--n", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--dt", type=float, nargs="+", default=[1e-2, 1e-3])
    args = ap.parse_args()

    par = oracles.BarenblattParams(args.alpha, 1, 1.0)
    length = 3.0 * oracles.barenblatt_support_radius(2.0, par)
    print("n,dt,l2_rel,mass_drift")
    for n in args.n:
        mesh = Mesh1D(length, n)
        x = mesh.nodes - length / 2
        u0 = oracles.barenblatt(1.0, x, par)
        exact = oracles.barenblatt(2.0, x, par)
        drift = DriftSpec(TripleSpec(Kind.PLAPLACE, args.alpha, mesh))
        for dt in args.dt:
            u = integrate_drift(drift, u0, 1.0, 2.0, StepperConfig(dt=dt)).final
            l2 = np.linalg.norm(u - exact) / np.linalg.norm(exact)
            print(f"{n},{dt:g},{l2:.3e},{abs(u.sum() - u0.sum()) / u0.sum():.3e}")


if __name__ == "__main__":
    main()
