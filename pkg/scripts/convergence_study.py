"""Grid convergence study for the point-detector problem.

Halves dz and dt together starting from a coarse grid and prints the
max relative density error on t >= t_min and the captured-norm error at
each level, plus the successive error ratios (about 4 for second order).

    python scripts/convergence_study.py --levels 4 --t-min 0.01
"""
import argparse
import time

import numpy as np

from backaction import evolution, gridsolver, validation


def level(n_points, dt, gamma, epsilon, t_final, t_min):
    grid = gridsolver.Grid1D(-30.0, 30.0, n_points)
    prof = gridsolver.AbsorberProfile((gridsolver.Absorber(0.0, epsilon),))
    t0 = time.perf_counter()
    run = gridsolver.run_detection(grid, prof, gridsolver.init_lorentzian(grid, gamma, 1), t_final, dt)
    seconds = time.perf_counter() - t0
    tr = run.traces[0]
    sel = tr.times >= t_min
    exact = np.abs(evolution.psi_exact_closed_z0(evolution.InitialState(gamma), epsilon, tr.times[sel])) ** 2
    dens = float(np.max(np.abs(tr.density[sel] - exact) / exact))
    times = [t for t in validation.CAPTURE_TIMES if t <= t_final]
    cap = validation.capture_error(run, gamma, epsilon, times)
    return grid.dz, dens, cap, seconds


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--epsilon", type=float, default=1.0)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--n0", type=int, default=2401, help="points on the coarsest grid; dz must stay <= 0.05 / gamma")
    ap.add_argument("--dt0", type=float, default=1e-3)
    ap.add_argument("--t-final", type=float, default=5.0)
    ap.add_argument("--t-min", type=float, default=0.01)
    args = ap.parse_args(argv)

    print(f"{'dz':>10} {'dt':>10} {'density':>12} {'capture':>12} {'ratio':>7} {'sec':>7}")
    prev = None
    n, dt = args.n0, args.dt0
    for _ in range(args.levels):
        dz, dens, cap, sec = level(n, dt, args.gamma, args.epsilon, args.t_final, args.t_min)
        ratio = f"{prev / cap:7.3f}" if prev else " " * 7
        print(f"{dz:10.3e} {dt:10.3e} {dens:12.4e} {cap:12.4e} {ratio} {sec:7.1f}")
        prev = cap
        n, dt = 2 * (n - 1) + 1, dt / 2


if __name__ == "__main__":
    main()
