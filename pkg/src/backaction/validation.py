"""Oracle suite: each check compares a production path with an independent one."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from scipy import integrate

from . import counting, evolution, gridsolver, propagators, specfun


@dataclass(frozen=True)
class CheckResult:
    """``lower <= value < threshold`` passes; lower defaults to -inf."""

    name: str
    value: float
    threshold: float
    seconds: float
    lower: float = -np.inf
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value)) and self.lower <= self.value < self.threshold

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bound = f"threshold {self.threshold:.1e}" if self.lower == -np.inf else f"range [{self.lower:g}, {self.threshold:g}]"
        text = f"{status}  {self.name:<34s} {self.value:.3e} ({bound}, {self.seconds:.1f} s)"
        return text + (f"  {self.note}" if self.note else "")


def _timed(name, threshold, fn, lower=-np.inf):
    t0 = time.perf_counter()
    note = ""
    try:
        value = float(fn())
    except (specfun.QuadratureError, ArithmeticError, ValueError) as exc:
        note = f"{type(exc).__name__}: {exc}"
        value = float("inf")
    return CheckResult(name, value, threshold, time.perf_counter() - t0, lower, note)


def check_ls_residual(epsilon: float = 1.0) -> float:
    """Worst Lippmann-Schwinger residual over the documented lattice."""
    ts = np.geomspace(0.05, 5.0, 12)
    worst = 0.0
    for factor in (0.5, 1.0, 2.0):
        for zp in (0.0, 0.3, 1.0):
            det = propagators.PointDetector(0.0, factor * epsilon)
            worst = max(worst, propagators.ls_residual(det, zp, ts))
    return worst


def check_moshinsky(seed: int = 12345, n: int = 100) -> float:
    """Closed form against the half-line quadrature on random points."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(-2, 2, n)
    k = rng.uniform(-2, 2, n) + 1j * rng.uniform(-2, 2, n) * (rng.uniform(size=n) < 0.5)
    t = rng.uniform(0.1, 4.0, n)
    return max(abs(specfun.moshinsky(a, b, c) - specfun.moshinsky_quadrature(a, b, c)) for a, b, c in zip(z, k, t))


def check_closed_form(gamma: float = 2.0, epsilon: float = 1.0) -> float:
    """psi_exact quadrature at z0 = 0 against the closed-form amplitude."""
    st = evolution.InitialState(gamma)
    ts = np.geomspace(0.01, 5.0, 25) / (gamma / 2.0) ** 2
    a = evolution.psi_exact(st, propagators.PointDetector(0.0, epsilon), ts)
    b = evolution.psi_exact_closed_z0(st, epsilon, ts)
    return float(np.max(np.abs(a - b)))


def grid_oracle(gamma: float = 2.0, epsilon: float = 1.0, grid: gridsolver.Grid1D | None = None,
                dt: float = 2.5e-4, t_final: float = 5.0, convention: str = "paper_literal"):
    """Run the point-detector grid problem; returns (run, max relative density error on [0.01, t_final])."""
    grid = grid or gridsolver.Grid1D()
    prof = gridsolver.AbsorberProfile((gridsolver.Absorber(0.0, epsilon),), convention)
    run = gridsolver.run_detection(grid, prof, gridsolver.init_lorentzian(grid, gamma, 1), t_final, dt)
    tr = run.traces[0]
    sel = tr.times >= 0.01
    exact = np.abs(evolution.psi_exact_closed_z0(evolution.InitialState(gamma), epsilon, tr.times[sel],
                                                 convention)) ** 2
    return run, float(np.max(np.abs(tr.density[sel] - exact) / exact))


def analytic_capture(gamma: float, epsilon: float, times, convention: str = "paper_literal") -> np.ndarray:
    """Norm captured by a point detector at the origin, 2 kappa int_0^t |phi~(0, t')|^2 dt'."""
    st = evolution.InitialState(gamma)
    kap = propagators.amplitude_rate(epsilon, convention)
    dens = lambda t: abs(evolution.psi_exact_closed_z0(st, epsilon, t, convention)) ** 2
    out, prev, acc = [], 0.0, 0.0
    for t in np.asarray(times, dtype=float):
        acc += integrate.quad(dens, prev, t, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        prev = t
        out.append(2.0 * kap * acc)
    return np.asarray(out)


CAPTURE_TIMES = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0)


def capture_error(run: gridsolver.DetectionRun, gamma: float, epsilon: float,
                  times=CAPTURE_TIMES, convention: str = "paper_literal") -> float:
    """Max |capture_grid - capture_analytic| at ``times``, which must be sample times of ``run``."""
    idx = [int(np.argmin(np.abs(run.times - t))) for t in times]
    if any(abs(run.times[i] - t) > 1e-9 * max(1.0, t) for i, t in zip(idx, times)):
        raise ValueError("capture times are not sample times of the run")
    ref = analytic_capture(gamma, epsilon, times, convention)
    return float(np.max(np.abs(run.captures[0, idx] - ref)))


def convergence_ratio(gamma: float = 2.0, epsilon: float = 1.0, grid: gridsolver.Grid1D | None = None,
                      dt: float = 2.5e-4, fine_run: gridsolver.DetectionRun | None = None) -> float:
    """Capture-error ratio between (2 dz, 2 dt) and (dz, dt); about 4 for a second-order scheme."""
    grid = grid or gridsolver.Grid1D()
    t_final = max(CAPTURE_TIMES)
    coarse = gridsolver.Grid1D(grid.z_min, grid.z_max, (grid.n_points - 1) // 2 + 1)
    errs = []
    for g, step, run in ((grid, dt, fine_run), (coarse, 2 * dt, None)):
        if run is None:
            prof = gridsolver.AbsorberProfile((gridsolver.Absorber(0.0, epsilon),))
            run = gridsolver.run_detection(g, prof, gridsolver.init_lorentzian(g, gamma, 1), t_final, step)
        errs.append(capture_error(run, gamma, epsilon))
    return errs[1] / errs[0]


def check_scale_invariance(gamma: float = 2.0, epsilon: float = 1.0, lam: float = 100.0,
                           z0_scaled: float = 0.1, n_times: int = 80) -> float:
    """Relative change of I(tau) under (z0, t, G, eps) -> (lam z0, lam^2 t, G/lam, eps/lam)."""
    curves = []
    for s in (1.0, lam):
        g = gamma / s
        st = evolution.InitialState(g, 1.0)
        det = propagators.PointDetector(z0_scaled / g, epsilon / s)
        ts = evolution.time_grid(g, 10.0 * s * s / gamma ** 2, n_times)
        tr = evolution.build_trace("exact", st, det, ts)
        curves.append(counting.intensity_from_trace(tr, 1.0).intensity)
    a, b = curves
    scale = max(np.max(np.abs(a)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def run_suite(gamma: float = 2.0, epsilon: float = 1.0, seed: int = 12345,
              grid: gridsolver.Grid1D | None = None, dt: float = 2.5e-4, t_final: float = 5.0) -> list[CheckResult]:
    results = [
        _timed("lippmann_schwinger_residual", 1e-6, lambda: check_ls_residual(epsilon)),
        _timed("moshinsky_vs_quadrature", 1e-8, lambda: check_moshinsky(seed)),
        _timed("closed_form_vs_quadrature", 1e-8, lambda: check_closed_form(gamma, epsilon)),
        _timed("scale_invariance_lambda_100", 1e-6, lambda: check_scale_invariance(gamma, epsilon)),
    ]
    holder = {}

    def grid_check():
        run, err = grid_oracle(gamma, epsilon, grid, dt, t_final)
        holder["run"] = run
        return err

    results.append(_timed("grid_vs_closed_form", 1e-3, grid_check))
    if "run" in holder:
        results.append(CheckResult("grid_norm_bookkeeping", holder["run"].final_state.bookkeeping_error(), 1e-6, 0.0))
        if epsilon > 0 and t_final >= max(CAPTURE_TIMES):
            results.append(_timed("grid_convergence_ratio", 4.5,
                                  lambda: convergence_ratio(gamma, epsilon, grid, dt, holder["run"]), lower=3.5))
    else:
        results.append(CheckResult("grid_convergence_ratio", float("inf"), 4.5, 0.0, 3.5, "grid run failed"))
    return results
