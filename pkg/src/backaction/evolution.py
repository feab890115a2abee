"""Amplitude of the Lorentzian condensate at the detector position.

The initial state is phi(z, 0) = sqrt(Gamma) exp(-Gamma |z|).  Five ways of
evolving it to the detector site z0 are provided:

``free``             no detector at all (the quantum-counting baseline)
``exact``            closed-form absorptive propagator integrated over z'
``exact_closed_z0``  the closed-form amplitude for a detector at the origin
``born2``            first Lippmann-Schwinger iterate (second order in G0)
``born_exp``         the Born correction resummed into an exponent

All internal arithmetic is in natural units; ``PhysicalScales`` converts times
and detector strengths on the way in.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .propagators import NATURAL, Convention, PhysicalScales, PointDetector, amplitude_rate
from .specfun import QuadratureError, faddeeva, moshinsky

Method = Literal["free", "exact", "exact_closed_z0", "born2", "born_exp", "grid"]
METHODS = ("free", "exact", "exact_closed_z0", "born2", "born_exp", "grid")

_ROT = np.exp(0.25j * np.pi)
_SQRT_2PI_I = np.sqrt(2j * np.pi)
_EPSABS = 1e-13
_EPSREL = 1e-11
_RUN_IDS = itertools.count(1)


class NearZeroAmplitudeError(ArithmeticError):
    """The free amplitude is too small to divide by in the exponential Born form."""


@dataclass(frozen=True)
class InitialState:
    gamma: float
    n_particles: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.n_particles < 0:
            raise ValueError("n_particles must be non-negative")

    def amplitude(self, z):
        """phi(z, 0) = sqrt(Gamma) exp(-Gamma |z|); unit L2 norm."""
        return np.sqrt(self.gamma) * np.exp(-self.gamma * np.abs(np.asarray(z, dtype=float)))


@dataclass
class AmplitudeTrace:
    """Complex amplitude at one detector site sampled on a time grid.

    ``run_id`` ties traces that were produced together (one grid run with two
    detectors, say); joint statistics refuse traces with different ids.
    """

    method: str
    times: np.ndarray
    values: np.ndarray
    detector: PointDetector
    run_id: str = field(default_factory=lambda: f"run-{next(_RUN_IDS)}")

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size and (self.times[0] < 0 or np.any(np.diff(self.times) <= 0)):
            raise ValueError("times must be strictly increasing and start at t >= 0")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def _nonneg_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return t


def _free_natural(gamma: float, z0: float, tn):
    """psi_free in natural units; tn may be an array, t = 0 handled exactly."""
    tn = np.asarray(tn, dtype=float)
    out = np.empty(tn.shape, dtype=complex)
    pos = tn > 0
    out[~pos] = np.sqrt(gamma) * np.exp(-gamma * abs(z0))
    if np.any(pos):
        tp = tn[pos]
        out[pos] = np.sqrt(gamma) * (moshinsky(z0, -1j * gamma, tp) + moshinsky(-z0, -1j * gamma, tp))
    return out


def psi_free(state: InitialState, z0: float, t, scales: PhysicalScales = NATURAL):
    """Free evolution sqrt(G) [M(z0, -iG, t) + M(-z0, -iG, t)] of the initial state.

    Each half line of the kinked initial profile contributes one Moshinsky
    term; at z0 = 0 the two coincide.
    """
    tn = scales.time(_nonneg_time(t))
    out = _free_natural(state.gamma, float(z0), tn)
    return out[()] if out.ndim == 0 else out


def _cquad(f, a, b, epsabs=_EPSABS):
    v, e = integrate.quad(f, a, b, complex_func=True, epsabs=epsabs, epsrel=_EPSREL, limit=500)
    return v, abs(e)


def _kernel_overlap(gamma: float, z0: float, tn: float, k: complex) -> complex:
    """int dz' M(|z' - z0|, k, t) exp(-Gamma |z'|) for z0 >= 0.

    The two semi-infinite pieces are taken along rays rotated by pi/4 into the
    first quadrant of the distance variable, where exp(i x^2 / 2t) decays;
    the finite piece between the kinks z' = 0 and z' = z0 is real-line.
    The ray variable is scaled by the shortest of the two decay lengths.
    """
    sigma = min(np.sqrt(2.0 * tn), 1.0 / gamma)
    # |M| is O(1), so the overlap is O(1 / Gamma)
    atol = _EPSABS / gamma

    def ray(x_shift, damp):
        # int_0^inf M(x_shift + x, k, t) exp(-damp - Gamma x) dx, x = sigma r e^{i pi/4}
        def f(r):
            x = sigma * r * _ROT
            return sigma * _ROT * moshinsky(x_shift + x, k, tn) * np.exp(-damp - gamma * x)
        return _cquad(f, 0.0, np.inf, atol)

    right, e1 = ray(0.0, gamma * z0)   # z' = z0 + x
    left, e2 = ray(z0, 0.0)            # z' = -x
    total, err = right + left, e1 + e2
    if z0 > 0:
        mid, e3 = _cquad(lambda zp: moshinsky(z0 - zp, k, tn) * np.exp(-gamma * zp), 0.0, z0, atol)
        total += mid
        err += e3
    if err > 1e-8 * max(1.0 / gamma, abs(total)):
        raise QuadratureError(f"z' quadrature error estimate {err:.2e} too large")
    return total


def _psi_kernel(state: InitialState, det: PointDetector, t, scales: PhysicalScales, k_of_kappa):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    tn = np.atleast_1d(scales.time(t))
    kap = scales.rate(det.kappa)
    z0 = abs(float(det.z0))  # the initial state is even
    base = _free_natural(state.gamma, z0, tn)
    if kap == 0:
        return base[0] if t.ndim == 0 else base
    corr = np.array([_kernel_overlap(state.gamma, z0, float(x), k_of_kappa(kap)) for x in tn])
    out = base + 1j * kap * np.sqrt(state.gamma) * corr
    return out[0] if t.ndim == 0 else out


def psi_exact(state: InitialState, det: PointDetector, t, scales: PhysicalScales = NATURAL):
    """Amplitude at det.z0 under the exact absorptive propagator.

    phi~(z0, t) = psi_free + i kappa sqrt(G) int M(|z' - z0|, -kappa, t) e^{-G|z'|} dz'.
    """
    return _psi_kernel(state, det, t, scales, lambda kap: -kap)


def psi_exact_closed_z0(state: InitialState, epsilon: float, t, convention: Convention = "paper_literal",
                        scales: PhysicalScales = NATURAL):
    """Closed-form amplitude at a detector placed at the origin.

    sqrt(G) (G e^{iG^2 t/2} erfc((1+i)/2 sqrt(t) G) + i k e^{-ik^2 t/2} erfc((1-i)/2 k sqrt(t))) / (G + ik)

    with k the amplitude rate.  Each exp*erfc pair is evaluated as one
    Faddeeva value, w((i-1) G sqrt(t)/2) and w((1+i) k sqrt(t)/2), so the
    expression stays finite for Gamma = 1e5 and beyond.
    """
    g = state.gamma
    kap = scales.rate(amplitude_rate(epsilon, convention))
    rt = np.sqrt(scales.time(_nonneg_time(t)))
    num = g * faddeeva((1j - 1) * 0.5 * g * rt) + 1j * kap * faddeeva((1 + 1j) * 0.5 * kap * rt)
    out = np.sqrt(g) * num / (g + 1j * kap)
    return out[()] if np.ndim(out) == 0 else out


def free_convolution(state: InitialState, z0: float, t: float, scales: PhysicalScales = NATURAL,
                     tol: float = 1e-7) -> complex:
    """c(t) = int_0^t G0(z0, z0, t - t') psi_free(z0, t') dt' by time quadrature.

    Split at t/2: t' = v^2 on the first half and t' = t - u^2 on the second,
    which removes the inverse square-root endpoint singularity of the kernel.
    Both halves are mapped to a in [0, 1/sqrt 2] and summed under one rule.
    For z0 != 0 the free amplitude carries a sqrt(t') exp(i z0^2 / 2t') tail
    near t' = 0, which limits the attainable accuracy; this routine is the
    oracle for ``born_correction``, not the production path.
    """
    tn = float(scales.time(t))
    if tn <= 0:
        raise ValueError("t must be positive")
    g, z0 = state.gamma, abs(float(z0))

    def f(a):
        first = 2.0 * a * _free_natural(g, z0, tn * a * a)[()] / np.sqrt(1.0 - a * a)
        second = 2.0 * _free_natural(g, z0, tn * (1.0 - a * a))[()]
        return (first + second) / _SQRT_2PI_I

    # the free amplitude changes on the time scale 1/G^2
    pts = [p for p in (1.0 / (g * np.sqrt(tn)),) if 0 < p < np.sqrt(0.5)]
    val, err = integrate.quad(f, 0.0, np.sqrt(0.5), complex_func=True, points=pts or None,
                              epsabs=_EPSABS / np.sqrt(tn), epsrel=_EPSREL, limit=1000)
    if abs(err) > tol * max(np.sqrt(g), abs(val)):
        raise QuadratureError(f"time convolution error estimate {abs(err):.2e} too large")
    return np.sqrt(tn) * val


def born_correction(state: InitialState, z0: float, t, scales: PhysicalScales = NATURAL):
    """c(t) of ``free_convolution`` through the equivalent space integral.

    The time convolution of two free propagators through z0 is -i M(d, 0, t),
    so c(t) = -i sqrt(G) int M(|z' - z0|, 0, t) e^{-G|z'|} dz', which the
    rotated-contour quadrature evaluates to near machine precision.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    tn = np.atleast_1d(scales.time(t))
    g = state.gamma
    out = np.array([-1j * np.sqrt(g) * _kernel_overlap(g, abs(float(z0)), float(x), 0.0) for x in tn])
    return out[0] if t.ndim == 0 else out


def _born_pieces(state, det, t, scales):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    ts = np.atleast_1d(t)
    pf = np.atleast_1d(psi_free(state, det.z0, ts, scales))
    kap = scales.rate(det.kappa)
    c = np.zeros_like(pf)
    if kap != 0:
        c = np.atleast_1d(born_correction(state, det.z0, ts, scales))
    return t.ndim == 0, pf, kap, c


def psi_born2(state: InitialState, det: PointDetector, t, scales: PhysicalScales = NATURAL):
    """Second-order Born amplitude psi_free - kappa c(t); see ``born_correction``."""
    scalar, pf, kap, c = _born_pieces(state, det, t, scales)
    out = pf - kap * c
    return out[0] if scalar else out


def psi_born_exp(state: InitialState, det: PointDetector, t, scales: PhysicalScales = NATURAL,
                 min_abs: float = 1e-12):
    """Exponential Born amplitude psi_free exp(-kappa c(t) / psi_free).

    Its first-order expansion is ``psi_born2``.  Raises NearZeroAmplitudeError
    when |psi_free| < min_abs sqrt(Gamma) instead of clamping.
    """
    scalar, pf, kap, c = _born_pieces(state, det, t, scales)
    if kap == 0:
        return pf[0] if scalar else pf
    small = np.abs(pf) < min_abs * np.sqrt(state.gamma)
    if np.any(small):
        raise NearZeroAmplitudeError(f"|psi_free| below {min_abs:g} sqrt(Gamma) at t = {np.atleast_1d(t)[small][0]:g}")
    out = pf * np.exp(-kap * c / pf)
    return out[0] if scalar else out


def time_grid(gamma: float, t_max: float, n: int = 400, scales: PhysicalScales = NATURAL) -> np.ndarray:
    """0 followed by n geometric points from 1e-3 m / (hbar Gamma^2) to t_max.

    The amplitude changes on the time scale m / (hbar Gamma^2) early on and
    as a power law later, so uniform grids waste points.
    """
    t_min = 1e-3 * scales.mass / (scales.hbar * gamma * gamma)
    if t_max <= t_min:
        raise ValueError(f"t_max must exceed t_min = {t_min:g}")
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n)])


_DRIVERS = {
    "free": lambda s, d, t, sc: psi_free(s, d.z0, t, sc),
    "exact": psi_exact,
    "exact_closed_z0": lambda s, d, t, sc: psi_exact_closed_z0(s, d.epsilon, t, d.convention, sc),
    "born2": psi_born2,
    "born_exp": psi_born_exp,
}


def build_trace(method: str, state: InitialState, det: PointDetector, times,
                scales: PhysicalScales = NATURAL, run_id: str | None = None) -> AmplitudeTrace:
    """Evaluate one method on ``times``; t = 0 is the initial condition."""
    if method not in _DRIVERS:
        raise ValueError(f"method {method!r} has no analytic driver")
    if method == "exact_closed_z0" and det.z0 != 0:
        raise ValueError("the closed form is only valid for a detector at z0 = 0")
    times = np.asarray(times, dtype=float)
    values = np.empty(times.shape, dtype=complex)
    zero = times == 0
    values[zero] = state.amplitude(det.z0)
    if np.any(~zero):
        values[~zero] = _DRIVERS[method](state, det, times[~zero], scales)
    kw = {} if run_id is None else {"run_id": run_id}
    return AmplitudeTrace(method, times, values, det, **kw)
