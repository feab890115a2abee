"""Free and absorptive one-dimensional propagators.

Everything is evaluated in natural units (hbar = m = 1).  ``PhysicalScales``
converts at the boundary: a physical time t maps to hbar t / m (a squared
length) and a detector strength epsilon maps to m epsilon / hbar (an inverse
length), after which the formulas carry no hbar or m.

A point detector at z0 adds the non-Hermitian term -i hbar kappa delta(z - z0)
to the Hamiltonian.  The closed-form propagator is

    G(z, z', t) = G0(z, z', t) + i kappa M(|z - z0| + |z' - z0|, -kappa, t).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate

from .specfun import QuadratureError, faddeeva, moshinsky

Convention = Literal["paper_literal", "flux_consistent"]
CONVENTIONS = ("paper_literal", "flux_consistent")

_ROT = np.exp(0.25j * np.pi)
_SQRT_2PI_I = np.sqrt(2j * np.pi)


@dataclass(frozen=True)
class PhysicalScales:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.hbar <= 0 or self.mass <= 0:
            raise ValueError("hbar and mass must be positive")

    def time(self, t):
        """Physical time -> natural time (hbar t / m)."""
        return np.asarray(t, dtype=float) * self.hbar / self.mass

    def rate(self, epsilon):
        """Physical detector strength -> natural inverse length (m eps / hbar)."""
        return epsilon * self.mass / self.hbar


NATURAL = PhysicalScales()


def amplitude_rate(epsilon: float, convention: Convention) -> float:
    """Map the user-facing detector strength to the amplitude decay rate kappa.

    ``paper_literal`` keeps kappa = epsilon, matching the generator
    H0 - i eps hbar Omega.  ``flux_consistent`` uses kappa = epsilon / 2 so the
    density decays at rate epsilon, as in the single-mode counting formula.
    """
    if convention == "paper_literal":
        return float(epsilon)
    if convention == "flux_consistent":
        return 0.5 * float(epsilon)
    raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


@dataclass(frozen=True)
class PointDetector:
    z0: float = 0.0
    epsilon: float = 1.0
    convention: Convention = "paper_literal"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("detector strength must be non-negative")
        amplitude_rate(self.epsilon, self.convention)

    @property
    def kappa(self) -> float:
        """Amplitude decay rate in the units of ``epsilon``."""
        return amplitude_rate(self.epsilon, self.convention)

    @property
    def flux_factor(self) -> float:
        """Prefactor turning the time-integrated density into counts."""
        return self.epsilon if self.convention == "paper_literal" else 2.0 * self.kappa


def _positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("propagators are defined for t > 0 only")
    return t


def free_propagator(z, zp, t, scales: PhysicalScales = NATURAL):
    """sqrt(m / 2 pi i hbar t) exp(i m (z - z')^2 / 2 hbar t); principal root."""
    tn = scales.time(_positive_time(t))
    d = np.asarray(z, dtype=float) - np.asarray(zp, dtype=float)
    out = np.exp(0.5j * d * d / tn) / np.sqrt(2j * np.pi * tn)
    return out[()] if np.ndim(out) == 0 else out


def _moshinsky_term(z, zp, t, det: PointDetector, scales: PhysicalScales, k_offset=None):
    tn = scales.time(t)
    kap = scales.rate(det.kappa)
    dist = np.abs(np.asarray(z, dtype=float) - det.z0) + np.abs(np.asarray(zp, dtype=float) - det.z0)
    k = -kap if k_offset is None else k_offset
    return 1j * kap * moshinsky(dist, k, tn)


def absorptive_propagator(z, zp, t, det: PointDetector, scales: PhysicalScales = NATURAL):
    """Exact propagator in the presence of a point absorber at ``det.z0``."""
    t = _positive_time(t)
    g0 = free_propagator(z, zp, t, scales)
    if det.kappa == 0:
        return g0
    return g0 + _moshinsky_term(z, zp, t, det, scales)


def born2_propagator(z, zp, t, det: PointDetector, scales: PhysicalScales = NATURAL):
    """First Lippmann-Schwinger iterate G0 - kappa int G0 * G0.

    The time convolution of two free propagators through z0 has the closed
    form -(i/2) erfc(e^{-i pi/4} d / sqrt(2t)) = -i M(d, 0, t), so this kernel
    is the exact one with the Moshinsky wavenumber -kappa replaced by 0.
    """
    t = _positive_time(t)
    g0 = free_propagator(z, zp, t, scales)
    if det.kappa == 0:
        return g0
    return g0 + _moshinsky_term(z, zp, t, det, scales, k_offset=0.0)


def laplace_free_propagator(z0, zp, s, scales: PhysicalScales = NATURAL):
    """Laplace transform over t of G0(z0, z', t): sqrt(m/2i hbar s) exp(-sqrt(2ms/i hbar)|z0 - z'|)."""
    s = np.asarray(s, dtype=complex)
    if np.any(s.real <= 0):
        raise ValueError("Laplace variable must satisfy Re(s) > 0")
    m, hb = scales.mass, scales.hbar
    d = np.abs(np.asarray(z0, dtype=float) - np.asarray(zp, dtype=float))
    out = np.sqrt(m / (2j * hb * s)) * np.exp(-np.sqrt(2.0 * m * s / (1j * hb)) * d)
    return out[()] if out.ndim == 0 else out


def laplace_absorptive_propagator(zp, s, det: PointDetector, scales: PhysicalScales = NATURAL):
    """Laplace transform of G(z0, z', t) from the resolvent identity.

    G~ = G~0(z0, z') / (1 + kappa G~0(z0, z0)); the plus sign is the one that
    follows from G = G0 - kappa int G0 G and gives |G| <= |G0|.
    """
    g0 = laplace_free_propagator(det.z0, zp, s, scales)
    g00 = laplace_free_propagator(det.z0, det.z0, s, scales)
    return g0 / (1.0 + det.kappa * g00)


# -- Lippmann-Schwinger residual -------------------------------------------------

def _ls_convolution(d: float, t: float, kap: float, k: complex, tol: float) -> complex:
    """int_0^t G0(z0, z0, t - t') G_k(z0, z', t') dt' in natural units.

    G_k = G0 + i kap M(d, k, t) with d = |z' - z0|.  On [t/2, t] the inverse
    square-root kernel is removed by t' = t - u^2.  On (0, t/2] the kernel is
    smooth; for d = 0 the 1/sqrt(t') singularity of G_k is removed by t' = v^2,
    and for d > 0 the essential oscillation exp(i d^2 / 2t') is handled by the
    change of variables v = 1/t' and a Fourier-weighted rule on [2/t, inf).
    """

    def g_k(tp):
        return np.exp(0.5j * d * d / tp) / (_SQRT_2PI_I * np.sqrt(tp)) + 1j * kap * moshinsky(d, k, tp)

    total = 0.0 + 0.0j
    err = 0.0
    half = np.sqrt(0.5 * t)

    # t' in [t/2, t]: G0(z0,z0,u^2) * 2u du = 2/sqrt(2 pi i) du
    v, e = integrate.quad(lambda u: 2.0 / _SQRT_2PI_I * g_k(t - u * u), 0.0, half,
                          complex_func=True, epsabs=tol, epsrel=tol, limit=400)
    total += v
    err += abs(e)

    if d == 0.0:
        def f(vv):
            tp = vv * vv
            kern = 1.0 / (_SQRT_2PI_I * np.sqrt(t - tp))
            env = 1.0 / _SQRT_2PI_I + 1j * kap * vv * (0.5 * faddeeva(_ROT * (-k * tp) / np.sqrt(2.0 * tp)) if tp > 0 else 0.5)
            return 2.0 * kern * env

        v, e = integrate.quad(f, 0.0, half, complex_func=True, epsabs=tol, epsrel=tol, limit=400)
        total += v
        err += abs(e)
    else:
        omega = 0.5 * d * d

        def envelope(vv):
            tp = 1.0 / vv
            kern = 1.0 / (_SQRT_2PI_I * np.sqrt(t - tp))
            env = np.sqrt(vv) / _SQRT_2PI_I + 1j * kap * 0.5 * faddeeva(_ROT * (d - k * tp) * np.sqrt(0.5 * vv))
            return kern * env / (vv * vv)

        lo = 2.0 / t
        fr = lambda vv: envelope(vv).real
        fi = lambda vv: envelope(vv).imag
        cr, er1 = integrate.quad(fr, lo, np.inf, weight="cos", wvar=omega, epsabs=tol, limlst=200, limit=400)
        sr, er2 = integrate.quad(fr, lo, np.inf, weight="sin", wvar=omega, epsabs=tol, limlst=200, limit=400)
        ci, er3 = integrate.quad(fi, lo, np.inf, weight="cos", wvar=omega, epsabs=tol, limlst=200, limit=400)
        si, er4 = integrate.quad(fi, lo, np.inf, weight="sin", wvar=omega, epsabs=tol, limlst=200, limit=400)
        total += (cr - si) + 1j * (sr + ci)
        err += er1 + er2 + er3 + er4
    if err > 1e3 * tol * max(1.0, abs(total)):
        raise QuadratureError(f"LS convolution error estimate {err:.2e} too large")
    return total


def ls_residual(det: PointDetector, zp: float, t_grid, scales: PhysicalScales = NATURAL,
                kernel: Literal["exact", "born2"] = "exact", tol: float = 1e-12) -> float:
    """Max over ``t_grid`` of |G - G0 + kappa int_0^t G0(z0,z0,t-t') G(z0,z',t') dt'|.

    ``kernel`` selects the propagator being checked: the closed-form exact one
    or the first Born iterate, which should visibly fail at large kappa t.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    if det.kappa == 0:
        return 0.0
    func = absorptive_propagator if kernel == "exact" else born2_propagator
    kap = scales.rate(det.kappa)
    k = -kap if kernel == "exact" else 0.0
    d = abs(zp - det.z0)
    worst = 0.0
    for t in t_grid:
        tn = float(scales.time(t))
        g = func(det.z0, zp, t, det, scales)
        g0 = free_propagator(det.z0, zp, t, scales)
        conv = _ls_convolution(d, tn, kap, k, tol)
        worst = max(worst, abs(g - g0 + kap * conv))
    return float(worst)
