"""Complex special functions: erfc, the Faddeeva function and the Moshinsky function.

The Moshinsky function is always evaluated in the fused form

    M(z, k, t) = 1/2 exp(i z^2 / 2t) w(e^{i pi/4} (z - k t) / sqrt(2 t)),

which follows from erfc(x) = exp(-x^2) w(ix).  The naive product
exp(ikz - ik^2 t/2) * erfc(...) overflows in one factor and underflows in the
other once |k| t is large, while the fused form only ever multiplies a unimodular
phase (for real z and t) by a bounded Faddeeva value.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, special

_ROT = np.exp(0.25j * np.pi)


class QuadratureError(RuntimeError):
    """Raised when an oracle quadrature does not reach its tolerance."""


def faddeeva(z):
    """Scaled complementary error function w(z) = exp(-z^2) erfc(-iz).

    Backed by the Faddeeva package shipped with scipy, which is accurate to a
    few ulp in both half planes.
    """
    return special.wofz(np.asarray(z, dtype=complex))


def erfc_complex(z):
    """Complementary error function of a complex argument.

    Uses erfc(z) = exp(-z^2) w(iz) on Re z >= 0 (where Im(iz) >= 0 and w is
    bounded) and the reflection erfc(z) = 2 - erfc(-z) on the other half.
    """
    z = np.asarray(z, dtype=complex)
    right = z.real >= 0
    s = np.where(right, z, -z)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(-s * s) * faddeeva(1j * s)
    # exp(-s^2) can underflow to zero while w grows; both are finite, so the
    # product is well defined except when exp overflows, which only happens for
    # |Im s| > ~26 where erfc itself is astronomically large.
    out = np.where(right, val, 2.0 - val)
    return out[()] if out.ndim == 0 else out


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("Moshinsky function requires t > 0")
    return t


def moshinsky(z, k, t):
    """Moshinsky function M(z, k, t) for real z, complex k and t > 0.

    Broadcasts over array arguments.  Equivalent to
    1/2 exp(ikz - ik^2 t/2) erfc(e^{-i pi/4}(z - kt)/sqrt(2t)).
    """
    t = _check_time(t)
    z = np.asarray(z, dtype=complex)
    k = np.asarray(k, dtype=complex)
    arg = _ROT * (z - k * t) / np.sqrt(2.0 * t)
    out = 0.5 * np.exp(0.5j * z * z / t) * faddeeva(arg)
    return out[()] if out.ndim == 0 else out


def moshinsky_envelope(z, k, t):
    """M(z, k, t) with the free phase exp(i z^2 / 2t) stripped off.

    Smooth as t -> 0+ for z > 0, which lets callers pull the oscillating phase
    into a Fourier-weighted quadrature.
    """
    t = _check_time(t)
    arg = _ROT * (np.asarray(z, dtype=complex) - np.asarray(k, dtype=complex) * t) / np.sqrt(2.0 * t)
    return 0.5 * faddeeva(arg)


def moshinsky_quadrature(z: float, k: complex, t: float, tol: float = 1e-11) -> complex:
    """Half-line integral definition of M(z, k, t), evaluated by quadrature.

    The integral over z' in (-inf, 0] of exp(ikz' + i(z - z')^2/2t)/sqrt(2 pi i t)
    is taken along the ray z' = -r e^{i pi/4}, r >= 0, on which the Gaussian
    phase becomes a decaying Gaussian.  The integrand is entire, so the rotation
    does not change the value.  Reference oracle only; slow.
    """
    if t <= 0:
        raise ValueError("Moshinsky function requires t > 0")
    k = complex(k)
    norm = 1.0 / np.sqrt(2j * np.pi * t)

    def f(r):
        zp = -r * _ROT
        return _ROT * norm * np.exp(1j * k * zp + 0.5j * (z - zp) ** 2 / t)

    # the modulus peaks near r ~ max(0, -z/sqrt2) with width ~ sqrt(t)
    centre = max(0.0, -z / np.sqrt(2.0))
    width = np.sqrt(t)
    pts = sorted({0.0, centre, centre + 4 * width})
    total = 0.0 + 0.0j
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            v, e = integrate.quad(f, a, b, complex_func=True, epsabs=tol * 1e-2, epsrel=tol, limit=400)
            total += v
            err += abs(e)
    v, e = integrate.quad(f, pts[-1], np.inf, complex_func=True, epsabs=tol * 1e-2, epsrel=tol, limit=400)
    total += v
    err += abs(e)
    # cancellation is intrinsic when |f| is much larger than |M|, so the error
    # is judged against the L1 mass of the integrand
    l1 = sum(integrate.quad(lambda r: abs(f(r)), a, b, limit=400)[0] for a, b in zip(pts, pts[1:] + [np.inf]))
    if err > tol * max(abs(total), l1):
        raise QuadratureError(f"Moshinsky quadrature error estimate {err:.2e} exceeds tolerance")
    return complex(total)
