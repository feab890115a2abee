import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from backaction.specfun import (QuadratureError, erfc_complex, faddeeva, moshinsky, moshinsky_envelope,
                                moshinsky_quadrature)

finite = st.floats(-6, 6, allow_nan=False)


def test_erfc_zero():
    assert erfc_complex(0) == 1


@pytest.mark.parametrize("x", [-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.5, 5.0, 9.0])
def test_erfc_real_axis_matches_mpmath(x):
    ref = complex(mpmath.erfc(mpmath.mpf(x)))
    assert abs(erfc_complex(x) - ref) <= 1e-13 * abs(ref)


@pytest.mark.parametrize("z", [0.5 + 0.5j, -1 + 2j, 3 - 4j, 12 + 0.1j, -0.3 - 7j, 15 + 15j])
def test_erfc_complex_matches_mpmath(z):
    ref = complex(mpmath.erfc(mpmath.mpc(z)))
    assert abs(erfc_complex(z) - ref) <= 1e-12 * abs(ref)


def test_erfc_scalar_and_array():
    assert np.ndim(erfc_complex(0.3)) == 0
    assert erfc_complex(np.array([0.0, 1.0])).shape == (2,)


@given(finite, finite)
def test_erfc_reflection(a, b):
    z = complex(a, b)
    s = erfc_complex(z) + erfc_complex(-z)
    assert abs(s - 2) <= 1e-12 * max(1.0, abs(erfc_complex(z)))


def test_faddeeva_zero():
    assert faddeeva(0) == 1


@pytest.mark.parametrize("y", [0.1, 1.0, 3.0, 10.0])
def test_faddeeva_imaginary_axis_real(y):
    w = faddeeva(1j * y)
    assert w.imag == 0
    assert abs(w.real - float(mpmath.exp(y * y) * mpmath.erfc(y))) <= 1e-13 * w.real


def test_faddeeva_integral_representation():
    # w(z) = (i/pi) int exp(-t^2) / (z - t) dt for Im z > 0
    z = 1 + 1j
    re = integrate.quad(lambda t: (1j / np.pi * np.exp(-t * t) / (z - t)).real, -np.inf, np.inf, epsabs=1e-14)[0]
    im = integrate.quad(lambda t: (1j / np.pi * np.exp(-t * t) / (z - t)).imag, -np.inf, np.inf, epsabs=1e-14)[0]
    assert abs(faddeeva(z) - (re + 1j * im)) < 1e-10


@given(finite, finite)
def test_faddeeva_conjugate_symmetry(a, b):
    z = complex(a, b)
    lhs, rhs = faddeeva(np.conj(z)), np.conj(faddeeva(-z))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("z", [0.7 + 0.2j, -2 + 1j, 4 + 3j, -0.1 + 0.05j])
def test_faddeeva_against_mpmath(z):
    ref = complex(mpmath.exp(-mpmath.mpc(z) ** 2) * mpmath.erfc(-1j * mpmath.mpc(z)))
    assert abs(faddeeva(z) - ref) <= 1e-12 * abs(ref)


def _moshinsky_mp(z, k, t):
    z, k, t = mpmath.mpf(z), mpmath.mpc(k), mpmath.mpf(t)
    arg = mpmath.exp(-0.25j * mpmath.pi) * (z - k * t) / mpmath.sqrt(2 * t)
    return complex(0.5 * mpmath.exp(1j * k * z - 0.5j * k * k * t) * mpmath.erfc(arg))


def test_moshinsky_on_classical_trajectory():
    z, k, t = 1.5, 0.75, 2.0
    assert abs(moshinsky(z, k, t) - 0.5 * np.exp(1j * k * z - 0.5j * k * k * t)) < 1e-15


@pytest.mark.parametrize("args", [(0.5, 1.0, 1.0), (0.0, 0.0, 1.0), (1.2, -0.5j, 0.3), (-1.0, 2 - 1j, 3.0)])
def test_moshinsky_closed_form_vs_unfused_mpmath(args):
    assert abs(moshinsky(*args) - _moshinsky_mp(*args)) < 1e-13


def test_moshinsky_vs_quadrature_reference_point():
    assert abs(moshinsky(0.5, 1.0, 1.0) - moshinsky_quadrature(0.5, 1.0, 1.0)) < 1e-9
    assert abs(moshinsky(0.0, 0.0, 1.0) - moshinsky_quadrature(0.0, 0.0, 1.0)) < 1e-12
    assert abs(moshinsky(0.0, 0.0, 1.0) - 0.5) < 1e-15


def test_moshinsky_random_sweep(rng):
    z = rng.uniform(-2, 2, 100)
    k = rng.uniform(-2, 2, 100) + 1j * rng.uniform(-2, 2, 100)
    t = rng.uniform(0.1, 4.0, 100)
    worst = max(abs(moshinsky(a, b, c) - moshinsky_quadrature(a, b, c)) for a, b, c in zip(z, k, t))
    assert worst < 1e-8


@pytest.mark.parametrize("z", [-1.0, 0.0, 0.3, 2.0])
def test_moshinsky_evanescent_wavenumber(z):
    assert abs(moshinsky(z, -0.5j, 1.0) - moshinsky_quadrature(z, -0.5j, 1.0)) < 1e-8


def test_free_lorentzian_identity():
    # 2 M(0, -iG, t) = exp(i G^2 t / 2) erfc((1+i)/2 G sqrt t)
    g, t = 2.0, 1.0
    ref = complex(mpmath.exp(0.5j * g * g * t) * mpmath.erfc((1 + 1j) / 2 * g * mpmath.sqrt(t)))
    assert abs(2 * moshinsky(0.0, -1j * g, t) - ref) < 1e-13


def test_no_overflow_at_large_gamma():
    t = np.geomspace(1e-12, 10.0, 60)
    for g in (1e5, 1e6):
        for z in (0.0, 0.1 / g, 1.0):
            vals = moshinsky(z, -1j * g, t)
            assert np.all(np.isfinite(vals))
    assert np.all(np.isfinite(moshinsky(0.0, -1e6, t)))


def test_envelope_strips_phase():
    z, k, t = 0.8, 0.3 - 0.2j, 0.7
    assert abs(moshinsky(z, k, t) - np.exp(0.5j * z * z / t) * moshinsky_envelope(z, k, t)) < 1e-15


def test_time_domain_errors():
    with pytest.raises(ValueError):
        moshinsky(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        moshinsky_envelope(0.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        moshinsky_quadrature(0.0, 1.0, -1.0)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_quadrature_reports_unreachable_tolerance():
    with pytest.raises(QuadratureError):
        moshinsky_quadrature(0.3, 1.0, 1.0, tol=1e-30)
