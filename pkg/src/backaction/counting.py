"""Intensities and counting distributions.

For a coherent condensate the normal-ordered counting formula collapses to a
Poisson law whose parameter is the expected number of counts

    I(tau) = N f int_0^tau |phi~(z0, t)|^2 dt,

with f the flux factor of the detector convention (epsilon for
``paper_literal``, 2 kappa for ``flux_consistent``; numerically both equal
epsilon).  Single-mode fields are handled by the binomial-kernel formulas of
quantum counting (no depletion) and of continuous measurement (depletion).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import integrate, special, stats

from .evolution import AmplitudeTrace
from .propagators import PointDetector

_TAIL = 1e-16
_FLAG_TOL = 1e-6


# -- data types ------------------------------------------------------------------

@dataclass
class IntensityCurve:
    """Expected counts I(tau) (not I/N) for one method."""

    method: str
    taus: np.ndarray
    intensity: np.ndarray
    convention: str
    n_particles: float = 1.0
    error: np.ndarray | None = None

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.taus.shape != self.intensity.shape:
            raise ValueError("taus and intensity must have equal shapes")
        if np.any(self.intensity < 0):
            raise ValueError("intensity must be non-negative")

    def per_particle(self) -> np.ndarray:
        return self.intensity / self.n_particles if self.n_particles else np.zeros_like(self.intensity)

    def at(self, tau: float) -> float:
        """Linear interpolation of I at tau inside the sampled range."""
        if not self.taus[0] <= tau <= self.taus[-1]:
            raise ValueError(f"tau = {tau:g} outside the sampled range")
        return float(np.interp(tau, self.taus, self.intensity))


@dataclass
class CountDistribution:
    """p(m) for m = 0..len-1 with diagnostics flags.

    Flags record conditions that are reported rather than corrected:
    ``unnormalized`` when |sum p - 1| > 1e-6, ``negative`` when some p(m) < 0
    and, for quantum counting, ``ill_conditioned`` (see ``qc_single_mode``).
    """

    probabilities: np.ndarray
    label: str = ""
    flags: tuple = ()

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        flags = set(self.flags)
        if abs(self.total - 1.0) > _FLAG_TOL:
            flags.add("unnormalized")
        if np.any(self.probabilities < -1e-15):
            flags.add("negative")
        self.flags = tuple(sorted(flags))

    @property
    def m(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    @property
    def mean(self) -> float:
        return float(np.dot(self.m, self.probabilities))

    @property
    def variance(self) -> float:
        mu = self.mean
        return float(np.dot((self.m - mu) ** 2, self.probabilities))

    @property
    def mandel_q(self) -> float:
        mu = self.mean
        return self.variance / mu - 1.0 if mu > 0 else 0.0

    def to_json(self) -> str:
        return json.dumps({"label": self.label, "flags": list(self.flags), "mean": self.mean,
                           "variance": self.variance, "mandel_q": self.mandel_q,
                           "probabilities": [float(p) for p in self.probabilities]}, indent=1)


@dataclass
class SingleModeState:
    """Diagonal <n|rho|n> of a single-mode field for n = 0..n_max."""

    occupation: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.occupation = np.asarray(self.occupation, dtype=float)
        if np.any(self.occupation < 0):
            raise ValueError("occupation probabilities must be non-negative")
        if abs(self.occupation.sum() - 1.0) > 1e-12:
            raise ValueError("occupation probabilities must sum to 1")

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.occupation.size)

    @property
    def mean(self) -> float:
        return float(np.dot(self.n, self.occupation))

    @classmethod
    def fock(cls, n: int, n_max: int | None = None) -> "SingleModeState":
        n_max = n if n_max is None else n_max
        if not 0 <= n <= n_max:
            raise ValueError("need 0 <= n <= n_max")
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p, f"fock({n})")

    @classmethod
    def thermal(cls, nbar: float, n_max: int | None = None) -> "SingleModeState":
        """Geometric occupation; n_max defaults to a tail mass below 1e-13."""
        if nbar < 0:
            raise ValueError("nbar must be non-negative")
        if nbar == 0:
            return cls.fock(0, n_max or 0)
        r = nbar / (1.0 + nbar)
        if n_max is None:
            n_max = int(np.ceil(np.log(1e-13) / np.log(r)))
        p = stats.geom.pmf(np.arange(n_max + 1) + 1, 1.0 - r)
        return cls(p / p.sum(), f"thermal({nbar:g})")

    @classmethod
    def coherent(cls, nbar: float, n_max: int | None = None) -> "SingleModeState":
        if nbar < 0:
            raise ValueError("nbar must be non-negative")
        if n_max is None:
            n_max = int(stats.poisson.isf(1e-15, nbar)) + 5 if nbar > 0 else 0
        p = stats.poisson.pmf(np.arange(n_max + 1), nbar)
        return cls(p / p.sum(), f"coherent({nbar:g})")


@dataclass
class JointDistribution:
    probabilities: np.ndarray              # p[m, n]
    marginals: tuple[CountDistribution, CountDistribution]
    intensities: tuple[float, float]
    run_id: str = ""

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())


class ProvenanceError(ValueError):
    """Traces used together did not come from one shared-absorption run."""


# -- intensities -----------------------------------------------------------------

def intensity_from_trace(trace: AmplitudeTrace, n_particles: float, epsilon: float | None = None,
                         convention: str | None = None) -> IntensityCurve:
    """Cumulative I(tau) = N f int_0^tau |phi~|^2 dt on the trace's own time grid.

    ``epsilon`` and ``convention`` default to the trace's detector.  The
    ``error`` field is the Richardson estimate |T_h - T_2h| / 3 of the
    trapezoid error, evaluated on every other sample.
    """
    t = trace.times
    if t.size < 2 or t[0] != 0.0:
        raise ValueError("trace must start at t = 0 and have at least two samples")
    y = trace.density
    if not np.all(np.isfinite(y)):
        raise ValueError("trace contains non-finite values")
    det = trace.detector
    det = PointDetector(det.z0, det.epsilon if epsilon is None else epsilon,
                        det.convention if convention is None else convention)
    scale = n_particles * det.flux_factor
    fine = integrate.cumulative_trapezoid(y, t, initial=0.0)
    coarse_full = integrate.cumulative_trapezoid(y[::2], t[::2], initial=0.0)
    err = np.interp(t, t[::2], np.abs(coarse_full - fine[::2]) / 3.0)
    return IntensityCurve(trace.method, t.copy(), scale * fine, det.convention, n_particles, scale * err)


def short_time_intensity(z, density, omega, epsilon: float, tau: float, n_particles: float) -> float:
    """I = N int (1 - exp(-epsilon Omega(z) tau)) |phi(z, t0)|^2 dz (Simpson's rule).

    ``omega`` is the detector profile sampled on ``z`` or a callable.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    z = np.asarray(z, dtype=float)
    density = np.asarray(density, dtype=float)
    om = np.asarray(omega(z) if callable(omega) else omega, dtype=float)
    if not z.shape == density.shape == om.shape:
        raise ValueError("z, density and omega must share one shape")
    return float(n_particles * integrate.simpson(-np.expm1(-epsilon * om * tau) * density, x=z))


# -- distributions ---------------------------------------------------------------

def poisson_distribution(intensity: float, m_max: int | None = None, tail: float = _TAIL) -> CountDistribution:
    """Poisson p(m) = I^m e^-I / m!, extended until the tail mass is below ``tail``."""
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    if intensity == 0:
        return CountDistribution(np.ones(1), "poisson(0)")
    m_max = int(np.ceil(intensity + 12 * np.sqrt(intensity) + 20)) if m_max is None else int(m_max)
    while stats.poisson.sf(m_max, intensity) > tail:
        m_max = int(1.5 * m_max) + 1
    p = np.exp(stats.poisson.logpmf(np.arange(m_max + 1), intensity))
    return CountDistribution(p, f"poisson({intensity:.6g})")


def _binomial_kernel(rho: np.ndarray, p: float, q: float) -> np.ndarray:
    """sum_{n>=m} C(n, m) p^m q^(n-m) rho_n for m = 0..n_max, with q of either sign.

    For q >= 0 the terms are positive and are assembled in log space, so n of
    a few thousand is safe.  For q < 0 they alternate and reach (p + |q|)^n,
    so the sum is carried out in mpmath with enough digits to absorb the
    cancellation.
    """
    n_max = rho.size - 1
    if q < 0:
        return _alternating_kernel(rho, p, q)
    n = np.arange(n_max + 1)[:, None]
    m = np.arange(n_max + 1)[None, :]
    k = n - m
    valid = k >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = special.gammaln(n + 1) - special.gammaln(m + 1) - special.gammaln(np.where(valid, k, 0) + 1)
        lp = np.where(m > 0, m * np.log(p), 0.0) if p > 0 else np.where(m > 0, -np.inf, 0.0)
        lq = np.where(k > 0, k * np.log(q), 0.0) if q != 0 else np.where(k > 0, -np.inf, 0.0)
        terms = np.where(valid, np.exp(logc + lp + lq), 0.0)
    return terms.T @ rho


def _alternating_kernel(rho: np.ndarray, p: float, q: float) -> np.ndarray:
    n_max = rho.size - 1
    digits = 30 + int(np.ceil(n_max * np.log10(p + abs(q))))
    out = np.empty(n_max + 1)
    with mpmath.workdps(digits):
        r = [mpmath.mpf(float(v)) for v in rho]
        mp_p, mp_q = mpmath.mpf(p), mpmath.mpf(q)
        for m in range(n_max + 1):
            # sum_k C(m + k, m) q^k rho_{m+k}, coefficients updated in place
            acc, coef = mpmath.mpf(0), mpmath.mpf(1)
            for k in range(n_max - m + 1):
                if r[m + k]:
                    acc += coef * r[m + k]
                coef = coef * mp_q * (m + k + 1) / (k + 1)
            out[m] = float(acc * mp_p ** m)
    return out


def qc_single_mode(state: SingleModeState, epsilon_tau: float, form: str = "normal_ordered") -> CountDistribution:
    """Quantum-counting distribution of a single mode (no depletion).

    ``normal_ordered`` evaluates <:(x n)^m / m! exp(-x n):> with x = epsilon tau,
    which is sum_n C(n, m) x^m (1 - x)^(n-m) rho_n: mean exactly nbar x,
    negative entries once x > 1, and entries up to (2x - 1)^n_max in size,
    flagged ``ill_conditioned`` when float moments can no longer be trusted.
    ``printed`` uses exp(-x (n - m)) in place of
    (1 - x)^(n - m); it is not normalized.  Neither is corrected; see the
    flags of the returned distribution.
    """
    x = float(epsilon_tau)
    if x < 0:
        raise ValueError("epsilon_tau must be non-negative")
    if form == "normal_ordered":
        p = _binomial_kernel(state.occupation, x, 1.0 - x)
    elif form == "printed":
        p = _binomial_kernel(state.occupation, x, np.exp(-x))
    else:
        raise ValueError(f"unknown form {form!r}")
    flags = ()
    # float rounding of huge alternating p(m) swamps moments such as the mean
    if np.max(np.abs(p)) * p.size * np.finfo(float).eps > 1e-10 * max(1.0, state.mean * x):
        flags = ("ill_conditioned",)
    return CountDistribution(p, f"qc[{form}]({state.label}, {x:g})", flags)


def sd_single_mode(state: SingleModeState, epsilon_tau: float) -> CountDistribution:
    """Continuous-measurement distribution sum_n C(n,m) (1-e^-x)^m e^(-x(n-m)) rho_n."""
    x = float(epsilon_tau)
    if x < 0:
        raise ValueError("epsilon_tau must be non-negative")
    p = _binomial_kernel(state.occupation, -np.expm1(-x), np.exp(-x))
    return CountDistribution(p, f"sd({state.label}, {x:g})")


def sd_conditional_state(state: SingleModeState, epsilon_tau: float, m: int) -> SingleModeState:
    """Field occupation left behind after m counts in time tau.

    Bayes update over the Fock ladder: P(n' | m) is proportional to
    rho_{n'+m} C(n'+m, m) (1 - e^-x)^m e^(-x n').
    """
    x = float(epsilon_tau)
    rho = state.occupation
    if not 0 <= m < rho.size:
        raise ValueError("m outside the occupation ladder")
    n_rem = np.arange(rho.size - m)
    logw = special.gammaln(n_rem + m + 1) - special.gammaln(n_rem + 1) - x * n_rem
    with np.errstate(divide="ignore"):
        logw = logw + np.log(rho[m:])
    if not np.any(np.isfinite(logw)):
        raise ValueError("m counts have zero probability for this state")
    w = np.exp(logw - logw[np.isfinite(logw)].max())
    return SingleModeState(w / w.sum(), f"{state.label}|m={m}")


def total_variation(p: CountDistribution, q: CountDistribution) -> float:
    """(1/2) sum |p(m) - q(m)| with the shorter support zero padded."""
    a, b = p.probabilities, q.probabilities
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return 0.5 * float(np.abs(a - b).sum())


def joint_distribution(trace1: AmplitudeTrace, trace2: AmplitudeTrace, tau: float, n_particles: float,
                       tail: float = _TAIL) -> JointDistribution:
    """p(m, n) = Poisson(I1)(m) Poisson(I2)(n) for a coherent condensate.

    I1 and I2 must be built from one run in which both detectors absorbed
    simultaneously; traces with different run ids are rejected.
    """
    if trace1.run_id != trace2.run_id:
        raise ProvenanceError("traces come from different runs; joint statistics need a shared-absorption run")
    if trace1.detector == trace2.detector:
        raise ProvenanceError("both traces describe the same detector")
    ints = []
    for tr in (trace1, trace2):
        if tr.detector.epsilon == 0:
            ints.append(0.0)
        else:
            ints.append(intensity_from_trace(tr, n_particles).at(tau))
    m1 = poisson_distribution(ints[0], tail=tail)
    m2 = poisson_distribution(ints[1], tail=tail)
    joint = np.outer(m1.probabilities, m2.probabilities)
    return JointDistribution(joint, (m1, m2), (ints[0], ints[1]), trace1.run_id)


# -- serialisation ---------------------------------------------------------------

def format_table(columns: dict, header: list[str] | None = None) -> str:
    """Whitespace-separated columns with '#' comment lines; %.17g for round trips.

    The first column is the abscissa (tau, t or m); the rest follow in dict order.
    """
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("all columns must be 1-d and of equal length")
    lines = [f"# {h}" for h in (header or [])]
    lines.append("# " + " ".join(names))
    for i in range(n):
        lines.append(" ".join(f"{a[i]:.17g}" for a in arrays))
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> dict:
    """Inverse of ``format_table``; the last comment line names the columns."""
    comments = [ln for ln in text.splitlines() if ln.startswith("#")]
    if not comments:
        raise ValueError("table has no column header")
    names = comments[-1][1:].split()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}


def curves_table(curves: list[IntensityCurve], per_particle: bool = True) -> str:
    """tau then I (or I/N) per method; all curves must share their tau grid."""
    taus = curves[0].taus
    for c in curves[1:]:
        if c.taus.shape != taus.shape or np.any(c.taus != taus):
            raise ValueError("curves must share one tau grid")
    cols = {"tau": taus}
    for c in curves:
        cols[c.method] = c.per_particle() if per_particle else c.intensity
    head = [f"{'I/N' if per_particle else 'I'} versus tau; convention={curves[0].convention}"]
    return format_table(cols, head)


def distributions_table(dists: dict) -> str:
    """m then p(m) per named distribution, zero padded to a common length."""
    n = max(d.probabilities.size for d in dists.values())
    cols = {"m": np.arange(n)}
    for k, d in dists.items():
        cols[k] = np.pad(d.probabilities, (0, n - d.probabilities.size))
    return format_table(cols, ["p(m) per method"])
