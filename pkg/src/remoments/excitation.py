"""Stationary excitation kernels.

Four families of zero-mean (or constant-mean) stationary Gaussian inputs are
supported, each characterised by a variance ``sigma2``, a decay parameter
``a`` and a central frequency ``omega0``:

=========================  ==========================================
family                     covariance C(u)
=========================  ==========================================
``OU``                     sigma2 * exp(-a|u|)
``ShiftedOU``              sigma2 * exp(-a|u|) * cos(omega0 u)
``GaussianFilter``         sigma2 * exp(-a u^2)
``ShiftedGaussianFilter``  sigma2 * exp(-a u^2) * cos(omega0 u)
=========================  ==========================================

Spectral densities are two-sided, ``C(u) = int S(w) exp(i w u) dw``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import InvalidParameter, QuadratureFailure

__all__ = [
    "Family",
    "KernelSpec",
    "Kernel",
    "make_kernel",
    "covariance",
    "spectral_density",
    "correlation_time",
    "kernel_for_correlation_time",
]


class Family(str, enum.Enum):
    OU = "OU"
    SHIFTED_OU = "ShiftedOU"
    GAUSSIAN_FILTER = "GaussianFilter"
    SHIFTED_GAUSSIAN_FILTER = "ShiftedGaussianFilter"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).replace("_", "").replace("-", "").lower()
        aliases = {
            "ou": cls.OU,
            "shiftedou": cls.SHIFTED_OU,
            "gaussianfilter": cls.GAUSSIAN_FILTER,
            "gf": cls.GAUSSIAN_FILTER,
            "shiftedgaussianfilter": cls.SHIFTED_GAUSSIAN_FILTER,
            "shiftedgf": cls.SHIFTED_GAUSSIAN_FILTER,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParameter("family", f"unknown kernel family {name!r}") from None

    @property
    def shifted(self):
        return self in (Family.SHIFTED_OU, Family.SHIFTED_GAUSSIAN_FILTER)

    @property
    def exponential(self):
        return self in (Family.OU, Family.SHIFTED_OU)


@dataclass(frozen=True)
class KernelSpec:
    family: Family | str
    sigma2: float
    a: float
    omega0: float = 0.0
    mean: float = 0.0


# envelope truncation for the numerically integrated correlation time
_ENVELOPE_FLOOR = 1e-12


@dataclass(frozen=True)
class Kernel:
    """A validated stationary covariance model. Build with :func:`make_kernel`."""

    family: Family
    sigma2: float
    a: float
    omega0: float
    mean: float

    # -- evaluators ---------------------------------------------------------

    def covariance(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        if self.family.exponential:
            env = np.exp(-self.a * u)
        else:
            env = np.exp(-self.a * u * u)
        if self.omega0 != 0.0:
            env = env * np.cos(self.omega0 * u)
        out = self.sigma2 * env
        return out if out.ndim else float(out)

    def spectral_density(self, omega):
        w = np.asarray(omega, dtype=float)
        s2, a, w0 = self.sigma2, self.a, self.omega0
        if self.family.exponential:
            out = s2 / (2 * np.pi) * (a / (a * a + (w0 + w) ** 2) + a / (a * a + (w0 - w) ** 2))
        else:
            out = s2 / (4 * np.sqrt(np.pi * a)) * (
                np.exp(-((w - w0) ** 2) / (4 * a)) + np.exp(-((w + w0) ** 2) / (4 * a)))
        return out if out.ndim else float(out)

    def spectral_tail(self, omega_cut):
        """Spectral mass outside ``[-omega_cut, omega_cut]`` (closed form)."""
        W, s2, a, w0 = float(omega_cut), self.sigma2, self.a, self.omega0
        if self.family.exponential:
            # pi/2 - arctan(x) written without cancellation
            def upper(x):
                return math.atan2(a, x) if x > 0 else math.pi / 2 - math.atan(x / a)
            return s2 / math.pi * (upper(W + w0) + upper(W - w0))
        r = 2 * math.sqrt(a)
        return s2 / 2 * (special.erfc((W - w0) / r) + special.erfc((W + w0) / r))

    def cutoff_frequency(self, mass_fraction=0.999):
        """Smallest ``W`` with ``int_{-W}^{W} S = mass_fraction * sigma2``."""
        target = (1.0 - mass_fraction) * self.sigma2
        hi = self.omega0 + (1.0 / self.a if self.family.exponential else math.sqrt(self.a))
        while self.spectral_tail(hi) > target:
            hi *= 2.0
        return optimize.brentq(lambda w: self.spectral_tail(w) - target, 0.0, hi,
                               xtol=1e-12 * hi, rtol=1e-14)

    def correlation_time(self):
        a, w0 = self.a, self.omega0
        if self.family is Family.OU or (self.family is Family.SHIFTED_OU and w0 == 0.0):
            return 1.0 / a
        if self.family is Family.SHIFTED_OU:
            return (a / (a * a + w0 * w0)
                    + math.exp(-a * math.pi / (2 * w0)) / -math.expm1(-a * math.pi / w0)
                    * 2 * w0 / (a * a + w0 * w0))
        if self.omega0 == 0.0:
            return math.sqrt(math.pi) / (2 * math.sqrt(a))
        return _windowed_abs_integral(a, w0)

    # -- helpers ------------------------------------------------------------

    @property
    def std(self):
        return math.sqrt(self.sigma2)

    def with_(self, **changes):
        fields = dict(family=self.family, sigma2=self.sigma2, a=self.a,
                      omega0=self.omega0, mean=self.mean)
        fields.update(changes)
        return make_kernel(KernelSpec(**fields))

    def describe(self):
        return {"family": self.family.value, "sigma2": self.sigma2, "a": self.a,
                "omega0": self.omega0, "mean": self.mean}


def _windowed_abs_integral(a, w0):
    """int_0^inf exp(-a u^2)|cos(w0 u)| du, summed over half periods of the cosine."""
    u_max = math.sqrt(-math.log(_ENVELOPE_FLOOR) / a)
    half = math.pi / w0
    edges = [0.0]
    u = 0.5 * half
    while u < u_max:
        edges.append(u)
        u += half
    edges.append(max(u_max, edges[-1]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        val, err = integrate.quad(lambda v: math.exp(-a * v * v) * math.cos(w0 * v),
                                  lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        if not np.isfinite(val) or err > 1e-8 * max(abs(val), 1e-300) + 1e-15:
            raise QuadratureFailure(
                f"correlation time window [{lo:g}, {hi:g}] did not converge (err={err:g})")
        total += abs(val)
    return total


def make_kernel(spec: KernelSpec) -> Kernel:
    family = Family.parse(spec.family)
    for name in ("sigma2", "a", "omega0", "mean"):
        value = getattr(spec, name)
        if callable(value) or not np.isscalar(value):
            raise InvalidParameter(name, "must be a constant scalar")
        if not math.isfinite(float(value)):
            raise InvalidParameter(name, "must be finite")
    sigma2, a, omega0 = float(spec.sigma2), float(spec.a), float(spec.omega0)
    if sigma2 <= 0:
        raise InvalidParameter("sigma2", f"variance must be > 0, got {sigma2}")
    if a <= 0:
        raise InvalidParameter("a", f"decay parameter must be > 0, got {a}")
    if omega0 < 0:
        raise InvalidParameter("omega0", f"central frequency must be >= 0, got {omega0}")
    if omega0 != 0 and not family.shifted:
        raise InvalidParameter("omega0", f"must be 0 for the unshifted family {family.value}")
    return Kernel(family, sigma2, a, omega0, float(spec.mean))


def covariance(kernel: Kernel, u):
    return kernel.covariance(u)


def spectral_density(kernel: Kernel, omega):
    return kernel.spectral_density(omega)


def correlation_time(kernel: Kernel) -> float:
    return kernel.correlation_time()


def kernel_for_correlation_time(family, tau, sigma2=1.0, omega0=0.0, mean=0.0) -> Kernel:
    """Kernel of the given family whose correlation time equals ``tau``."""
    family = Family.parse(family)
    if tau <= 0:
        raise InvalidParameter("tau_corr", f"must be > 0, got {tau}")
    if family is Family.OU or (family is Family.SHIFTED_OU and omega0 == 0):
        a = 1.0 / tau
    elif family in (Family.GAUSSIAN_FILTER,) or omega0 == 0:
        a = math.pi / (4.0 * tau * tau)
    else:
        def resid(log_a):
            k = make_kernel(KernelSpec(family, sigma2, math.exp(log_a), omega0, mean))
            return math.log(k.correlation_time()) - math.log(tau)
        guess = math.log(1.0 / tau if family.exponential else math.pi / (4 * tau * tau))
        lo, hi = guess - 1.0, guess + 1.0
        while resid(lo) < 0:
            lo -= 2.0
        while resid(hi) > 0:
            hi += 2.0
        a = math.exp(optimize.brentq(resid, lo, hi, xtol=1e-13))
    return make_kernel(KernelSpec(family, sigma2, a, omega0, mean))
