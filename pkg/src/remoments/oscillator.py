"""Cubic half-oscillator coefficients and Gaussian-closure moment algebra.

The system is ``dx/dt = mu1 x + mu3 x^3 + kappa1 y + kappa3 y^3`` with ``y`` a
stationary Gaussian input of constant mean.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import IncompleteMomentSet, InvalidParameter, Unclassifiable

__all__ = [
    "Stability",
    "OscillatorParams",
    "InitialMoments",
    "CoefficientSet",
    "classify_potential",
    "coefficients",
    "isserlis_fourth",
    "central_from_raw",
    "raw_from_central",
]


class Stability(str, enum.Enum):
    MONOSTABLE = "Monostable"
    BISTABLE = "Bistable"
    LOCALLY_STABLE = "LocallyStable"
    GLOBALLY_UNSTABLE = "GloballyUnstable"
    LINEAR = "Linear"


@dataclass(frozen=True)
class OscillatorParams:
    mu1: float
    mu3: float
    kappa1: float
    kappa3: float

    def __post_init__(self):
        for name in ("mu1", "mu3", "kappa1", "kappa3"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameter(name, "must be finite")
        if self.kappa1 <= 0:
            raise InvalidParameter("kappa1", f"must be > 0, got {self.kappa1}")

    @property
    def stability(self):
        return classify_potential(self)

    def drift(self, x, y):
        return self.mu1 * x + self.mu3 * x ** 3 + self.kappa1 * y + self.kappa3 * y ** 3


@dataclass(frozen=True)
class InitialMoments:
    m_x0: float = 2.0
    c_x0x0: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.m_x0) and np.isfinite(self.c_x0x0)):
            raise InvalidParameter("initial", "initial moments must be finite")
        if self.c_x0x0 < 0:
            raise InvalidParameter("c_x0x0", f"initial variance must be >= 0, got {self.c_x0x0}")


@dataclass(frozen=True)
class CoefficientSet:
    a_x: float
    b_y: float
    b_tilde_y: float


def classify_potential(params: OscillatorParams) -> Stability:
    mu1, mu3 = params.mu1, params.mu3
    if mu1 == 0 or (mu3 == 0 and mu1 > 0):
        raise Unclassifiable(f"no stability class for mu1={mu1}, mu3={mu3}")
    if mu3 == 0:
        return Stability.LINEAR
    if mu1 < 0:
        return Stability.MONOSTABLE if mu3 < 0 else Stability.LOCALLY_STABLE
    return Stability.BISTABLE if mu3 < 0 else Stability.GLOBALLY_UNSTABLE


def coefficients(params: OscillatorParams, kernel, m_x, c_xx) -> CoefficientSet:
    """Drift coefficient ``A_x`` and the input gains ``B_y``, ``B~_y``.

    ``m_x`` and ``c_xx`` may be arrays; ``a_x`` then has their broadcast shape.
    """
    c_xx = np.asarray(c_xx, dtype=float)
    if np.any(c_xx < 0):
        raise InvalidParameter("c_xx", "variance must be >= 0")
    m_x = np.asarray(m_x, dtype=float)
    a_x = params.mu1 + 3.0 * params.mu3 * (m_x * m_x + c_xx)
    b_y, b_tilde_y = input_gains(params, kernel)
    return CoefficientSet(a_x if a_x.ndim else float(a_x), b_y, b_tilde_y)


def input_gains(params: OscillatorParams, kernel):
    my2, s2 = kernel.mean ** 2, kernel.sigma2
    b_y = params.kappa1 + 3.0 * params.kappa3 * my2 + 3.0 * params.kappa3 * s2
    b_tilde_y = params.kappa1 + params.kappa3 * my2 + 3.0 * params.kappa3 * s2
    return b_y, b_tilde_y


def isserlis_fourth(c_pp, c_pq):
    """Gaussian value of the mixed central moment E[p'^3 q'] = 3 Var(p) Cov(p, q)."""
    if np.any(np.asarray(c_pp) < 0):
        raise InvalidParameter("c_pp", "variance must be >= 0")
    return 3.0 * c_pp * c_pq


def _required(order):
    return [(j1, n - j1) for n in range(order + 1) for j1 in range(n + 1)]


def _lookup(moments, key, kind):
    if key == (0, 0) and key not in moments:
        return 1.0
    try:
        return moments[key]
    except KeyError:
        raise IncompleteMomentSet(f"{kind} moment {key} missing") from None


def _binomial_shift(moments, m_p, m_q, order, sign, kind):
    if order is None:
        order = max(j1 + j2 for j1, j2 in moments)
    out = {}
    for j1, j2 in _required(order):
        total = 0.0
        for k1 in range(j1 + 1):
            for k2 in range(j2 + 1):
                total = total + (comb(j1, k1) * comb(j2, k2)
                                 * (sign * m_p) ** (j1 - k1) * (sign * m_q) ** (j2 - k2)
                                 * _lookup(moments, (k1, k2), kind))
        out[(j1, j2)] = total
    return out


def central_from_raw(raw, m_p, m_q, order=None):
    """Mixed central moments C^{j1 j2} from raw moments R^{j1 j2} = E[p^j1 q^j2].

    ``raw`` maps ``(j1, j2)`` to a value (scalars or equally shaped arrays) and
    must contain every pair with ``j1 + j2 <= order``; ``(0, 0)`` defaults to 1.
    """
    return _binomial_shift(raw, m_p, m_q, order, -1.0, "raw")


def raw_from_central(central, m_p, m_q, order=None):
    """Inverse of :func:`central_from_raw` (binomial expansion about the means)."""
    return _binomial_shift(central, m_p, m_q, order, 1.0, "central")
