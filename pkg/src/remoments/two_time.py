"""Two-time covariance surfaces over the square ``[t0, T]^2``.

Rows are response times ``t`` and columns excitation (or second response)
times ``s``, both on the solver's fine grid. ``C_xy(t, s)`` is additionally
kept on the Lobatto sub-grid in ``s`` so that it can be interpolated in its
second argument, which the forcing of the ``C_xx`` equation needs.

Two independent routes are provided:

``Integral``
    ``C_xy(t, s) = B_y int_{t0}^t C_yy(tau - s) exp(I_A(t) - I_A(tau)) dtau``
    advanced interval by interval in ``t``, and
    ``C_xx(t, s) = C_x0x(t) exp(I_A(s) - I_A(t0)) + B_y int_{t0}^s C_xy(t, tau) exp(I_A(s) - I_A(tau)) dtau``
    advanced in ``s``.
``Ode``
    ``d/dt C_xy(t, s) = A_x(t) C_xy(t, s) + B_y C_yy(t - s)`` from
    ``C_xy(t0, s) = 0``, and
    ``d/dt C_xx(t, s) = A_x(t) C_xx(t, s) + B_y C_xy(s, t)`` from
    ``C_xx(t0, s) = C_x0x(s)``.

Both routes build the lower triangle ``t >= s`` of ``C_xx`` and mirror it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .causal_solver import DiagonalTrajectory, SolverConfig
from .dopri import dopri5
from .errors import GridMismatch, HistoryTooShort
from .oscillator import InitialMoments, OscillatorParams, input_gains
from .piecewise import GL_W, GL_X, NODES, lagrange_antiderivative, lagrange_basis

__all__ = [
    "Method",
    "CrossCovarianceField",
    "TwoTimeField",
    "initial_cross_section",
    "cross_covariance_field",
    "auto_covariance_field",
    "two_time_field",
]


class Method(str, enum.Enum):
    INTEGRAL = "Integral"
    ODE = "Ode"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for m in cls:
            if str(value).lower() == m.value.lower():
                return m
        raise ValueError(f"unknown method {value!r}")


@dataclass(frozen=True)
class CrossCovarianceField:
    """``C_xy(t, s)`` with rows on the fine grid and columns on the Lobatto sub-grid."""

    times: np.ndarray
    sub_times: np.ndarray
    sub: np.ndarray
    method: Method

    @property
    def matrix(self):
        """Square ``C_xy`` on the fine grid (every ``NODES - 1``-th sub-grid column)."""
        return self.sub[:, ::NODES - 1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def excitation_profile(self, t):
        """``C_xy(t_j, t)`` for every grid row ``j`` at an arbitrary excitation time ``t``."""
        edges = self.times
        k = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2))
        x = (t - edges[k]) / (edges[k + 1] - edges[k])
        cols = self.sub[:, (NODES - 1) * k:(NODES - 1) * (k + 1) + 1]
        return cols @ lagrange_basis(x)


@dataclass(frozen=True)
class TwoTimeField:
    times: np.ndarray
    c_xy: np.ndarray
    c_xx: np.ndarray
    c_x0x: np.ndarray
    method: Method


def _check_span(traj, s):
    span = traj.t_end - traj.t0
    if s < traj.t0 or s > traj.t_end + 1e-12 * max(1.0, span):
        raise HistoryTooShort(f"s={s} outside recorded history [{traj.t0}, {traj.t_end}]")


def initial_cross_section(traj: DiagonalTrajectory, init: InitialMoments, s):
    """``C_x0x(s) = C_x0x0 exp(I_A(s) - I_A(t0))``; ``s`` may be an array."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    for v in s_arr:
        _check_span(traj, v)
    pa = traj.a_history
    out = init.c_x0x0 * np.exp(pa.ia(np.minimum(s_arr, pa.t_end)) - pa.ia_edges[0])
    return out if np.ndim(s) else float(out[0])


def _sub_times(pa):
    t, _, _ = pa.subgrid()
    return t


def _kinked_increment(pa, kernel, k, s, t_hi):
    """int_{t_k}^{t_hi} C_yy(tau - s) exp(I(t_hi) - I(tau)) dtau split at ``s``."""
    h, lo = pa.h[k], pa.edges[k]
    ia_hi = float(pa.ia(t_hi)) if t_hi < pa.edges[k + 1] else pa.ia_edges[k + 1]
    total = 0.0
    for a, b in ((lo, s), (s, t_hi)):
        if b <= a:
            continue
        tau = a + (b - a) * GL_X
        ia_tau = pa.ia_edges[k] + h * (lagrange_antiderivative((tau - lo) / h) @ pa.values[k])
        total += (b - a) * float(np.dot(GL_W * np.exp(ia_hi - ia_tau), kernel.covariance(tau - s)))
    return total


def _cross_integral(pa, kernel, b_y, sub):
    n, M = len(pa.h), sub.size
    out = np.zeros((n + 1, M))
    row = np.zeros(M)
    p = NODES - 1
    for k in range(n):
        decay = np.exp(pa.ia_edges[k + 1] - pa.ia_edges[k])
        w = pa.weights[k] * np.exp(pa.ia_edges[k + 1] - pa.ia_nodes[k])
        inc = w @ kernel.covariance(pa.tau[k][:, None] - sub[None, :])
        # columns strictly inside this interval see the kernel's kink
        for c in range(p * k + 1, p * (k + 1)):
            inc[c] = _kinked_increment(pa, kernel, k, sub[c], pa.edges[k + 1])
        row = decay * row + b_y * inc
        out[k + 1] = row
    return out


def _cross_ode(pa, kernel, b_y, sub, cfg):
    def rhs(t, y):
        return float(pa.a(t)) * y + b_y * kernel.covariance(t - sub)

    y0 = np.zeros(sub.size)
    _, stops, _, _ = dopri5(rhs, pa.t0, y0, pa.t_end, rtol=cfg.ode_rel_tol,
                            atol=cfg.ode_abs_tol, tstops=sub[1:])
    rows = np.vstack([y0, stops])
    return rows[::NODES - 1]


def cross_covariance_field(traj: DiagonalTrajectory, kernel, params: OscillatorParams,
                           method=Method.INTEGRAL, cfg: SolverConfig | None = None) -> CrossCovarianceField:
    """``C_xy(t, s)`` on the trajectory's grid by the chosen route."""
    method = Method.parse(method)
    pa = traj.a_history
    if not np.array_equal(pa.edges, traj.times):
        raise GridMismatch("trajectory grid differs from its A_x history")
    b_y, _ = input_gains(params, kernel)
    sub = _sub_times(pa)
    if method is Method.INTEGRAL:
        values = _cross_integral(pa, kernel, b_y, sub)
    else:
        values = _cross_ode(pa, kernel, b_y, sub, cfg or SolverConfig())
    return CrossCovarianceField(pa.edges.copy(), sub, values, method)


def _mirror_lower(mat):
    lower = np.tril(mat)
    return lower + np.tril(mat, -1).T


def _auto_integral(pa, cxy, c_x0x, b_y):
    # advance in the second argument: column s_{k+1} from column s_k
    n = len(pa.h)
    out = np.empty((n + 1, n + 1))
    out[:, 0] = c_x0x
    col = c_x0x.copy()
    p = NODES - 1
    for k in range(n):
        decay = np.exp(pa.ia_edges[k + 1] - pa.ia_edges[k])
        w = pa.weights[k] * np.exp(pa.ia_edges[k + 1] - pa.ia_nodes[k])
        col = decay * col + b_y * (cxy.sub[:, p * k:p * (k + 1) + 1] @ w)
        out[:, k + 1] = col
    return out


def _auto_ode(pa, cxy, c_x0x, b_y, cfg):
    edges, p = pa.edges, NODES - 1

    def rhs(t, y):
        k = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2))
        x = (t - edges[k]) / pa.h[k]
        forcing = cxy.sub[:, p * k:p * (k + 1) + 1] @ lagrange_basis(x)
        return float(pa.a(t)) * y + b_y * forcing

    _, stops, _, _ = dopri5(rhs, pa.t0, c_x0x, pa.t_end, rtol=cfg.ode_rel_tol,
                            atol=cfg.ode_abs_tol, tstops=edges[1:])
    # row i holds C_xx(t_i, s_j) for every column j
    return np.vstack([c_x0x, stops])


def auto_covariance_field(traj: DiagonalTrajectory, cxy: CrossCovarianceField, kernel,
                          params: OscillatorParams, init: InitialMoments,
                          method=Method.INTEGRAL, cfg: SolverConfig | None = None) -> np.ndarray:
    """Symmetric ``C_xx(t, s)`` built on the lower triangle and mirrored."""
    method = Method.parse(method)
    pa = traj.a_history
    if not isinstance(cxy, CrossCovarianceField):
        raise GridMismatch("C_xy must carry its Lobatto sub-grid columns")
    if cxy.sub.shape[0] != pa.edges.size or not np.array_equal(cxy.times, pa.edges):
        raise GridMismatch("C_xy was computed on a different grid")
    b_y, _ = input_gains(params, kernel)
    c_x0x = init.c_x0x0 * np.exp(pa.ia_edges - pa.ia_edges[0])
    if method is Method.INTEGRAL:
        full = _auto_integral(pa, cxy, c_x0x, b_y)
    else:
        full = _auto_ode(pa, cxy, c_x0x, b_y, cfg or SolverConfig())
    return _mirror_lower(full)


def two_time_field(traj: DiagonalTrajectory, kernel, params: OscillatorParams,
                   init: InitialMoments, method=Method.INTEGRAL,
                   cfg: SolverConfig | None = None) -> TwoTimeField:
    """Both surfaces and the initial cross-section by one route."""
    method = Method.parse(method)
    cxy = cross_covariance_field(traj, kernel, params, method, cfg)
    cxx = auto_covariance_field(traj, cxy, kernel, params, init, method, cfg)
    c_x0x = initial_cross_section(traj, init, traj.times)
    return TwoTimeField(traj.times.copy(), np.array(cxy.matrix), cxx, c_x0x, method)
