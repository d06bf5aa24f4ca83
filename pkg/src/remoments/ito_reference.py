"""Local (memoryless) moment system for a centred Ornstein-Uhlenbeck input.

An OU input obeys ``dy = -a y dt + sqrt(2 a sigma2) dW``, so the pair
``(x, y)`` is Markov and the Gaussian-closed moments satisfy three ordinary
equations with no history term:

    m'    = (mu1 + mu3 m^2 + 3 mu3 C) m
    C_xy' = (A_x - a) C_xy + B_y sigma2
    C'    = 2 A_x C + 2 B_y C_xy

This is an independent check on the causal solver, which handles the same
input through its memory integral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .causal_solver import SolverConfig
from .dopri import dopri5
from .errors import IntervalMismatch, InvalidParameter, NotLocalizable
from .excitation import Family
from .oscillator import InitialMoments, OscillatorParams, Stability, input_gains

__all__ = ["LocalTrajectory", "ResidualReport", "solve_ou_local", "localization_residual"]


@dataclass(frozen=True)
class LocalTrajectory:
    times: np.ndarray
    m_x: np.ndarray
    c_xy_diag: np.ndarray
    c_xx_diag: np.ndarray
    noise_intensity: float


@dataclass(frozen=True)
class ResidualReport:
    m_x: float
    c_xy: float
    c_xx: float

    def max(self):
        return max(self.m_x, self.c_xy, self.c_xx)

    def as_dict(self):
        return {"m_x": self.m_x, "c_xy": self.c_xy, "c_xx": self.c_xx}


def solve_ou_local(params: OscillatorParams, kernel, init: InitialMoments, t_end: float,
                   cfg: SolverConfig | None = None, times=None, t0: float = 0.0) -> LocalTrajectory:
    """Integrate the local system from ``(m_x0, 0, C_x0x0)`` at ``t0`` to ``t_end``.

    Parameters
    ----------
    times : array_like, optional
        Output grid. Defaults to 301 uniform points on ``[t0, t_end]``.

    Raises
    ------
    NotLocalizable
        If the kernel is not a zero-mean, unshifted OU covariance.
    """
    cfg = cfg or SolverConfig()
    if kernel.family is not Family.OU or kernel.omega0 != 0.0:
        raise NotLocalizable(f"{kernel.family.value} input has no local moment system")
    if kernel.mean != 0.0:
        raise NotLocalizable("the local system needs a zero-mean OU input")
    if params.stability not in (Stability.MONOSTABLE, Stability.LINEAR):
        raise InvalidParameter("params", f"{params.stability.value} systems are not supported")
    if not t_end > t0:
        raise InvalidParameter("t_end", "must exceed t0")
    times = np.linspace(t0, t_end, 301) if times is None else np.asarray(times, dtype=float)
    if times[0] != t0 or times[-1] != t_end or np.any(np.diff(times) <= 0):
        raise InvalidParameter("times", "must increase strictly from t0 to t_end")

    mu1, mu3, a, s2 = params.mu1, params.mu3, kernel.a, kernel.sigma2
    b_y, _ = input_gains(params, kernel)

    def rhs(t, z):
        m, cxy, c = z
        a_x = mu1 + 3.0 * mu3 * (m * m + c)
        return np.array([
            (mu1 + mu3 * m * m + 3.0 * mu3 * c) * m,
            (a_x - a) * cxy + b_y * s2,
            2.0 * a_x * c + 2.0 * b_y * cxy,
        ])

    z0 = np.array([init.m_x0, 0.0, init.c_x0x0])
    _, out, _, _ = dopri5(rhs, t0, z0, t_end, rtol=cfg.ode_rel_tol, atol=cfg.ode_abs_tol,
                          tstops=times[1:])
    z = np.vstack([z0, out])
    return LocalTrajectory(times, z[:, 0], z[:, 1], z[:, 2], 2.0 * a * s2)


def _on_grid(src_t, src_v, grid):
    return np.interp(grid, src_t, src_v)


def localization_residual(causal, local: LocalTrajectory, rel_tol: float = 1e-9) -> ResidualReport:
    """Max-abs difference of the three diagonal moments on the coarser of the two grids.

    Either trajectory may be a :class:`DiagonalTrajectory` or a
    :class:`LocalTrajectory`. The finer trajectory is resampled by linear
    interpolation, so nested grids compare node values exactly.
    """
    t_a, t_b = np.asarray(causal.times), np.asarray(local.times)
    span = max(t_a[-1] - t_a[0], t_b[-1] - t_b[0])
    if abs(t_a[0] - t_b[0]) > rel_tol * span or abs(t_a[-1] - t_b[-1]) > rel_tol * span:
        raise IntervalMismatch(
            f"[{t_a[0]:g}, {t_a[-1]:g}] vs [{t_b[0]:g}, {t_b[-1]:g}]")
    grid = t_a if t_a.size <= t_b.size else t_b
    grid = np.clip(grid, max(t_a[0], t_b[0]), min(t_a[-1], t_b[-1]))

    def diff(name):
        return float(np.max(np.abs(_on_grid(t_a, getattr(causal, name), grid)
                                   - _on_grid(t_b, getattr(local, name), grid))))

    return ResidualReport(diff("m_x"), diff("c_xy_diag"), diff("c_xx_diag"))

