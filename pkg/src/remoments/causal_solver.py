"""Two-scale prediction/correction solver for the causal one-time moment system.

Unknowns are the response mean ``m_x(t)`` and variance ``C_xx(t, t)``. The
variance equation carries the memory term

    2 B_y * int_{t0}^t B_y C_yy(tau, t) exp(I_A(t) - I_A(tau)) dtau

whose exponent depends on the unknowns through ``A_x``. On every coarse step
``A_x`` is predicted, the resulting ordinary system is integrated on the fine
grid, ``A_x`` is rebuilt from the new solution and the step is repeated until
two successive cycles agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dopri import dopri5
from .errors import (GridMismatch, HistoryTooShort, InstabilityDetected,
                     InvalidParameter, NoConvergence)
from .oscillator import InitialMoments, OscillatorParams, Stability, input_gains
from .piecewise import GL_W, GL_X, LOBATTO, NODES, PiecewiseA, lagrange_antiderivative

__all__ = [
    "GridSpec",
    "SolverConfig",
    "DiagonalTrajectory",
    "PairHistory",
    "cycle_converged",
    "diagonal_cross_covariance",
    "solve_diagonal",
]

ADMISSIBLE = (Stability.MONOSTABLE, Stability.LINEAR)


@dataclass(frozen=True)
class GridSpec:
    t0: float = 0.0
    t_end: float = 3.0
    coarse_step: float | None = None
    fine_per_coarse: int = 20

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise InvalidParameter("t_end", "must exceed t0")
        if self.coarse_step is not None and not self.coarse_step > 0:
            raise InvalidParameter("coarse_step", "must be > 0")
        if int(self.fine_per_coarse) != self.fine_per_coarse or self.fine_per_coarse < 2:
            raise InvalidParameter("fine_per_coarse", "must be an integer >= 2")

    def coarse_edges(self, kernel=None):
        step = self.coarse_step
        if step is None:
            if kernel is None:
                raise InvalidParameter("coarse_step", "needs a kernel to default to its correlation time")
            step = kernel.correlation_time()
        span = self.t_end - self.t0
        n = max(1, math.ceil(span / step - 1e-9))
        edges = self.t0 + step * np.arange(n + 1, dtype=float)
        edges[-1] = self.t_end
        if n > 1 and edges[-1] - edges[-2] < 1e-9 * step:
            edges = np.delete(edges, -2)
        return edges

    def fine_edges(self, kernel=None):
        coarse = self.coarse_edges(kernel)
        J = int(self.fine_per_coarse)
        pieces = [np.linspace(a, b, J + 1)[:-1] for a, b in zip(coarse[:-1], coarse[1:])]
        return np.concatenate(pieces + [coarse[-1:]])

    def refined(self, factor=2, kernel=None):
        """Same interval with every coarse and fine step divided by ``factor``."""
        step = self.coarse_step if self.coarse_step is not None else kernel.correlation_time()
        return GridSpec(self.t0, self.t_end, step / factor, self.fine_per_coarse)


@dataclass(frozen=True)
class SolverConfig:
    eps1: float = 1e-8
    eps2: float = 1e-8
    max_cycles: int = 25
    ode_rel_tol: float = 1e-8
    ode_abs_tol: float = 1e-10

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise InvalidParameter("eps", "cycle tolerances must be > 0")
        if self.max_cycles < 1:
            raise InvalidParameter("max_cycles", "must be >= 1")
        if not (self.ode_rel_tol > 0 and self.ode_abs_tol > 0):
            raise InvalidParameter("ode_tol", "integrator tolerances must be > 0")


class PairHistory(NamedTuple):
    times: np.ndarray
    m_x: np.ndarray
    c_xx: np.ndarray


@dataclass(frozen=True)
class DiagonalTrajectory:
    times: np.ndarray
    m_x: np.ndarray
    c_xx_diag: np.ndarray
    c_xy_diag: np.ndarray
    a_x: np.ndarray
    ia: np.ndarray
    cycles_per_step: np.ndarray
    a_history: PiecewiseA = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.a_history is None:
            object.__setattr__(self, "a_history", PiecewiseA.from_linear(self.times, self.a_x))

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])

    @classmethod
    def from_coefficients(cls, times, a_x, m_x=None, c_xx=None):
        """Trajectory shell with a prescribed ``A_x`` history (moments optional)."""
        times = np.asarray(times, dtype=float)
        a_x = np.broadcast_to(np.asarray(a_x, dtype=float), times.shape).copy()
        pa = PiecewiseA.from_linear(times, a_x)
        zeros = np.zeros_like(times)
        return cls(times,
                   zeros if m_x is None else np.asarray(m_x, dtype=float),
                   zeros if c_xx is None else np.asarray(c_xx, dtype=float),
                   zeros, a_x, pa.ia_edges, np.zeros(0, dtype=int), pa)


def cycle_converged(prev: PairHistory, curr: PairHistory, cfg: SolverConfig) -> bool:
    if (np.shape(prev.times) != np.shape(curr.times)
            or not np.array_equal(prev.times, curr.times)):
        raise GridMismatch("cycle histories are sampled on different fine grids")
    return bool(np.max(np.abs(prev.m_x - curr.m_x), initial=0.0) < cfg.eps1
                and np.max(np.abs(prev.c_xx - curr.c_xx), initial=0.0) < cfg.eps2)


def _memory_integral(pa: PiecewiseA, kernel, t, limit=None):
    """int_{t0}^{t} C_yy(tau, t) exp(I_A(t) - I_A(tau)) dtau (without the B_y factors)."""
    k, tau_p, w_p, ia_p = pa.partial_rule(t)
    ia_t = float(pa.ia(t))
    total = float(np.dot(w_p * np.exp(ia_t - ia_p), kernel.covariance(t - tau_p)))
    if k:
        tau = pa.tau[:k].ravel()
        w = (pa.weights[:k] * np.exp(ia_t - pa.ia_nodes[:k])).ravel()
        total += float(np.dot(w, kernel.covariance(t - tau)))
    return total


def diagonal_cross_covariance(traj: DiagonalTrajectory, kernel, params: OscillatorParams, t) -> float:
    """``C_xy(t, t)`` from the recorded ``A_x`` history by the memory quadrature."""
    pa = traj.a_history
    span = pa.t_end - pa.t0
    if t > pa.t_end + 1e-12 * max(1.0, span) or t < pa.t0:
        raise HistoryTooShort(f"t={t} outside recorded history [{pa.t0}, {pa.t_end}]")
    t = min(float(t), pa.t_end)
    if t == pa.t0:
        return 0.0
    b_y, _ = input_gains(params, kernel)
    return b_y * _memory_integral(pa, kernel, t)


def cross_covariance_at_nodes(pa: PiecewiseA, kernel, b_y):
    """``C_xy(t_j, t_j)`` at every fine node of ``pa``, vectorised."""
    tj = pa.edges[1:]
    n = len(tj)
    lag = tj[:, None, None] - pa.tau[None, :, :]
    expo = pa.ia_edges[1:, None, None] - pa.ia_nodes[None, :, :]
    mask = (np.arange(n)[None, :] <= np.arange(n)[:, None])[:, :, None]
    terms = np.where(mask, pa.weights[None] * np.exp(np.where(mask, expo, 0.0))
                     * kernel.covariance(lag), 0.0)
    out = np.concatenate([[0.0], terms.reshape(n, -1).sum(axis=1)])
    return b_y * out


class _History:
    """Committed ``A_x`` segments; grows one coarse step at a time."""

    def __init__(self):
        self.segments = []
        self.tau = np.zeros(0)
        self.weights = np.zeros(0)
        self.ia = np.zeros(0)

    def commit(self, pa):
        self.segments.append(pa)
        self.tau = np.concatenate([self.tau, pa.tau.ravel()])
        self.weights = np.concatenate([self.weights, pa.weights.ravel()])
        self.ia = np.concatenate([self.ia, pa.ia_nodes.ravel()])

    def merged(self):
        edges = np.concatenate([self.segments[0].edges[:1]] + [s.edges[1:] for s in self.segments])
        values = np.concatenate([s.values for s in self.segments])
        return PiecewiseA(edges, values, self.segments[0].ia_edges[0])


def solve_diagonal(params: OscillatorParams, kernel, init: InitialMoments,
                   grid: GridSpec, cfg: SolverConfig | None = None) -> DiagonalTrajectory:
    """March the causal system over ``[grid.t0, grid.t_end]``."""
    cfg = cfg or SolverConfig()
    stability = params.stability
    if stability not in ADMISSIBLE:
        raise InvalidParameter("params", f"{stability.value} systems are outside the solver's scope")
    mu1, mu3 = params.mu1, params.mu3
    b_y, b_tilde = input_gains(params, kernel)
    forcing_mean = b_tilde * kernel.mean
    cov = kernel.covariance

    def a_of(m, c):
        return mu1 + 3.0 * mu3 * (m * m + c)

    coarse = grid.coarse_edges(kernel)
    J = int(grid.fine_per_coarse)
    history = _History()
    m_i, c_i, ia_i = float(init.m_x0), float(init.c_x0x0), 0.0
    fine_m, fine_c = [np.array([m_i])], [np.array([c_i])]
    cycles = []
    h_guess = None
    a_prev = None  # (t, A) at the last two fine nodes of the previous step

    for step, (ti, ti1) in enumerate(zip(coarse[:-1], coarse[1:])):
        edges = np.linspace(ti, ti1, J + 1)
        taus = edges[:-1, None] + np.diff(edges)[:, None] * LOBATTO
        if a_prev is None:
            pred = np.full((J, NODES), a_of(m_i, c_i))
        else:
            (t_a, a_a), (t_b, a_b) = a_prev
            pred = a_b + (a_b - a_a) / (t_b - t_a) * (taus - t_b)

        hist_w = history.weights * np.exp(ia_i - history.ia)
        hist_tau = history.tau
        previous = None
        for cycle in range(1, cfg.max_cycles + 1):
            # sweep the fine intervals in order; each one sees the A_x already
            # corrected earlier in this cycle and the prediction only on itself
            vals = pred.copy()
            corrected = np.empty_like(pred)
            m_f, c_f = [m_i], [c_i]
            for j in range(J):
                if cycle == 1 and j > 0:
                    t_a, t_b = taus[j - 1, -2], taus[j - 1, -1]
                    a_a, a_b = corrected[j - 1, -2], corrected[j - 1, -1]
                    vals[j] = a_b + (a_b - a_a) / (t_b - t_a) * (taus[j] - t_b)
                pa = PiecewiseA(edges[:j + 2], vals[:j + 1], ia_i)
                # everything before the current fine interval, weighted relative to I_A(t_i)
                w_full = np.concatenate([hist_w, (pa.weights[:j] * np.exp(ia_i - pa.ia_nodes[:j])).ravel()])
                tau_full = np.concatenate([hist_tau, pa.tau[:j].ravel()])
                lo, h, ia_lo, v = edges[j], pa.h[j], pa.ia_edges[j], vals[j]

                def memory(t, lo=lo, h=h, ia_lo=ia_lo, v=v, w_full=w_full, tau_full=tau_full):
                    x = (t - lo) / h
                    xs = GL_X * x
                    ia_t = ia_lo + h * float(lagrange_antiderivative(x) @ v)
                    ia_p = ia_lo + h * (lagrange_antiderivative(xs) @ v)
                    s = h * x * float(np.dot(GL_W * np.exp(ia_t - ia_p), cov(t - (lo + h * xs))))
                    if tau_full.size:
                        s += math.exp(ia_t - ia_i) * float(np.dot(w_full, cov(t - tau_full)))
                    return s

                def rhs(t, y, memory=memory):
                    m, c = y
                    return np.array([
                        (mu1 + mu3 * m * m + 3.0 * mu3 * c) * m + forcing_mean,
                        2.0 * a_of(m, c) * c + 2.0 * b_y * b_y * memory(t),
                    ])

                y1, _, dense, h_guess = dopri5(
                    rhs, edges[j], [m_f[-1], c_f[-1]], edges[j + 1],
                    rtol=cfg.ode_rel_tol, atol=cfg.ode_abs_tol, h0=h_guess, dense=True)
                if not np.all(np.isfinite(y1)) or y1[1] < 0:
                    raise InstabilityDetected(
                        f"coarse step {step}: variance left [0, inf) near t={edges[j + 1]:g}")
                inner = dense(taus[j, 1:-1])
                m_n = np.concatenate([[m_f[-1]], inner[:, 0], [y1[0]]])
                c_n = np.concatenate([[c_f[-1]], inner[:, 1], [y1[1]]])
                corrected[j] = a_of(m_n, c_n)
                vals[j] = corrected[j]
                m_f.append(float(y1[0]))
                c_f.append(float(y1[1]))
            m_f, c_f = np.array(m_f), np.array(c_f)
            current = PairHistory(edges, m_f, c_f)
            if previous is not None and cycle_converged(previous, current, cfg):
                break
            previous = current
            pred = corrected
        else:
            raise NoConvergence(step, cfg.max_cycles)

        seg = PiecewiseA(edges, corrected, ia_i)
        history.commit(seg)
        cycles.append(cycle)
        fine_m.append(m_f[1:])
        fine_c.append(c_f[1:])
        m_i, c_i, ia_i = float(m_f[-1]), float(c_f[-1]), float(seg.ia_edges[-1])
        a_nodes = seg.node_values
        a_prev = ((edges[-2], a_nodes[-2]), (edges[-1], a_nodes[-1]))

    pa = history.merged()
    c_xy = cross_covariance_at_nodes(pa, kernel, b_y)
    m_x = np.concatenate(fine_m)
    c_xx = np.concatenate(fine_c)
    return DiagonalTrajectory(
        times=pa.edges, m_x=m_x, c_xx_diag=c_xx, c_xy_diag=c_xy,
        a_x=pa.node_values, ia=pa.ia_edges,
        cycles_per_step=np.asarray(cycles, dtype=int), a_history=pa)
