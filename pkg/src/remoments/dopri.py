"""Embedded Dormand-Prince 5(4) integrator with dense output.

Small and dependency-free so that the causal solver can stop exactly on its
fine grid and sample the continuous extension at quadrature nodes.
"""
from __future__ import annotations

import numpy as np

from .errors import IntegratorFailure

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension, y(t + th*h) = y + h * K^T P [th, th^2, th^3, th^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class DenseOutput:
    """Piecewise quartic interpolant over the accepted steps of one solve."""

    def __init__(self):
        self.t_lo = []
        self.h = []
        self.y = []
        self.Q = []

    def _append(self, t, h, y, K):
        self.t_lo.append(t)
        self.h.append(h)
        self.y.append(y)
        self.Q.append(K.T @ P)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo = np.asarray(self.t_lo)
        idx = np.clip(np.searchsorted(lo, t, side="right") - 1, 0, len(lo) - 1)
        out = []
        for ti, i in zip(t, idx):
            th = (ti - lo[i]) / self.h[i]
            p = np.array([th, th * th, th ** 3, th ** 4])
            out.append(self.y[i] + self.h[i] * (self.Q[i] @ p))
        return np.array(out)


def _norm(x):
    return np.max(np.abs(x)) if x.size else 0.0


def initial_step(fun, t0, y0, f0, direction_span, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _norm(y0 / scale), _norm(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = _norm((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def dopri5(fun, t0, y0, t1, *, rtol=1e-8, atol=1e-10, h0=None, dense=False,
           tstops=None, max_steps=200_000):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (``t1 > t0``).

    ``tstops`` are times the step sequence must land on exactly (solution
    values there are returned in order). Returns ``(y1, stops, dense, h_last)``
    where ``stops`` is an array of states at ``tstops`` and ``dense`` is a
    :class:`DenseOutput` if requested.
    """
    y = np.array(y0, dtype=float, copy=True)
    t = float(t0)
    t1 = float(t1)
    wanted = [] if tstops is None else sorted({float(s) for s in tstops if t < s <= t1})
    stops = wanted if wanted and wanted[-1] == t1 else wanted + [t1]
    n_wanted = len(wanted)
    stops_out = []
    dense_out = DenseOutput() if dense else None
    if t1 <= t:
        return y, np.array(stops_out), dense_out, h0

    f = np.asarray(fun(t, y), dtype=float)
    h = h0 if h0 is not None else initial_step(fun, t, y, f, t1 - t, rtol, atol)
    K = np.empty((7,) + y.shape)
    n = 0
    si = 0
    while si < len(stops):
        target = stops[si]
        if n > max_steps:
            raise IntegratorFailure(f"step budget exhausted at t={t:g}")
        span = target - t
        h_try = min(h, span)
        if span - h_try < 1e-12 * max(1.0, abs(target)):
            h_try = span
        while True:
            K[0] = f
            for s in range(1, 6):
                K[s] = fun(t + C[s] * h_try, y + h_try * np.tensordot(A[s], K[:s], axes=1))
            y_new = y + h_try * np.tensordot(B[:6], K[:6], axes=1)
            f_new = np.asarray(fun(t + h_try, y_new), dtype=float)
            K[6] = f_new
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = _norm(h_try * np.tensordot(E, K, axes=1) / scale)
            n += 1
            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                h_try *= 0.25
                if h_try < 1e-14 * max(1.0, abs(t)):
                    raise IntegratorFailure(f"non-finite state near t={t:g}")
                continue
            if err <= 1.0:
                factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
                break
            h_try *= max(MIN_FACTOR, SAFETY * err ** -0.2)
            if h_try < 1e-14 * max(1.0, abs(t)):
                raise IntegratorFailure(f"step size underflow near t={t:g}")
        if dense_out is not None:
            dense_out._append(t, h_try, y.copy(), K.copy())
        landed = h_try == span
        t = target if landed else t + h_try
        y, f = y_new, f_new
        h = max(h_try * factor, h) if landed and h_try < h else h_try * factor
        if landed:
            if si < n_wanted:
                stops_out.append(y.copy())
            si += 1
    return y, np.array(stops_out), dense_out, h
