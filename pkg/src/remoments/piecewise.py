"""Piecewise-polynomial representation of the drift coefficient history.

Each fine interval ``[t_k, t_{k+1}]`` carries ``A_x`` sampled at ``NODES``
Gauss-Lobatto points; inside the interval ``A_x`` is the interpolating
polynomial and its running integral ``I_A(t) = int_{t0}^t A_x`` is exact for
that polynomial. The same nodes double as the quadrature rule for the
memory integrals, so ``exp(I_A(t) - I_A(tau))`` is never approximated by a
coarser rule than ``A_x`` itself.
"""
from __future__ import annotations

import numpy as np

NODES = 5
# Gauss-Lobatto abscissae on [0, 1]
LOBATTO = np.array([0.0, (1 - np.sqrt(3 / 7)) / 2, 0.5, (1 + np.sqrt(3 / 7)) / 2, 1.0])

_V = np.vander(LOBATTO, NODES, increasing=True)
# column j holds the power-basis coefficients of the j-th Lagrange polynomial
_LAGRANGE = np.linalg.inv(_V)
_POW = np.arange(NODES)
_ANTI = _LAGRANGE / (_POW + 1.0)[:, None]  # coefficients of x^(i+1)
LOBATTO_WEIGHTS = _ANTI.sum(axis=0)
# INTEGRATE[i, j] = int_0^{x_i} L_j
INTEGRATE = (LOBATTO[:, None] ** (_POW + 1)) @ _ANTI

_GL_X, _GL_W = np.polynomial.legendre.leggauss(NODES)
GL_X = (_GL_X + 1) / 2
GL_W = _GL_W / 2


def lagrange_basis(x):
    """Lagrange basis values at ``x`` (shape ``x.shape + (NODES,)``)."""
    x = np.asarray(x, dtype=float)
    return (x[..., None] ** _POW) @ _LAGRANGE


def lagrange_antiderivative(x):
    x = np.asarray(x, dtype=float)
    return (x[..., None] ** (_POW + 1)) @ _ANTI


class PiecewiseA:
    """``A_x`` on consecutive fine intervals, with ``I_A`` anchored at ``ia0``.

    Parameters
    ----------
    edges : (n + 1,) array of fine-grid times.
    values : (n, NODES) array, ``A_x`` at the Lobatto points of every interval.
    ia0 : value of ``I_A`` at ``edges[0]``.
    """

    def __init__(self, edges, values, ia0=0.0):
        self.edges = np.asarray(edges, dtype=float)
        self.values = np.asarray(values, dtype=float).reshape(len(self.edges) - 1, NODES)
        self.h = np.diff(self.edges)
        increments = self.h[:, None] * (self.values @ INTEGRATE.T)
        starts = ia0 + np.concatenate([[0.0], np.cumsum(increments[:, -1])])
        self.ia_edges = starts
        self.ia_nodes = starts[:-1, None] + increments
        self.tau = self.edges[:-1, None] + self.h[:, None] * LOBATTO
        self.weights = self.h[:, None] * LOBATTO_WEIGHTS

    @classmethod
    def from_linear(cls, times, a_x, ia0=0.0):
        """Exact representation of the piecewise-linear interpolant of ``a_x``."""
        a_x = np.asarray(a_x, dtype=float)
        vals = a_x[:-1, None] + (a_x[1:] - a_x[:-1])[:, None] * LOBATTO
        return cls(times, vals, ia0)

    @classmethod
    def from_function(cls, edges, fn, ia0=0.0):
        edges = np.asarray(edges, dtype=float)
        tau = edges[:-1, None] + np.diff(edges)[:, None] * LOBATTO
        return cls(edges, fn(tau), ia0)

    @property
    def t0(self):
        return self.edges[0]

    @property
    def t_end(self):
        return self.edges[-1]

    @property
    def node_values(self):
        """``A_x`` at the fine-grid times."""
        return np.concatenate([self.values[:, 0], self.values[-1:, -1]])

    def subgrid(self):
        """Unique Lobatto sub-grid: times, ``A_x`` and ``I_A`` there."""
        t = np.concatenate([self.tau[:, :-1].ravel(), self.edges[-1:]])
        a = np.concatenate([self.values[:, :-1].ravel(), self.values[-1:, -1]])
        ia = np.concatenate([self.ia_nodes[:, :-1].ravel(), self.ia_edges[-1:]])
        return t, a, ia

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.h) - 1)
        return k, (t - self.edges[k]) / self.h[k]

    def a(self, t):
        k, x = self.locate(t)
        return np.sum(lagrange_basis(x) * self.values[k], axis=-1)

    def ia(self, t):
        k, x = self.locate(t)
        return self.ia_edges[k] + self.h[k] * np.sum(lagrange_antiderivative(x) * self.values[k], axis=-1)

    def partial_rule(self, t):
        """Gauss-Legendre nodes, weights and ``I_A`` on ``[t_k, t]`` for the interval holding ``t``."""
        k, x = self.locate(float(t))
        k, x = int(k), float(x)
        xs = GL_X * x
        tau = self.edges[k] + self.h[k] * xs
        w = self.h[k] * x * GL_W
        ia = self.ia_edges[k] + self.h[k] * (lagrange_antiderivative(xs) @ self.values[k])
        return k, tau, w, ia
