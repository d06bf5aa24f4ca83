"""Monte Carlo reference for the cubic half-oscillator.

Excitation paths come from the random-phase spectral model

    y(t) = m_y + sum_n sqrt(2 G(w_n) dw) cos(w_n t + phi_n),

with ``G = 2 S`` the one-sided spectral density, midpoint frequencies
``w_n = (n - 1/2) dw`` and independent uniform phases. Every sample owns a
counter-based Philox stream keyed by ``(seed, sample index)``, so results do
not depend on how samples are split between workers.

Ensembles are advanced by classical RK4 on a uniform grid whose half steps
coincide with an FFT evaluation grid of the cosine sum; single paths can be
integrated adaptively with the cosine sum evaluated in closed form.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .causal_solver import SolverConfig
from .dopri import dopri5
from .errors import DegenerateDenominator, EmptyBins, IntegratorFailure, InvalidParameter
from .oscillator import InitialMoments, OscillatorParams, Stability, central_from_raw

__all__ = [
    "McConfig",
    "FrequencyGrid",
    "SpectralPath",
    "Snapshot",
    "RatioEstimate",
    "EnsembleMoments",
    "frequency_grid",
    "sample_stream",
    "sample_path",
    "integrate_sample",
    "run_ensemble",
    "moment_ratios",
    "re_pdf_histogram",
    "jackknife",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class McConfig:
    """Ensemble settings.

    ``times`` must be a uniform grid starting at ``t0``; the RK4 step is the
    largest divisor of its spacing not exceeding ``max_step`` (and ``pi / W``
    for the spectral cutoff ``W``).
    """

    n_samples: int = 10_000
    n_components: int = 1024
    seed: int = 0
    times: tuple = tuple(np.linspace(0.0, 3.0, 61))
    initial: InitialMoments = InitialMoments()
    x0_law: str = "gaussian"
    mass_fraction: float = 0.999
    max_step: float = 0.01
    chunk_size: int = 256
    threads: int = 1

    def __post_init__(self):
        if self.n_samples < 2:
            raise InvalidParameter("n_samples", "need at least 2 samples")
        if self.n_components < 1:
            raise InvalidParameter("n_components", "must be >= 1")
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise InvalidParameter("times", "must be strictly increasing with >= 2 points")
        d = np.diff(t)
        if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(t[-1])):
            raise InvalidParameter("times", "must be uniformly spaced")
        if self.x0_law not in ("gaussian", "fixed"):
            raise InvalidParameter("x0_law", "must be 'gaussian' or 'fixed'")
        if not 0 < self.mass_fraction < 1:
            raise InvalidParameter("mass_fraction", "must lie in (0, 1)")
        if self.max_step <= 0 or self.chunk_size < 1 or self.threads < 0:
            raise InvalidParameter("mc", "max_step, chunk_size must be positive, threads >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParameter("seed", "must fit in 64 unsigned bits")

    @property
    def grid(self):
        return np.asarray(self.times, dtype=float)


@dataclass(frozen=True)
class FrequencyGrid:
    omegas: np.ndarray
    amplitudes: np.ndarray
    d_omega: float
    cutoff: float
    step: float
    fft_length: int

    @property
    def n_components(self):
        return self.omegas.size

    @property
    def period(self):
        return TWO_PI / self.d_omega


def frequency_grid(kernel, span, n_components=1024, mass_fraction=0.999, max_step=0.01,
                   out_spacing=None) -> FrequencyGrid:
    """Midpoint frequency grid for paths on a window of length ``span``.

    ``n_components`` is a floor: more components are used when the cutoff and
    the recurrence bound ``dw <= 2 pi / (10 span)`` need them.
    """
    cutoff = kernel.cutoff_frequency(mass_fraction)
    h = min(max_step, math.pi / cutoff)
    if out_spacing is not None:
        h = out_spacing / math.ceil(out_spacing / h - 1e-9)
    delta = h / 2.0
    d_omega = min(TWO_PI / (10.0 * span), cutoff / n_components)
    length = fft.next_fast_len(math.ceil(TWO_PI / (d_omega * delta)))
    d_omega = TWO_PI / (length * delta)
    n = max(n_components, math.ceil(cutoff / d_omega))
    omegas = (np.arange(n) + 0.5) * d_omega
    one_sided = 2.0 * kernel.spectral_density(omegas)
    return FrequencyGrid(omegas, np.sqrt(2.0 * one_sided * d_omega), d_omega, cutoff, h, length)


def sample_stream(seed, index):
    """Independent generator for sample ``index`` under master ``seed``."""
    key = np.array([int(seed) % 2 ** 64, int(index) % 2 ** 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw(stream, n_components, init: InitialMoments, law):
    z = stream.standard_normal()
    x0 = init.m_x0 + (math.sqrt(init.c_x0x0) * z if law == "gaussian" else 0.0)
    phases = stream.uniform(0.0, TWO_PI, n_components)
    return x0, phases


@dataclass(frozen=True)
class SpectralPath:
    """Closed-form cosine sum; callable at any time."""

    omegas: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    mean: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        arg = np.multiply.outer(t, self.omegas) + self.phases
        return self.mean + np.cos(arg) @ self.amplitudes


def sample_path(kernel, grid, stream=None, freq: FrequencyGrid | None = None,
                zero_phase=False, span=None) -> np.ndarray:
    """One excitation path evaluated on ``grid``.

    With ``zero_phase`` every phase is 0 and the path is the deterministic
    cosine sum (a reproducibility hook).
    """
    grid = np.asarray(grid, dtype=float)
    if freq is None:
        freq = frequency_grid(kernel, span or float(grid[-1] - grid[0]) or 1.0)
    if zero_phase:
        phases = np.zeros(freq.n_components)
    else:
        if stream is None:
            raise InvalidParameter("stream", "a random stream is needed unless zero_phase is set")
        phases = stream.uniform(0.0, TWO_PI, freq.n_components)
    return SpectralPath(freq.omegas, freq.amplitudes, phases, kernel.mean)(grid)


def integrate_sample(params: OscillatorParams, y_path, x0, times, cfg: SolverConfig | None = None):
    """Pathwise response on ``times`` by the adaptive integrator.

    ``y_path`` is a callable excitation (for example a :class:`SpectralPath`),
    evaluated wherever the integrator asks.
    """
    cfg = cfg or SolverConfig()
    times = np.asarray(times, dtype=float)
    mu1, mu3, k1, k3 = params.mu1, params.mu3, params.kappa1, params.kappa3

    def rhs(t, x):
        y = float(y_path(t))
        return np.array([mu1 * x[0] + mu3 * x[0] ** 3 + k1 * y + k3 * y ** 3])

    x_init = np.array([float(x0)])
    _, stops, _, _ = dopri5(rhs, times[0], x_init, times[-1], rtol=cfg.ode_rel_tol,
                            atol=cfg.ode_abs_tol, tstops=times[1:])
    return np.concatenate([x_init, stops[:, 0]])


def _excitation_on_half_grid(amps, phases, freq: FrequencyGrid, n_half, mean):
    n = freq.n_components
    coef = np.zeros((phases.shape[0], freq.fft_length), dtype=complex)
    coef[:, :n] = amps * np.exp(1j * phases)
    vals = fft.ifft(coef, axis=1, norm="forward")[:, :n_half]
    k = np.arange(n_half)
    return mean + np.real(vals * np.exp(1j * math.pi * k / freq.fft_length))


def _simulate_chunk(params, kernel, freq, cfg: McConfig, start, stop):
    grid = cfg.grid
    h = freq.step
    n_steps = int(round((grid[-1] - grid[0]) / h))
    stride = int(round((grid[1] - grid[0]) / h))
    m = stop - start
    x0 = np.empty(m)
    phases = np.empty((m, freq.n_components))
    for j, idx in enumerate(range(start, stop)):
        x0[j], phases[j] = _draw(sample_stream(cfg.seed, idx), freq.n_components,
                                 cfg.initial, cfg.x0_law)
    y = _excitation_on_half_grid(freq.amplitudes, phases, freq, 2 * n_steps + 1, kernel.mean)
    z = params.kappa1 * y + params.kappa3 * y ** 3
    mu1, mu3 = params.mu1, params.mu3

    def f(x, zz):
        return mu1 * x + mu3 * x ** 3 + zz

    xs = np.empty((m, grid.size))
    x = x0.copy()
    xs[:, 0] = x
    # divergence is detected below, so overflow along the way is expected
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            z0, z1, z2 = z[:, 2 * i], z[:, 2 * i + 1], z[:, 2 * i + 2]
            k1 = f(x, z0)
            k2 = f(x + 0.5 * h * k1, z1)
            k3 = f(x + 0.5 * h * k2, z1)
            k4 = f(x + h * k3, z2)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (i + 1) % stride == 0:
                xs[:, (i + 1) // stride] = x
    bad = ~np.all(np.isfinite(xs), axis=1)
    if np.any(bad):
        idx = start + int(np.argmax(bad))
        raise IntegratorFailure("sample path diverged", sample=idx)
    return xs, y[:, ::2 * stride].copy()


def jackknife(columns, estimator):
    """Leave-one-out estimates and standard error for an estimator of sample means.

    ``columns`` is a dict of per-sample arrays of shape ``(n, ...)``;
    ``estimator`` maps a dict of means to the statistic. Returns
    ``(value, standard_error)``.
    """
    n = next(iter(columns.values())).shape[0]
    sums = {k: v.sum(axis=0) for k, v in columns.items()}
    full = estimator({k: s / n for k, s in sums.items()})
    loo = estimator({k: (sums[k] - v) / (n - 1) for k, v in columns.items()})
    mean_loo = loo.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum((loo - mean_loo) ** 2, axis=0))
    return full, se


def _raw_columns(x, y, order):
    cols = {}
    for total in range(1, order + 1):
        for j1 in range(total + 1):
            cols[(j1, total - j1)] = x ** j1 * y ** (total - j1)
    return cols


def _central(key, order=2):
    def est(means):
        c = central_from_raw(means, means[(1, 0)], means[(0, 1)], order)
        return c[key]
    return est


@dataclass(frozen=True)
class Snapshot:
    """Per-sample ``(x(t), y(t))`` at one time.

    ``x`` and ``y`` may also be ``(n, k)`` arrays covering ``k`` times of a
    stationary window; statistics then pool the window per sample.
    """

    t: float
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class RatioEstimate:
    r13: float
    r31: float
    se_r13: float
    se_r31: float


@dataclass
class EnsembleMoments:
    times: np.ndarray
    m_x: np.ndarray
    se_m_x: np.ndarray
    c_xx_diag: np.ndarray
    se_c_xx: np.ndarray
    c_xy_diag: np.ndarray
    se_c_xy: np.ndarray
    n_samples: int
    frequency: FrequencyGrid
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def index(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidParameter("t", f"{t} is not an output time")
        return k

    def snapshot(self, t) -> Snapshot:
        k = self.index(t)
        return Snapshot(float(self.times[k]), self.x[:, k], self.y[:, k])

    def two_time_slice(self, s):
        """``C_xy(., s)`` and ``C_xx(., s)`` with jackknife errors along the time axis."""
        k = self.index(s)
        ys, xs = self.y[:, k:k + 1], self.x[:, k:k + 1]

        def cov(a, b):
            cols = {"a": a, "b": b, "ab": a * b}
            return jackknife(cols, lambda mm: mm["ab"] - mm["a"] * mm["b"])

        c_xy, se_xy = cov(self.x, np.broadcast_to(ys, self.x.shape))
        c_xx, se_xx = cov(self.x, np.broadcast_to(xs, self.x.shape))
        return {"c_xy": c_xy, "se_c_xy": se_xy, "c_xx": c_xx, "se_c_xx": se_xx}


def run_ensemble(params: OscillatorParams, kernel, cfg: McConfig) -> EnsembleMoments:
    """Simulate ``cfg.n_samples`` paths and estimate the diagonal moments."""
    if params.stability not in (Stability.MONOSTABLE, Stability.LINEAR, Stability.BISTABLE):
        raise InvalidParameter("params", f"{params.stability.value} systems have no bounded response")
    grid = cfg.grid
    freq = frequency_grid(kernel, float(grid[-1] - grid[0]), cfg.n_components,
                          cfg.mass_fraction, cfg.max_step, float(grid[1] - grid[0]))
    bounds = list(range(0, cfg.n_samples, cfg.chunk_size)) + [cfg.n_samples]
    spans = list(zip(bounds[:-1], bounds[1:]))
    threads = cfg.threads or os.cpu_count() or 1

    def work(span):
        return _simulate_chunk(params, kernel, freq, cfg, *span)

    if threads == 1:
        parts = [work(s) for s in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, spans))
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])

    cols = _raw_columns(x, y, 2)
    m_x, se_m = jackknife({(1, 0): x}, lambda mm: mm[(1, 0)])
    c_xx, se_xx = jackknife(cols, _central((2, 0)))
    c_xy, se_xy = jackknife(cols, _central((1, 1)))
    return EnsembleMoments(grid.copy(), m_x, se_m, c_xx, se_xx, c_xy, se_xy,
                           cfg.n_samples, freq, x, y)


def moment_ratios(snap: Snapshot) -> RatioEstimate:
    """Fourth-order moments relative to their Gaussian (Isserlis) values.

    ``r13 = E[x' y'^3] / (3 C_yy C_xy)`` and ``r31 = E[x'^3 y'] / (3 C_xx C_xy)``
    with primes denoting deviations from the sample means.
    """
    cols = _raw_columns(snap.x, snap.y, 4)
    if snap.x.ndim == 2:
        cols = {k: v.mean(axis=1) for k, v in cols.items()}
    c_xy, se_xy = jackknife(cols, _central((1, 1)))
    if not abs(c_xy) > 10.0 * se_xy:
        raise DegenerateDenominator(
            f"C_xy = {c_xy:.3g} is within 10 standard errors ({se_xy:.3g}) of zero")

    def r13(mm):
        c = central_from_raw(mm, mm[(1, 0)], mm[(0, 1)], 4)
        return c[(1, 3)] / (3.0 * c[(0, 2)] * c[(1, 1)])

    def r31(mm):
        c = central_from_raw(mm, mm[(1, 0)], mm[(0, 1)], 4)
        return c[(3, 1)] / (3.0 * c[(2, 0)] * c[(1, 1)])

    v13, s13 = jackknife(cols, r13)
    v31, s31 = jackknife(cols, r31)
    return RatioEstimate(float(v13), float(v31), float(s13), float(s31))


def re_pdf_histogram(snap: Snapshot, bins):
    """Normalised 2-D histogram of ``(x(t), y(t))``; bin masses sum to 1.

    ``bins`` is anything :func:`numpy.histogram2d` accepts. Samples outside the
    bin range are dropped before normalising.
    """
    counts, xe, ye = np.histogram2d(np.ravel(snap.x), np.ravel(snap.y), bins=bins)
    total = counts.sum()
    if total == 0:
        raise EmptyBins("no samples fall inside the histogram range")
    return counts / total, xe, ye
