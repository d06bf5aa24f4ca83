import math

import numpy as np
import pytest

from remoments import (GridSpec, InitialMoments, KernelSpec, McConfig, OscillatorParams, Snapshot,
                       integrate_sample, make_kernel, moment_ratios, re_pdf_histogram, run_ensemble,
                       sample_path, solve_diagonal)
from remoments.errors import DegenerateDenominator, EmptyBins, IntegratorFailure, InvalidParameter
from remoments.monte_carlo import SpectralPath, _draw, frequency_grid, jackknife, sample_stream

TIMES = tuple(np.linspace(0, 3, 61))


@pytest.fixture(scope="module")
def linear_ensemble():
    k = make_kernel(KernelSpec("OU", 1.0, 1.0))
    p = OscillatorParams(-1.0, 0.0, 1.0, 0.0)
    return k, p, run_ensemble(p, k, McConfig(n_samples=10_000, seed=11, times=TIMES))


class TestIntegrateSample:
    def test_linear_homogeneous(self):
        t = np.linspace(0, 3, 31)
        x = integrate_sample(OscillatorParams(-1, 0, 1, 0), lambda s: 0.0, 2.0, t)
        assert np.max(np.abs(x - 2 * np.exp(-t))) < 1e-7

    def test_bernoulli_closed_form(self):
        t = np.linspace(0, 3, 31)
        x = integrate_sample(OscillatorParams(-1, -0.7, 1, 0.4), lambda s: 0.0, 2.0, t)
        ref = 2 * np.exp(-t) / np.sqrt(1 + 0.7 * 4 * (1 - np.exp(-2 * t)))
        assert np.max(np.abs(x - ref)) < 1e-6

    def test_constant_input_fixed_point(self):
        t = np.linspace(0, 30, 7)
        x = integrate_sample(OscillatorParams(-2, 0, 1, 0.4), lambda s: 1.5, 0.0, t)
        assert x[-1] == pytest.approx((1.5 + 0.4 * 1.5 ** 3) / 2, rel=1e-8)


class TestSamplePath:
    def test_zero_phase_is_deterministic_cosine_sum(self, ou):
        grid = np.linspace(0, 3, 31)
        a = sample_path(ou, grid, zero_phase=True)
        b = sample_path(ou, grid, zero_phase=True)
        assert np.array_equal(a, b)
        freq = frequency_grid(ou, 3.0)
        assert a[0] == pytest.approx(freq.amplitudes.sum())

    def test_stream_reproducible(self, gf):
        grid = np.linspace(0, 3, 31)
        a = sample_path(gf, grid, sample_stream(5, 17))
        b = sample_path(gf, grid, sample_stream(5, 17))
        c = sample_path(gf, grid, sample_stream(5, 18))
        assert np.array_equal(a, b) and not np.allclose(a, c)

    def test_needs_stream(self, ou):
        with pytest.raises(InvalidParameter):
            sample_path(ou, [0.0, 1.0])

    @pytest.mark.parametrize("family, a", [("OU", 1.0), ("GaussianFilter", math.pi / 4)])
    def test_frequency_grid(self, family, a):
        k = make_kernel(KernelSpec(family, 1.0, a))
        f = frequency_grid(k, 3.0, 1024)
        assert f.d_omega <= 2 * math.pi / 30 + 1e-15
        assert f.period >= 30
        assert f.n_components >= 1024
        assert f.omegas[-1] + f.d_omega / 2 >= f.cutoff
        # variance of the cosine sum is half the summed squared amplitudes
        assert 0.5 * np.sum(f.amplitudes ** 2) == pytest.approx(k.sigma2, rel=2e-3)


class TestEnsembleStatistics:
    def test_paths_match_spectral_sum(self, linear_ensemble):
        k, p, e = linear_ensemble
        cfg = McConfig(n_samples=10_000, seed=11, times=TIMES)
        for i in (0, 4321, 9999):
            x0, phases = _draw(sample_stream(11, i), e.frequency.n_components, cfg.initial, "gaussian")
            path = SpectralPath(e.frequency.omegas, e.frequency.amplitudes, phases)
            assert np.max(np.abs(path(np.array(TIMES)) - e.y[i])) < 1e-9
            assert np.max(np.abs(integrate_sample(p, path, x0, TIMES) - e.x[i])) < 1e-5

    def test_excitation_mean(self, linear_ensemble):
        e = linear_ensemble[2]
        for k in (0, 30, 60):
            assert abs(e.y[:, k].mean()) < 3 / 100

    @pytest.mark.parametrize("lag", [0, 20, 60])
    def test_excitation_covariance(self, linear_ensemble, lag):
        k, _, e = linear_ensemble
        y0, y1 = e.y[:, 0], e.y[:, lag]
        val, se = jackknife({"a": y0, "b": y1, "ab": y0 * y1}, lambda m: m["ab"] - m["a"] * m["b"])
        assert abs(val - k.covariance(lag * 0.05)) < 3 * se

    def test_kurtosis(self, linear_ensemble):
        y = linear_ensemble[2].y[:, 30]
        cols = {1: y, 2: y ** 2, 3: y ** 3, 4: y ** 4}

        def kurt(m):
            mu = m[1]
            c2 = m[2] - mu ** 2
            c4 = m[4] - 4 * mu * m[3] + 6 * mu ** 2 * m[2] - 3 * mu ** 4
            return c4 / c2 ** 2

        val, se = jackknife(cols, kurt)
        assert abs(val - 3.0) < 3 * se

    def test_linear_case_matches_solver(self, linear_ensemble, init):
        k, p, e = linear_ensemble
        tr = solve_diagonal(p, k, init, GridSpec(0, 3))
        ref = np.interp(e.times, tr.times, tr.c_xx_diag)
        assert np.all(np.abs(e.c_xx_diag - ref) <= 3 * e.se_c_xx + 1e-12)
        ref_xy = np.interp(e.times, tr.times, tr.c_xy_diag)
        assert np.all(np.abs(e.c_xy_diag[1:] - ref_xy[1:]) <= 3 * e.se_c_xy[1:])

    def test_nonnegative_variance(self, linear_ensemble):
        assert np.all(linear_ensemble[2].c_xx_diag >= 0)

    def test_standard_error_scaling(self, linear_ensemble):
        k, p, e = linear_ensemble
        small = run_ensemble(p, k, McConfig(n_samples=2_500, seed=12, times=TIMES))
        ratio = small.se_c_xx[20:] / e.se_c_xx[20:]
        assert np.all(np.abs(ratio / 2 - 1) < 0.2)

    def test_two_time_slice_symmetry(self, linear_ensemble):
        e = linear_ensemble[2]
        a, b = e.two_time_slice(1.0), e.two_time_slice(2.0)
        i, j = e.index(1.0), e.index(2.0)
        pooled = math.hypot(a["se_c_xx"][j], b["se_c_xx"][i])
        assert abs(a["c_xx"][j] - b["c_xx"][i]) < 3 * pooled

    def test_unknown_time(self, linear_ensemble):
        with pytest.raises(InvalidParameter):
            linear_ensemble[2].snapshot(1.01)


class TestDeterminism:
    def test_thread_count_invariance(self, nonlinear_params, gf):
        base = dict(n_samples=300, seed=3, times=tuple(np.linspace(0, 1, 11)), chunk_size=64)
        a = run_ensemble(nonlinear_params, gf, McConfig(threads=1, **base))
        b = run_ensemble(nonlinear_params, gf, McConfig(threads=3, **base))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
        assert np.array_equal(a.c_xx_diag, b.c_xx_diag)

    def test_chunking_invariance(self, nonlinear_params, ou):
        base = dict(n_samples=200, seed=9, times=tuple(np.linspace(0, 1, 11)))
        a = run_ensemble(nonlinear_params, ou, McConfig(chunk_size=7, **base))
        b = run_ensemble(nonlinear_params, ou, McConfig(chunk_size=256, **base))
        assert np.array_equal(a.x, b.x)

    def test_blow_up_reports_sample(self, nonlinear_params, ou):
        cfg = McConfig(n_samples=4, times=(0.0, 0.5, 1.0), initial=InitialMoments(100.0, 1.0))
        with pytest.raises(IntegratorFailure) as err:
            run_ensemble(nonlinear_params, ou, cfg)
        assert err.value.sample == 0


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(n_samples=1), dict(n_components=0), dict(times=(0.0, 1.0, 1.5)),
        dict(times=(1.0, 0.0)), dict(x0_law="uniform"), dict(mass_fraction=1.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameter):
            McConfig(**kwargs)


class TestRatiosAndHistogram:
    def gaussian(self, rho, n=200_000, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        y = rho * x + math.sqrt(1 - rho ** 2) * rng.standard_normal(n)
        return Snapshot(0.0, x, y)

    def test_gaussian_ratios_are_one(self):
        r = moment_ratios(self.gaussian(0.5))
        assert abs(r.r13 - 1) < 3 * r.se_r13
        assert abs(r.r31 - 1) < 3 * r.se_r31

    def test_window_snapshot(self):
        s = self.gaussian(0.5)
        w = Snapshot(0.0, np.stack([s.x, s.x], axis=1), np.stack([s.y, s.y], axis=1))
        assert moment_ratios(w).r13 == pytest.approx(moment_ratios(s).r13)

    def test_degenerate_denominator(self):
        with pytest.raises(DegenerateDenominator):
            moment_ratios(self.gaussian(0.0, n=1000))

    def test_single_point_mass(self):
        s = Snapshot(0.0, np.full(50, 0.3), np.full(50, -0.2))
        h, _, _ = re_pdf_histogram(s, [np.linspace(-1, 1, 11), np.linspace(-1, 1, 11)])
        assert h.sum() == pytest.approx(1.0)
        assert np.count_nonzero(h) == 1 and h.max() == 1.0

    def test_empty_bins(self):
        s = Snapshot(0.0, np.zeros(5), np.zeros(5))
        with pytest.raises(EmptyBins):
            re_pdf_histogram(s, [np.linspace(1, 2, 3), np.linspace(1, 2, 3)])

    def test_gaussian_histogram_correlation(self):
        rho = 0.6
        s = self.gaussian(rho)
        edges = np.linspace(-5, 5, 101)
        h, xe, ye = re_pdf_histogram(s, [edges, edges])
        assert h.sum() == pytest.approx(1.0)
        xc, yc = (xe[1:] + xe[:-1]) / 2, (ye[1:] + ye[:-1]) / 2
        mx, my = h.sum(1) @ xc, h.sum(0) @ yc
        cxy = (xc - mx) @ h @ (yc - my)
        vx = h.sum(1) @ (xc - mx) ** 2
        vy = h.sum(0) @ (yc - my) ** 2
        se = (1 - rho ** 2) / math.sqrt(s.x.size)
        assert abs(cxy / math.sqrt(vx * vy) - rho) < 3 * se + 1e-3
