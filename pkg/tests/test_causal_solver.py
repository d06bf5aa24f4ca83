import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from remoments import (DiagonalTrajectory, GridSpec, InitialMoments, KernelSpec, OscillatorParams,
                       PairHistory, SolverConfig, cycle_converged, diagonal_cross_covariance,
                       kernel_for_correlation_time, make_kernel, solve_diagonal)
from remoments.errors import GridMismatch, HistoryTooShort, InvalidParameter, NoConvergence

PARAMETER_SETS = list(itertools.product((0.0, -0.1, -0.7), (0.0, 0.4, -0.4), ("OU", "GaussianFilter")))


class TestGridSpec:
    def test_default_coarse_step_is_correlation_time(self, gf):
        edges = GridSpec(0.0, 3.0).coarse_edges(gf)
        assert np.allclose(np.diff(edges)[:-1], gf.correlation_time())
        assert edges[-1] == 3.0

    def test_short_last_step(self):
        edges = GridSpec(0.0, 1.0, 0.3).coarse_edges()
        assert np.allclose(edges, [0.0, 0.3, 0.6, 0.9, 1.0])

    def test_fine_grid(self):
        fine = GridSpec(0.0, 2.0, 1.0, 4).fine_edges()
        assert np.allclose(fine, np.linspace(0, 2, 9))

    @pytest.mark.parametrize("kwargs", [dict(t_end=0.0), dict(coarse_step=0.0), dict(fine_per_coarse=1)])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameter):
            GridSpec(**{"t0": 0.0, "t_end": 1.0, **kwargs})


class TestCycleConverged:
    cfg = SolverConfig(eps1=1e-6, eps2=1e-6)
    t = np.linspace(0, 1, 5)

    def hist(self, m, c):
        return PairHistory(self.t, np.asarray(m, float), np.asarray(c, float))

    def test_identical(self):
        h = self.hist(np.ones(5), np.ones(5))
        assert cycle_converged(h, h, self.cfg)

    def test_one_point_off_by_two_eps(self):
        m = np.ones(5)
        m2 = m.copy()
        m2[2] += 2e-6
        assert not cycle_converged(self.hist(m, m), self.hist(m2, m), self.cfg)

    def test_half_eps_everywhere(self):
        a = self.hist(np.zeros(5), np.zeros(5))
        b = self.hist(np.full(5, 0.5e-6), np.full(5, 0.5e-6))
        assert cycle_converged(a, b, self.cfg)

    def test_grid_mismatch(self):
        a = self.hist(np.zeros(5), np.zeros(5))
        b = PairHistory(np.linspace(0, 1, 4), np.zeros(4), np.zeros(4))
        with pytest.raises(GridMismatch):
            cycle_converged(a, b, self.cfg)


class TestDiagonalCrossCovariance:
    def traj(self):
        return DiagonalTrajectory.from_coefficients(np.linspace(0, 1, 21), -1.0)

    def test_zero_at_start(self, ou, linear_params):
        assert diagonal_cross_covariance(self.traj(), ou, linear_params, 0.0) == 0.0

    def test_frozen_coefficients(self, ou, linear_params):
        val = diagonal_cross_covariance(self.traj(), ou, linear_params, 1.0)
        assert val == pytest.approx(0.43233235838169365, abs=1e-10)
        ref, _ = integrate.quad(lambda tau: math.exp(-(1 - tau)) * math.exp(-(1 - tau)), 0, 1,
                                epsabs=1e-14, epsrel=1e-13)
        assert val == pytest.approx(ref, abs=1e-8)

    def test_interior_time(self, ou, linear_params):
        t = 0.537
        val = diagonal_cross_covariance(self.traj(), ou, linear_params, t)
        assert val == pytest.approx((1 - math.exp(-2 * t)) / 2, abs=1e-10)

    def test_history_too_short(self, ou, linear_params):
        with pytest.raises(HistoryTooShort):
            diagonal_cross_covariance(self.traj(), ou, linear_params, 1.5)


class TestLinearOracles:
    def test_noise_free_decay(self, linear_params, init):
        quiet = make_kernel(KernelSpec("OU", 1e-14, 1.0))
        tr = solve_diagonal(linear_params, quiet, init, GridSpec(0, 3, 1.0))
        assert np.max(np.abs(tr.m_x - 2 * np.exp(-tr.times))) < 1e-6
        assert np.max(np.abs(tr.c_xx_diag - np.exp(-2 * tr.times))) < 1e-6
        assert np.max(np.abs(tr.c_xy_diag)) < 1e-6

    def test_transient_closed_form(self, linear_params, ou, init):
        tr = solve_diagonal(linear_params, ou, init, GridSpec(0, 5))
        t = tr.times
        assert np.max(np.abs(tr.m_x - 2 * np.exp(-t))) < 1e-7
        assert np.max(np.abs(tr.c_xy_diag - (1 - np.exp(-2 * t)) / 2)) < 1e-7
        assert np.max(np.abs(tr.c_xx_diag - (0.5 + (0.5 - t) * np.exp(-2 * t)))) < 1e-7

    def test_stationary_limit(self, linear_params, ou, init):
        tr = solve_diagonal(linear_params, ou, init, GridSpec(0, 10))
        assert tr.c_xx_diag[-1] == pytest.approx(0.5, abs=1e-6)
        assert tr.c_xy_diag[-1] == pytest.approx(0.5, abs=1e-6)


@pytest.fixture(scope="module")
def traj():
    k = make_kernel(KernelSpec("GaussianFilter", 1.0, math.pi / 4))
    return k, solve_diagonal(OscillatorParams(-1, -0.7, 1, 0.4), k, InitialMoments(), GridSpec(0, 3))


class TestInvariants:

    def test_trajectory_invariants(self, traj):
        k, tr = traj
        assert np.all(tr.c_xx_diag >= 0)
        assert np.all(tr.a_x < 0)
        assert np.all(np.diff(tr.ia) < 0)
        assert np.all(np.abs(tr.c_xy_diag) <= np.sqrt(tr.c_xx_diag * k.sigma2))
        assert tr.times.size == tr.m_x.size == tr.a_x.size == tr.ia.size

    def test_cross_covariance_matches_pointwise_evaluator(self, traj):
        k, tr = traj
        p = OscillatorParams(-1, -0.7, 1, 0.4)
        for j in (5, 17, 40, 60):
            assert diagonal_cross_covariance(tr, k, p, tr.times[j]) == pytest.approx(
                tr.c_xy_diag[j], abs=1e-13)

    def test_ou_cross_covariance_ode(self, nonlinear_params, ou, init):
        # for the OU kernel C_xy(t, t) obeys a local equation; check by finite differences
        errs = []
        for J in (20, 40):
            tr = solve_diagonal(nonlinear_params, ou, init, GridSpec(0, 3, None, J))
            h = tr.times[1] - tr.times[0]
            d = (tr.c_xy_diag[2:] - tr.c_xy_diag[:-2]) / (2 * h)
            rhs = (tr.a_x[1:-1] - ou.a) * tr.c_xy_diag[1:-1] + (1 + 3 * 0.4) * ou.sigma2
            errs.append(np.max(np.abs(d - rhs)[tr.times[1:-1] >= 0.5]))
        assert errs[1] < errs[0] / 3
        assert errs[1] < 1e-2


class TestScheme:
    def test_rejects_bistable(self, ou, init):
        with pytest.raises(InvalidParameter):
            solve_diagonal(OscillatorParams(1.0, -0.7, 1, 0), ou, init, GridSpec(0, 1))

    def test_no_convergence(self, nonlinear_params, ou, init):
        with pytest.raises(NoConvergence) as err:
            solve_diagonal(nonlinear_params, ou, init, GridSpec(0, 3), SolverConfig(max_cycles=1))
        assert err.value.step == 0

    @pytest.mark.parametrize("mu3, k3, fam", PARAMETER_SETS)
    def test_cycle_economy(self, mu3, k3, fam, init):
        k = kernel_for_correlation_time(fam, 1.0)
        tr = solve_diagonal(OscillatorParams(-1, mu3, 1, k3), k, init, GridSpec(0, 3),
                            SolverConfig(1e-6, 1e-6))
        assert tr.cycles_per_step.max() <= 5

    def test_grid_refinement(self, nonlinear_params, gf, init):
        g = GridSpec(0, 3)
        a = solve_diagonal(nonlinear_params, gf, init, g)
        b = solve_diagonal(nonlinear_params, gf, init, g.refined(2, gf))
        for name in ("m_x", "c_xx_diag", "c_xy_diag"):
            x, y = getattr(a, name)[-1], getattr(b, name)[-1]
            assert abs(x - y) < 1e-4 * abs(y)

    def test_bounded_long_time(self, nonlinear_params, ou, init):
        tr = solve_diagonal(nonlinear_params, ou, init, GridSpec(0, 20))
        tail = tr.times >= 18
        for name in ("m_x", "c_xx_diag", "c_xy_diag"):
            v = getattr(tr, name)[tail]
            assert np.ptp(v) < 1e-6
