"""Causal two-time response-excitation moment equations for a cubic half-oscillator."""

from .excitation import (Family, Kernel, KernelSpec, correlation_time, covariance,
                         kernel_for_correlation_time, make_kernel, spectral_density)
from .oscillator import (CoefficientSet, InitialMoments, OscillatorParams, Stability, central_from_raw,
                         classify_potential, coefficients, isserlis_fourth, raw_from_central)
from .causal_solver import (DiagonalTrajectory, GridSpec, PairHistory, SolverConfig, cycle_converged,
                            diagonal_cross_covariance, solve_diagonal)
from .two_time import (CrossCovarianceField, Method, TwoTimeField, auto_covariance_field,
                       cross_covariance_field, initial_cross_section, two_time_field)
from .ito_reference import LocalTrajectory, ResidualReport, localization_residual, solve_ou_local
from .monte_carlo import (EnsembleMoments, McConfig, RatioEstimate, Snapshot, integrate_sample,
                          moment_ratios, re_pdf_histogram, run_ensemble, sample_path)

__version__ = "0.1.0"
