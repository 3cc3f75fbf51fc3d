"""Solvers and numerical certification for homogenized dune morphodynamics on the 2-torus.

Modules
-------
fields        grids, spectral operators, DSF1 field dumps
coefficients  water-flow presets, transport law, hypothesis checker
evolve        full-model time stepper and dense finite-difference oracle
cell          theta-periodic cell solver and a priori estimate suite
homogenized   long- and mean-term limit profiles, corrector
verify        two-scale pairings and convergence studies
config, cli   run configuration and command-line entry point
"""
from .kernels import BACKEND
from .fields import Grid, ScalarField, VectorField, integral_mean, l2_norm, read_dsf1, write_dsf1
from .coefficients import (CoefficientPreset, HypothesisReport, PRESETS, TransportLaw, assemble_AC,
                           classify_theta, eval_transport, get_preset, limit_AC, validate_hypotheses)
from .evolve import EvolutionProblem, Trajectory, reference_solve_dense, run_full, step_imex
from .cell import (CellSolution, CellSolveError, EstimateReport, ThetaProblem, cell_estimates,
                   continuation_nu, solve_theta_periodic)
from .homogenized import (CorrectorProfile, HomogenizedProfile, build_longterm_profile, build_meanterm_profile,
                          solve_corrector_profile, solve_elliptic_slice, solve_meanterm_profile)
from .verify import (ConvergenceReport, TestFunction, convergence_study, corrector_norm, limit_pairing,
                     psi_dictionary, twoscale_pairing)
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .cli import RunReport, run_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Grid", "ScalarField", "VectorField", "integral_mean", "l2_norm", "read_dsf1", "write_dsf1",
    "CoefficientPreset", "HypothesisReport", "PRESETS", "TransportLaw", "assemble_AC", "classify_theta",
    "eval_transport", "get_preset", "limit_AC", "validate_hypotheses",
    "EvolutionProblem", "Trajectory", "reference_solve_dense", "run_full", "step_imex",
    "CellSolution", "CellSolveError", "EstimateReport", "ThetaProblem", "cell_estimates", "continuation_nu",
    "solve_theta_periodic",
    "CorrectorProfile", "HomogenizedProfile", "build_longterm_profile", "build_meanterm_profile",
    "solve_corrector_profile", "solve_elliptic_slice", "solve_meanterm_profile",
    "ConvergenceReport", "TestFunction", "convergence_study", "corrector_norm", "limit_pairing",
    "psi_dictionary", "twoscale_pairing",
    "ConfigError", "RunConfig", "parse_config", "serialize_config", "RunReport", "run_config",
]
