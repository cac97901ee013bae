"""Hamiltonian Monte Carlo with adaptive two- and three-stage splitting integrators."""

from .adapt import (BOptTable, FittingResult, fitting_factors, lookup_bopt,
                    nondimensionalize, select_mode, tabulate_bopt)
from .diagnostics import DiagnosticsReport, efficiency_summary, ess, mcse, psrf
from .integrator import (PhasePoint, SplittingScheme, harmonic_propagator, integrate_leg,
                         rho, stability_limit_dimensionless, step)
from .kernels import BACKEND
from .model import (BlrDataset, FrequencySummary, GaussianModel, GaussianModelSpec,
                    LogisticRegressionModel, TargetModel, load_dataset, make_blr_model,
                    make_gaussian_diag_mixture, make_gaussian_wishart)
from .sampler import ChainRecord, HmcConfig, PipelineState, StepRandomization, run_pipeline

__version__ = "0.1.0"
