"""Vecchia approximations for spatio-temporal Gaussian processes with sensor offsets."""
from .covariance import (
    PARAM_NAMES, PM10_CLASSICAL, PM10_HIERARCHICAL, CovarianceParams, build_sigma, kernel,
    sigma_derivatives, simulate,
)
from .data import (
    Dataset, ObservationRecord, PredictionPoint, load_observations, make_dataset, preprocess,
    project_lonlat, running_median, save_observations,
)
from .errors import (
    CapacityError, ConfigError, ConvergenceError, DomainError, EmptyInputError, InitializationError,
    InputError, NumericalError, ParseError, RankError, SchemaError, STVecchiaError,
)
from .estimate import FitResult, VecchiaConfig, fit, fit_models, profile_beta
from .experiments import run_sweep, write_sweep_csv
from .metrics import InformationMatrices, are, exact_fisher, godambe, kl_divergence
from .neighbors import (
    ConditioningPolicy, ConditioningSets, DistanceSpec, build_conditioning_sets, distance, estimate_kappa,
)
from .ordering import ORDERINGS, make_ordering
from .predict import PredictionResult, make_grid, predict_exact, predict_vecchia
from .trajectories import random_waypoint_layout
from .vecchia import VecchiaFactor, exact_loglik, implied_covariance, vecchia_factor, vecchia_loglik

__version__ = "0.1.0"
