"""Fuzzy-logic RSSI indoor localization with PSO-tuned membership functions."""
from .baselines import minmax_locate, ml_locate, trilaterate
from .channel import PathLossModel, RssiSample, CalibrationPoint, estimate_distance, fit_path_loss, predict_rssi
from .errors import ConfigurationError, DataError, FuzzyLocError
from .evaluation import ErrorStats, EmpiricalCdf, beacon_sweep, compute_stats, empirical_cdf, quantile
from .fuzzy import FlcSpec, FuzzyVariable, RuleTable, TriangularMf, default_flc1, default_flc2, flc_infer, validate_flc
from .localization import Anchor, Fix, GridMap, locate, offline_calibrate
from .pso import PsoConfig, mean_output, run_pso
from .simulator import NoiseModel, Scenario, generate_scenario, run_experiment, sample_rssi

__version__ = "0.1.0"
