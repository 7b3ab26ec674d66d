"""Privacy-preserving state estimation that keeps an unknown exogenous input
hard to infer from published estimates.

The filter publishes an unbiased minimum-variance estimate plus Gaussian
noise whose covariance is designed, step by step, so that a Cramer-Rao type
bound on any unbiased estimate of the latest input stays above a threshold.
"""
from .crlb import crlb_oracle, fisher_oracle, pcrlb, pcrlb_A, build_tilde_L
from .design import NoiseDesign, design_noise
from .errors import (
    AssumptionError, CrlbpfError, DimensionError, IdentifiabilityError, IllConditionedError,
    OracleHorizonError, WindowNotReadyError,
)
from .model import InputSignal, SystemModel, Trajectory, load_scenario, simulate
from .pipeline import PrivacyConfig, StepOutput, pipeline_step, run_pipeline
from .threat import dp_delta, infer_input, sensitivity

__version__ = "0.1.0"

__all__ = [
    "SystemModel", "InputSignal", "Trajectory", "load_scenario", "simulate",
    "PrivacyConfig", "StepOutput", "pipeline_step", "run_pipeline",
    "build_tilde_L", "pcrlb_A", "pcrlb", "fisher_oracle", "crlb_oracle",
    "NoiseDesign", "design_noise", "infer_input", "sensitivity", "dp_delta",
    "CrlbpfError", "AssumptionError", "IllConditionedError", "IdentifiabilityError",
    "WindowNotReadyError", "OracleHorizonError", "DimensionError",
]
