"""Deterministic simulator and protocol library for differentially private
secure aggregation in federated logistic regression."""

from .experiment import RunConfig, RunOutcome, run_single, run_sweep

__version__ = "0.1.0"

__all__ = ["RunConfig", "RunOutcome", "run_single", "run_sweep", "__version__"]
