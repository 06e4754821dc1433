"""Amplitude damping and weak-measurement protection of non-bilocal correlations."""

from .bilocality import BilocalityResult, BsmScenario, MeasurementSettings, bilocality_value
from .channels import KrausChannel, WeightedState, adc, reverse_weak_filter, weak_filter
from .errors import BilocalError
from .protocols import NoiseCase, ProtectionCase, ScenarioSpec, run_pipeline
from .states import BellKind, BlochVector, bell_state

__version__ = "0.1.0"

__all__ = [
    "BellKind",
    "BilocalError",
    "BilocalityResult",
    "BlochVector",
    "BsmScenario",
    "KrausChannel",
    "MeasurementSettings",
    "NoiseCase",
    "ProtectionCase",
    "ScenarioSpec",
    "WeightedState",
    "adc",
    "bell_state",
    "bilocality_value",
    "reverse_weak_filter",
    "run_pipeline",
    "weak_filter",
]
