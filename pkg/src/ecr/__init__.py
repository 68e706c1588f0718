"""Certified randomness from phase estimation on the antipodal circle."""
from __future__ import annotations

from .channel import Channel, GeneralProjective, MeasurementModel, Outcome
from .config import PRESETS, ScenarioConfig, load_config, preset_config
from .metric import AntipodalMetric, ContinuousUniform, ExplicitPrior, GridPrior, emse
from .prover import DeterministicSequence, EPiDigits, ExplicitList, GeneralEstimator, MeasureAndMap
from .session import run_scenario
from .verifier import CertificationReport, IIDContinuousUniform, IIDGrid, RoundRobinGrid, certify, run_session

__all__ = [
    "AntipodalMetric",
    "CertificationReport",
    "Channel",
    "ContinuousUniform",
    "DeterministicSequence",
    "EPiDigits",
    "ExplicitList",
    "ExplicitPrior",
    "GeneralEstimator",
    "GeneralProjective",
    "GridPrior",
    "IIDContinuousUniform",
    "IIDGrid",
    "MeasureAndMap",
    "MeasurementModel",
    "Outcome",
    "PRESETS",
    "RoundRobinGrid",
    "ScenarioConfig",
    "certify",
    "emse",
    "load_config",
    "preset_config",
    "run_scenario",
    "run_session",
]

__version__ = "0.1.0"
