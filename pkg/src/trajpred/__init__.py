"""Maneuver-conditioned multi-modal trajectory prediction for freeway traffic."""

from .maneuvers import Lateral, Longitudinal, ManeuverLabel
from .model import (GaussianStep, ManeuverDistribution, Model, ModelConfig,
                    Normalizer, Variant, predict_multimodal, predict_unimodal)
from .trackstore import Sample, TrackStore, VehicleTrack, parse_trajectories

__version__ = "0.1.0"

__all__ = [
    "Lateral", "Longitudinal", "ManeuverLabel",
    "GaussianStep", "ManeuverDistribution", "Model", "ModelConfig",
    "Normalizer", "Variant",
    "predict_multimodal", "predict_unimodal",
    "Sample", "TrackStore", "VehicleTrack", "parse_trajectories",
    "__version__",
]
