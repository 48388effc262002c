"""Neural occupancy and reflectance fields for FMCW radar, learned in frequency space.

A synthetic FMCW simulator provides ground truth; a log-odds grid map and a
nearest-frame lookup are the baselines.
"""
from .errors import RadarFieldsError
from .fields import Adam, FieldConfig, FieldModel
from .encodings import HashGridConfig
from .radar import RadarConfig, RadarFrame
from .scene import SyntheticScene, Trajectory, simulate_sequence
from .training import LossWeights, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "FieldConfig", "FieldModel", "HashGridConfig", "LossWeights", "RadarConfig",
    "RadarFieldsError", "RadarFrame", "SyntheticScene", "TrainConfig", "Trajectory",
    "simulate_sequence", "train", "__version__",
]
