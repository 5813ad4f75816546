"""Reward-guided Langevin sampling on analytically tractable toy backbones."""

from .backbone import Backbone, GaussianMixturePrior, InterpolationSchedule, ToyDecoder
from .rewards import RewardBank, SemanticPrimitive
from .policy import IntentMixture, PolicyParams
from .sampler import SamplerConfig, SamplingEngine, TaskSpec, run

__version__ = "0.1.0"

__all__ = [
    "Backbone", "GaussianMixturePrior", "InterpolationSchedule", "ToyDecoder",
    "RewardBank", "SemanticPrimitive", "IntentMixture", "PolicyParams",
    "SamplerConfig", "SamplingEngine", "TaskSpec", "run",
]
