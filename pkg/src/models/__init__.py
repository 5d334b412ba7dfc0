"""Parametrized model providers.

Every provider maps a parameter value to an Instrument; the registry picks one by rule name.
"""
from .base import CachingModel, ModelError, ParametrizedModel
from .external import ExternalFileModel
from .thermometer import ThermometerModel, ThermometerParams
from .registry import AVAILABLE_MODELS, get_model

__all__ = [
    "CachingModel",
    "ModelError",
    "ParametrizedModel",
    "ExternalFileModel",
    "ThermometerModel",
    "ThermometerParams",
    "AVAILABLE_MODELS",
    "get_model",
]
