from .base import CachingModel, ModelError, ParametrizedModel
from .external import ExternalFileModel
from .thermometer import ThermometerModel


AVAILABLE_MODELS: dict[str, tuple[str, type[ParametrizedModel]]] = {
    "thermometer":             ("Qubit thermometer (gamma_beta)", ThermometerModel),
    "external-file-per-value": ("One model file per grid value", ExternalFileModel),
}


def get_model(rule: str, options: dict) -> ParametrizedModel:
    """Factory that returns a CachingModel wrapping the provider registered under ``rule``."""
    entry = AVAILABLE_MODELS.get(rule.lower())
    if entry is None:
        known = ", ".join(AVAILABLE_MODELS)
        raise ModelError(f"unknown parametrization rule '{rule}' (known: {known})")
    _, cls = entry
    try:
        return CachingModel(cls.from_options(options))
    except TypeError as e:
        raise ModelError(f"bad options for rule '{rule}': {e}") from e
