import threading
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from core.asymptotics import FisherReport, fisher
from core.instrument import Instrument


class ModelError(Exception):
    """Raised when a model cannot be built for the requested parameter value."""
    pass


class ParametrizedModel(ABC):
    """Abstract base class for every g -> Instrument provider."""

    name: str = "unknown"
    parameter: str = "g"

    @classmethod
    def from_options(cls, options: dict) -> "ParametrizedModel":
        return cls(**options)

    @abstractmethod
    def build(self, value: float) -> Instrument:
        """Return the instrument at parameter value ``value``."""
        pass

    def __call__(self, value: float) -> Instrument:
        return self.build(value)

    def mean_derivatives(self, value: float, L: int) -> np.ndarray | None:
        """Exact derivatives of (<S>*, <C_1>*..<C_L>*) at ``value``; None when unknown."""
        return None

    def fisher_over(self, grid: Sequence[float], L: int, N: int = 1, step: float | None = None) -> list[FisherReport]:
        """Fisher values at every grid point, by central differences around each one unless the
        model knows its mean derivatives."""
        return [
            fisher(self, float(g), L, N=N, step=step, derivatives=self.mean_derivatives(float(g), L))
            for g in grid
        ]


class CachingModel(ParametrizedModel):
    """Transparent memo wrapper; each parameter value is built once."""

    def __init__(self, model: ParametrizedModel):
        self.model = model
        self.name = model.name
        self.parameter = model.parameter
        self._cache: dict[float, Instrument] = {}
        self._lock = threading.Lock()

    def build(self, value: float) -> Instrument:
        key = float(value)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        instr = self.model.build(key)
        with self._lock:
            return self._cache.setdefault(key, instr)

    def mean_derivatives(self, value: float, L: int) -> np.ndarray | None:
        return self.model.mean_derivatives(value, L)

    def fisher_over(self, grid: Sequence[float], L: int, N: int = 1, step: float | None = None) -> list[FisherReport]:
        if type(self.model).fisher_over is ParametrizedModel.fisher_over:
            return super().fisher_over(grid, L, N, step)
        return self.model.fisher_over(grid, L, N, step)
