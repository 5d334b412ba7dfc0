from typing import Sequence

import numpy as np

from core.asymptotics import FisherReport, fisher_on_grid
from core.instrument import Instrument

from .base import ModelError, ParametrizedModel


class ExternalFileModel(ParametrizedModel):
    """A model known only at a fixed set of parameter values, one instrument per value."""

    name = "external-file-per-value"

    def __init__(self, grid: Sequence[float], instruments: Sequence[Instrument], parameter: str = "g"):
        self.grid = np.asarray(grid, dtype=float)
        self.instruments = list(instruments)
        self.parameter = parameter
        if self.grid.size != len(self.instruments):
            raise ModelError(f"{self.grid.size} grid values but {len(self.instruments)} instruments")
        if self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ModelError("grid must hold at least two strictly increasing values")

    def _index(self, value: float) -> int:
        hits = np.flatnonzero(np.isclose(self.grid, value, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise ModelError(f"{self.parameter}={value} is not on the model's grid")
        return int(hits[0])

    def build(self, value: float) -> Instrument:
        return self.instruments[self._index(value)]

    def fisher_over(self, grid: Sequence[float], L: int, N: int = 1, step: float | None = None) -> list[FisherReport]:
        # derivatives can only come from neighbouring grid values
        reports = fisher_on_grid(self.instruments, self.grid, L, N=N)
        return [reports[self._index(g)] for g in grid]
