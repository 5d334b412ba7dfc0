"""Measurement instruments, the sequential step maps E_s = M_s ∘ Λ and their moment generators."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linop import (
    CPTP_TOL,
    DimensionError,
    SpectralData,
    spectral_decompose,
    superop_dim,
    superop_from_kraus,
    trace_functional,
    validate_cptp,
    vectorize,
)

POVM_TOL = 1e-10


class InstrumentError(Exception):
    """Raised for malformed measurements or instruments."""
    pass


@dataclass(frozen=True)
class Measurement:
    """Outcome values with the Kraus operators realizing each outcome."""

    outcomes: tuple[tuple[float, tuple[np.ndarray, ...]], ...]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, Sequence[np.ndarray]]]) -> "Measurement":
        return cls(tuple(
            (float(value), tuple(np.asarray(k, dtype=complex) for k in kraus))
            for value, kraus in pairs
        ))

    @property
    def values(self) -> np.ndarray:
        return np.array([value for value, _ in self.outcomes], dtype=float)

    @property
    def dim(self) -> int:
        return self.outcomes[0][1][0].shape[0]

    def povm_elements(self) -> list[np.ndarray]:
        return [sum(k.conj().T @ k for k in kraus) for _, kraus in self.outcomes]

    def completeness_residual(self) -> float:
        total = sum(self.povm_elements())
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def validate(self, tol: float = POVM_TOL) -> None:
        if not self.outcomes:
            raise InstrumentError("measurement has no outcomes")
        d = self.dim
        for value, kraus in self.outcomes:
            if not kraus:
                raise InstrumentError(f"outcome {value:g} has no Kraus operators")
            for k in kraus:
                if k.shape != (d, d):
                    raise DimensionError(f"Kraus operator of outcome {value:g} has shape {k.shape}, expected {(d, d)}")
        values = self.values
        if len(np.unique(values)) != len(values):
            raise InstrumentError("outcome values must be distinct")
        residual = self.completeness_residual()
        if residual > tol:
            raise InstrumentError(f"POVM is incomplete: |sum M^dag M - 1| = {residual:.3e}")


class Instrument:
    """Outcome-indexed subchannels E_s with their average E and its spectral data.

    ``ops[k]`` is the subchannel of outcome ``values[k]``. Powers of the average channel are
    cached on first use.
    """

    def __init__(self, values: np.ndarray, ops: np.ndarray, spectral: SpectralData | None = None):
        self.values = np.asarray(values, dtype=float)
        self.ops = np.asarray(ops, dtype=complex)
        if self.ops.ndim != 3 or self.ops.shape[0] != self.values.size:
            raise InstrumentError("one subchannel per outcome value is required")
        self.average = self.ops.sum(axis=0)
        self.spectral = spectral or spectral_decompose(self.average)
        self._powers = [np.eye(self.ops.shape[1], dtype=complex)]
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return superop_dim(self.average)

    @property
    def n_outcomes(self) -> int:
        return self.values.size

    @property
    def bra(self) -> np.ndarray:
        return trace_functional(self.dim)

    def index(self, value: float) -> int:
        hits = np.flatnonzero(self.values == value)
        if hits.size == 0:
            raise InstrumentError(f"unknown outcome value {value!r}")
        return int(hits[0])

    def power(self, k: int) -> np.ndarray:
        """E^k, with E^0 the identity."""
        if k < 0:
            raise ValueError("negative power")
        with self._lock:
            while len(self._powers) <= k:
                self._powers.append(self.average @ self._powers[-1])
            return self._powers[k]

    def chain(self, weight: np.ndarray, gaps: Sequence[int]) -> np.ndarray:
        """Weighted sum of ordered subchannel products.

        Returns sum over outcome strings of w[s_m, ..., s_1] E_{s_m} E^{g_1} E_{s_{m-1}} ... E^{g_{m-1}} E_{s_1},
        with the latest outcome first in both ``weight`` axes and ``gaps``.
        """
        weight = np.asarray(weight)
        m = len(gaps) + 1
        if weight.shape != (self.n_outcomes,) * m:
            raise InstrumentError(f"weight shape {weight.shape} does not match {m} outcomes")
        acc = self.ops
        for g in reversed(gaps):
            acc = np.einsum("kab,bc,...cd->k...ad", self.ops, self.power(g), acc)
        return np.tensordot(weight, acc, axes=m)

    def rescaled(self, factor: float) -> "Instrument":
        return Instrument(self.values * factor, self.ops, self.spectral)


def build_instrument(meas: Measurement, channel: np.ndarray, tol: float = CPTP_TOL) -> Instrument:
    """E_s = (superop of M_s) · channel for every outcome s.

    ``tol`` bounds both the POVM completeness residual and the channel's CPTP residuals.
    """
    meas.validate(tol)
    channel = np.asarray(channel, dtype=complex)
    if superop_dim(channel) != meas.dim:
        raise DimensionError(f"channel acts on dimension {superop_dim(channel)}, measurement on {meas.dim}")
    report = validate_cptp(channel, tol)
    if not report.passed:
        raise InstrumentError(
            f"channel is not CPTP (trace residual {report.trace_residual:.3e}, "
            f"Choi min eigenvalue {report.choi_min_eigenvalue:.3e})"
        )
    ops = np.stack([superop_from_kraus(kraus) @ channel for _, kraus in meas.outcomes])
    return Instrument(meas.values, ops)


def instrument_from_subchannels(values: Sequence[float], ops: Sequence[np.ndarray], tol: float = CPTP_TOL) -> Instrument:
    """Instrument from explicit completely positive subchannels summing to a CPTP map."""
    ops = np.stack([np.asarray(op, dtype=complex) for op in ops])
    if len(np.unique(values)) != len(values):
        raise InstrumentError("outcome values must be distinct")
    for value, op in zip(values, ops):
        if validate_cptp(op, tol).choi_min_eigenvalue < -tol:
            raise InstrumentError(f"subchannel of outcome {value:g} is not completely positive")
    report = validate_cptp(ops.sum(axis=0), tol)
    if not report.trace_preserving:
        raise InstrumentError(f"subchannels do not sum to a trace-preserving map (residual {report.trace_residual:.3e})")
    return Instrument(np.asarray(values, dtype=float), ops)


def outcome_probability(instr: Instrument, value: float, rho: np.ndarray) -> float:
    """p(s|rho) = (1|E_s|rho)."""
    k = instr.index(value)
    return float(np.real(instr.bra @ instr.ops[k] @ vectorize(rho)))


# ── moment generators ────────────────────────────────────────────────────────

@dataclass
class MomentGenerators:
    """Centered generator superoperators of an instrument, built around its fixed point."""

    instrument: Instrument
    L: int
    mean_s: float
    var_s: float
    mean_c: np.ndarray
    first: np.ndarray
    centered1: np.ndarray
    centered2: np.ndarray
    lag1: np.ndarray
    lag2: np.ndarray
    _pairs: dict = field(default_factory=dict, repr=False)

    @property
    def rho(self) -> np.ndarray:
        return vectorize(self.instrument.spectral.fixed_point)

    @property
    def bra(self) -> np.ndarray:
        return self.instrument.bra

    def expect(self, op: np.ndarray) -> float:
        """(1|op|rho*)."""
        return float(np.real(self.bra @ op @ self.rho))

    def _ds(self) -> np.ndarray:
        return self.instrument.values - self.mean_s

    def _dss(self, lag: int) -> np.ndarray:
        v = self.instrument.values
        return np.outer(v, v) - self.mean_c[lag - 1]

    def _check_lags(self, *lags: int) -> None:
        for lag in lags:
            if not 1 <= lag <= self.L:
                raise ValueError(f"lag {lag} outside 1..{self.L}")

    # components of the pair generator; "a" is the lag of the pair that starts first

    def coincident(self, lag: int) -> np.ndarray:
        """Both pairs on the same two points."""
        self._check_lags(lag)
        return self.instrument.chain(self._dss(lag) ** 2, [lag - 1])

    def chained(self, a: int, b: int) -> np.ndarray:
        """Pair of lag ``b`` starts where the pair of lag ``a`` ends."""
        self._check_lags(a, b)
        w = np.einsum("ji,kj->kji", self._dss(a), self._dss(b))
        return self.instrument.chain(w, [b - 1, a - 1])

    def interleaved(self, a: int, b: int, k: int) -> np.ndarray:
        """Crossing pairs: the lag-``b`` pair starts inside the lag-``a`` pair and ends after it, overlap ``k``."""
        self._check_lags(a, b)
        if not 1 <= k < min(a, b):
            raise ValueError(f"overlap {k} outside 1..{min(a, b) - 1}")
        w = np.einsum("ki,lj->lkji", self._dss(a), self._dss(b))
        return self.instrument.chain(w, [b - k - 1, k - 1, a - k - 1])

    def nested_start(self, a: int, b: int) -> np.ndarray:
        """Inner pair of lag ``b`` < ``a`` sharing the start point of the outer pair."""
        self._check_lags(a, b)
        w = np.einsum("ki,ji->kji", self._dss(a), self._dss(b))
        return self.instrument.chain(w, [a - b - 1, b - 1])

    def nested_end(self, a: int, b: int) -> np.ndarray:
        """Inner pair of lag ``b`` < ``a`` sharing the end point of the outer pair."""
        self._check_lags(a, b)
        w = np.einsum("ki,kj->kji", self._dss(a), self._dss(b))
        return self.instrument.chain(w, [b - 1, a - b - 1])

    def nested_inside(self, a: int, b: int) -> np.ndarray:
        """Inner pair of lag ``b`` strictly inside the outer pair of lag ``a``, summed over positions."""
        self._check_lags(a, b)
        w = np.einsum("li,kj->lkji", self._dss(a), self._dss(b))
        total = np.zeros_like(self.instrument.average)
        for j in range(1, a - b):
            total = total + self.instrument.chain(w, [a - b - j - 1, b - 1, j - 1])
        return total

    def nested(self, a: int, b: int) -> np.ndarray:
        """Every placement of the shorter pair inside the longer one, endpoints included."""
        hi, lo = max(a, b), min(a, b)
        return self.nested_start(hi, lo) + self.nested_end(hi, lo) + self.nested_inside(hi, lo)

    def pair(self, l1: int, l2: int) -> np.ndarray:
        """Overlapping-pair generator for the (l1, l2) lag covariance."""
        key = (min(l1, l2), max(l1, l2))
        if key not in self._pairs:
            a, b = key
            total = self.chained(a, b) + self.chained(b, a)
            for k in range(1, a):
                total = total + self.interleaved(a, b, k) + self.interleaved(b, a, k)
            total = total + (self.coincident(a) if a == b else self.nested(a, b))
            self._pairs[key] = total
        return self._pairs[key]


def build_generators(instr: Instrument, L: int, centering: np.ndarray | None = None) -> MomentGenerators:
    """Build E^(1), the centered generators and the lag generators up to lag ``L``.

    The instrument's average channel must be ergodic; centering uses its fixed point, and an
    explicit ``centering`` state other than that fixed point is refused.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    rho_star = instr.spectral.require_fixed_point()
    if centering is not None and np.max(np.abs(np.asarray(centering) - rho_star)) > 1e-9:
        raise InstrumentError("generators must be centered on the stationary state of the average channel")
    bra, ket = instr.bra, vectorize(rho_star)
    values = instr.values

    first = instr.chain(values, [])
    mean_s = float(np.real(bra @ first @ ket))
    ds = values - mean_s
    centered1 = instr.chain(ds, [])
    centered2 = instr.chain(ds ** 2, [])
    var_s = float(np.real(bra @ centered2 @ ket))

    ss = np.outer(values, values)
    mean_c = np.array([
        float(np.real(bra @ instr.chain(ss, [lag - 1]) @ ket)) for lag in range(1, L + 1)
    ])

    lag1, lag2 = [], []
    for lag in range(1, L + 1):
        dss = ss - mean_c[lag - 1]
        lag1.append(instr.chain(dss, [lag - 1]))
        ends = (ds[:, None] + ds[None, :]) * dss
        op = instr.chain(ends, [lag - 1])
        middle = np.einsum("j,ki->kji", ds, dss)
        for k in range(1, lag):
            op = op + instr.chain(middle, [lag - k - 1, k - 1])
        lag2.append(op)

    return MomentGenerators(
        instrument=instr,
        L=L,
        mean_s=mean_s,
        var_s=var_s,
        mean_c=mean_c,
        first=first,
        centered1=centered1,
        centered2=centered2,
        lag1=np.stack(lag1),
        lag2=np.stack(lag2),
    )
