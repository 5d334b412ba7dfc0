"""Monte Carlo measurement records, their statistics, the exact enumeration oracle and
Gaussianity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.stats as st
from rich.console import Console

from .asymptotics import AsymptoticReport
from .config import ENUMERATION_CAP
from .instrument import Instrument
from .linop import devectorize, validate_density_matrix, vectorize

console = Console(stderr=True)

RNG_ALGORITHM        = "PCG64"
MIN_DIAGNOSTIC_BATCH = 1000
CLAMP_TOL            = 1e-12
CHEBYSHEV_K          = (2, 3, 5)


class TrajectoryError(Exception):
    """Raised when a record cannot be sampled or summarized."""
    pass


class EnumerationCapError(TrajectoryError):
    pass


class DiagnosticsError(TrajectoryError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: int
    outcomes: np.ndarray
    final_state: np.ndarray
    rng: str = RNG_ALGORITHM

    @property
    def N(self) -> int:
        return int(self.outcomes.size)


@dataclass(frozen=True)
class StatRecord:
    N: int
    L: int
    S: float
    C: np.ndarray
    seed: int | None = None

    @property
    def vector(self) -> np.ndarray:
        """(S, C_1..C_L)."""
        return np.concatenate([[self.S], self.C])


@dataclass(frozen=True)
class ExactDistribution:
    """Every outcome string of length N with its probability (1|E_{s_N}...E_{s_1}|rho0).

    Rows follow ``itertools.product`` order over the instrument's outcome values.
    """

    N: int
    L: int
    values: np.ndarray
    indices: np.ndarray
    probabilities: np.ndarray
    S: np.ndarray
    C: np.ndarray

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    @property
    def mean_s(self) -> float:
        return float(self.probabilities @ self.S)

    @property
    def var_s(self) -> float:
        return self.central_moment_s(2)

    @property
    def mean_c(self) -> np.ndarray:
        return self.probabilities @ self.C

    def central_moment_s(self, order: int, about: float | None = None) -> float:
        centre = self.mean_s if about is None else about
        return float(self.probabilities @ (self.S - centre) ** order)

    def covariance(self) -> np.ndarray:
        """Exact covariance matrix of (S, C_1..C_L)."""
        x = np.column_stack([self.S, self.C])
        dx = x - self.probabilities @ x
        return (dx * self.probabilities[:, None]).T @ dx

    def sequences(self) -> np.ndarray:
        """Outcome values of every enumerated string, shape (K^N, N)."""
        return self.values[self.indices]


@dataclass(frozen=True)
class MomentScaling:
    order: int
    Ns: np.ndarray
    moments: np.ndarray
    slope: float

    @property
    def expected_slope(self) -> float:
        return -2.0 if self.order % 2 else -self.order / 2


@dataclass(frozen=True)
class GaussianityReport:
    batch: int
    N: int
    L: int
    mean_offset: float
    mean_offset_se: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    excess_kurtosis_se: float
    mahalanobis_mean: float
    mahalanobis_se: float
    chi2_exceedance: float
    chebyshev: dict[int, tuple[float, float]] = field(default_factory=dict)

    @property
    def dof(self) -> int:
        return self.L + 1

    def within_bands(self, k: float = 5.0) -> bool:
        """True when the mean offset, skewness, kurtosis and Mahalanobis mean are within ``k`` errors."""
        return (
            abs(self.mean_offset) <= k * self.mean_offset_se
            and abs(self.skewness) <= k * self.skewness_se
            and abs(self.excess_kurtosis) <= k * self.excess_kurtosis_se
            and abs(self.mahalanobis_mean - self.dof) <= k * self.mahalanobis_se
        )

    def chebyshev_respected(self) -> bool:
        return all(
            freq <= bound + 3 * np.sqrt(bound * (1 - bound) / self.batch)
            for freq, bound in self.chebyshev.values()
        )


# ── sampling ─────────────────────────────────────────────────────────────────

def spawn_seeds(master_seed: int, count: int) -> list[int]:
    """Independent 64-bit child seeds, one per trajectory."""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _step_probabilities(instr: Instrument, candidates: np.ndarray) -> tuple[np.ndarray, int, float]:
    """Outcome probabilities per record plus the number of clamped entries and the lowest one."""
    probs = np.real(candidates @ instr.bra)
    low = float(probs.min(initial=0.0))
    if low < -CLAMP_TOL:
        raise TrajectoryError(f"negative outcome probability {low:.3g}: instrument is not CP")
    clamped = int(np.count_nonzero(probs < 0))
    return np.clip(probs, 0.0, None), clamped, low


def sample_batch(
    instr: Instrument,
    rho0: np.ndarray,
    N: int,
    seeds: Sequence[int],
) -> list[TrajectoryRecord]:
    """Sample one record per seed, all trajectories advancing in lockstep.

    Each seed drives its own PCG64 generator, which draws the N uniforms of that record, so a
    record depends on its seed only and equals ``sample(instr, rho0, N, seed)``.
    """
    if N < 1:
        raise TrajectoryError("N must be at least 1")
    validate_density_matrix(rho0)
    seeds = [int(s) for s in seeds]
    uniforms = np.stack([np.random.default_rng(s).random(N) for s in seeds]) if seeds else np.empty((0, N))

    batch = len(seeds)
    rows = np.arange(batch)
    states = np.tile(vectorize(rho0), (batch, 1))
    picks = np.empty((batch, N), dtype=int)
    last = instr.n_outcomes - 1
    clamped, lowest = 0, 0.0
    for i in range(N):
        candidates = np.einsum("kab,nb->nka", instr.ops, states)
        probs, n_clamped, low = _step_probabilities(instr, candidates)
        clamped, lowest = clamped + n_clamped, min(lowest, low)
        total = probs.sum(axis=1)
        if np.any(total <= 0):
            raise TrajectoryError("all outcome probabilities vanish: invalid instrument state")
        cum = np.cumsum(probs, axis=1)
        idx = np.minimum(np.count_nonzero(uniforms[:, i, None] * total[:, None] >= cum, axis=1), last)
        # an outcome of probability zero is never drawn
        idx = np.where(probs[rows, idx] > 0, idx, np.argmax(probs > 0, axis=1))
        picks[:, i] = idx
        states = candidates[rows, idx] / probs[rows, idx][:, None]

    if clamped:
        console.print(
            f"[#f4b73d]⚠ clamped {clamped} slightly negative outcome probabilities to 0 "
            f"(lowest {lowest:.2e})[/#f4b73d]"
        )

    return [
        TrajectoryRecord(seed=seed, outcomes=instr.values[picks[n]], final_state=devectorize(states[n]))
        for n, seed in enumerate(seeds)
    ]


def sample(instr: Instrument, rho0: np.ndarray, N: int, seed: int) -> TrajectoryRecord:
    """One measurement record of length N with conditional state updates."""
    return sample_batch(instr, rho0, N, [seed])[0]


# ── statistics ───────────────────────────────────────────────────────────────

def lag_statistics(outcomes: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    """S and C_1..C_L for each row of an (n_records, N) outcome array."""
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
    N = outcomes.shape[1]
    if L < 0 or L >= N:
        raise TrajectoryError(f"L={L} needs N >= L+1, got N={N}")
    s = outcomes.mean(axis=1)
    c = np.empty((outcomes.shape[0], L))
    for lag in range(1, L + 1):
        c[:, lag - 1] = np.mean(outcomes[:, :-lag] * outcomes[:, lag:], axis=1)
    return s, c


def statistics(rec: TrajectoryRecord, L: int) -> StatRecord:
    s, c = lag_statistics(rec.outcomes, L)
    return StatRecord(N=rec.N, L=L, S=float(s[0]), C=c[0], seed=rec.seed)


def stack_statistics(stats: Sequence[StatRecord]) -> np.ndarray:
    """(batch, L+1) matrix of (S, C_1..C_L) rows."""
    if not stats:
        raise DiagnosticsError("empty batch")
    if len({(r.N, r.L) for r in stats}) != 1:
        raise DiagnosticsError("all records in a batch must share N and L")
    return np.stack([r.vector for r in stats])


# ── exact enumeration ────────────────────────────────────────────────────────

def enumerate_exact(
    instr: Instrument,
    rho0: np.ndarray,
    N: int,
    L: int = 0,
    cap: int = ENUMERATION_CAP,
) -> ExactDistribution:
    """Exact distribution of all outcome strings of length N.

    Unnormalized conditional states are expanded one layer per step, so every prefix product
    E_{s_i}...E_{s_1}|rho0) is computed once and shared by all its continuations.
    """
    if N < 1:
        raise TrajectoryError("N must be at least 1")
    K = instr.n_outcomes
    if K ** N > cap:
        raise EnumerationCapError(f"{K}^{N} sequences exceed the enumeration cap {cap}")
    validate_density_matrix(rho0)

    states = vectorize(rho0)[None, :]
    for _ in range(N):
        states = np.einsum("kab,nb->nka", instr.ops, states).reshape(-1, states.shape[1])
    probabilities = np.real(states @ instr.bra)

    indices = np.stack(np.unravel_index(np.arange(K ** N), (K,) * N), axis=1)
    s, c = lag_statistics(instr.values[indices], L)
    return ExactDistribution(
        N=N, L=L, values=instr.values, indices=indices, probabilities=probabilities, S=s, C=c,
    )


def central_moment_scaling(
    instr: Instrument,
    rho0: np.ndarray,
    Ns: Sequence[int],
    order: int,
    cap: int = ENUMERATION_CAP,
) -> MomentScaling:
    """Exact central moments of S over several N and their log-log slope in N."""
    if order < 2:
        raise ValueError("central moments of order < 2 are trivial")
    Ns = np.asarray(Ns, dtype=int)
    if Ns.size < 2:
        raise ValueError("need at least two N values to fit a slope")
    moments = np.array([enumerate_exact(instr, rho0, int(n), 0, cap).central_moment_s(order) for n in Ns])
    slope, _ = np.polyfit(np.log(Ns), np.log(np.abs(moments)), 1)
    return MomentScaling(order=order, Ns=Ns, moments=moments, slope=float(slope))


# ── diagnostics ──────────────────────────────────────────────────────────────

def gaussianity_diagnostics(stats: Sequence[StatRecord], report: AsymptoticReport) -> GaussianityReport:
    """Compare a batch of records with the Gaussian limit predicted by ``report``.

    The mean of sqrt(N)(S - <S>*) has standard error sqrt(sigma2 / n). Skewness and excess
    kurtosis of the same quantity carry the standard errors sqrt(6/n) and
    sqrt(24/n); the squared Mahalanobis distance of sqrt(N)(X - <X>*) has mean L+1.
    """
    x = stack_statistics(stats)
    batch, N, L = x.shape[0], stats[0].N, stats[0].L
    if batch < MIN_DIAGNOSTIC_BATCH:
        raise DiagnosticsError(f"batch of {batch} records is below the minimum {MIN_DIAGNOSTIC_BATCH}")
    if L > report.L:
        raise DiagnosticsError(f"records carry L={L} lags but the covariance report only {report.L}")

    sigma = report.sigma[:L + 1, :L + 1]
    try:
        factor = la.cho_factor(sigma)
    except la.LinAlgError as e:
        raise DiagnosticsError("degenerate covariance matrix") from e

    dev = np.sqrt(N) * (x - report.means[:L + 1])
    z = dev[:, 0] / np.sqrt(report.sigma2)
    d2 = np.sum(dev * la.cho_solve(factor, dev.T).T, axis=1)
    dof = L + 1

    chebyshev = {k: (float(np.mean(np.abs(z) >= k)), 1.0 / k ** 2) for k in CHEBYSHEV_K}
    return GaussianityReport(
        batch=batch,
        N=N,
        L=L,
        mean_offset=float(dev[:, 0].mean()),
        mean_offset_se=float(np.sqrt(report.sigma2 / batch)),
        skewness=float(st.skew(z)),
        skewness_se=float(np.sqrt(6.0 / batch)),
        excess_kurtosis=float(st.kurtosis(z, fisher=True)),
        excess_kurtosis_se=float(np.sqrt(24.0 / batch)),
        mahalanobis_mean=float(d2.mean()),
        mahalanobis_se=float(np.sqrt(2.0 * dof / batch)),
        chi2_exceedance=float(np.mean(d2 > st.chi2.ppf(0.95, dof))),
        chebyshev=chebyshev,
    )
