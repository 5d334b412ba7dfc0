"""Operator and superoperator algebra for channels on d-level systems.

Vectorization is row stacking, |A) = sum_{n,n'} A_{nn'} |n>|n'>, so ``vec(A) = A.reshape(d*d)``
and a map rho -> K rho K^dag becomes ``np.kron(K, K.conj())``. Every other module relies on
this convention; do not mix it with column stacking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.linalg as la

Classification = Literal["NonErgodic", "ErgodicNotMixing", "Mixing"]

PERIPHERAL_TOL = 1e-9
CPTP_TOL       = 1e-10


class ChannelError(Exception):
    """Raised when a superoperator cannot be used the way it was asked to."""
    pass


class DimensionError(ChannelError):
    pass


class NonErgodicError(ChannelError):
    def __init__(self, message: str = "no unique fixed point: the channel is not ergodic"):
        super().__init__(message)


class NotMixingError(ChannelError):
    def __init__(self, message: str = "asymptotic variance requires mixing"):
        super().__init__(message)


# ── vectorization ────────────────────────────────────────────────────────────

def vectorize(a: np.ndarray) -> np.ndarray:
    """Row-stack a d×d operator into a d² vector."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a.reshape(-1)


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(d, d)


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product (A|B) = Tr{A^dag B}."""
    return complex(np.vdot(vectorize(a), vectorize(b)))


def trace_functional(d: int) -> np.ndarray:
    """The row vector (1| with (1|A) = Tr A."""
    return np.eye(d, dtype=complex).reshape(-1)


def superop_dim(superop: np.ndarray) -> int:
    superop = np.asarray(superop)
    if superop.ndim != 2 or superop.shape[0] != superop.shape[1]:
        raise DimensionError(f"superoperator must be square, got shape {superop.shape}")
    d = int(round(np.sqrt(superop.shape[0])))
    if d * d != superop.shape[0]:
        raise DimensionError(f"superoperator size {superop.shape[0]} is not a square number")
    return d


# ── construction ─────────────────────────────────────────────────────────────

def superop_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Superoperator of rho -> sum_k K_k rho K_k^dag.

    :param kraus: Kraus operators, all d×d.
    :return: d²×d² matrix sum_k K_k ⊗ conj(K_k).
    """
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    if not ops:
        raise DimensionError("at least one Kraus operator is required")
    d = ops[0].shape[0]
    for k in ops:
        if k.shape != (d, d):
            raise DimensionError(f"Kraus operator of shape {k.shape} does not match dimension {d}")
    return sum(np.kron(k, k.conj()) for k in ops)


def superop_from_map(fn: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """Matrix of a linear map on d×d operators, built column by column from matrix units."""
    superop = np.zeros((d * d, d * d), dtype=complex)
    for m in range(d):
        for n in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[m, n] = 1.0
            superop[:, m * d + n] = vectorize(fn(unit))
    return superop


def apply(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return devectorize(np.asarray(superop) @ vectorize(rho))


def choi_matrix(superop: np.ndarray) -> np.ndarray:
    """Choi matrix J = sum_{ab} |a><b| ⊗ E(|a><b|), hermitized."""
    d = superop_dim(superop)
    choi = np.asarray(superop).reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
    return (choi + choi.conj().T) / 2


def kraus_from_superop(superop: np.ndarray, tol: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators from the eigen-decomposition of the Choi matrix.

    Eigenvalues below ``tol`` (relative to the largest) are dropped.
    """
    d = superop_dim(superop)
    evals, evecs = np.linalg.eigh(choi_matrix(superop))
    cutoff = tol * max(float(np.max(np.abs(evals))), 1.0)
    kraus = []
    for lam, vec in zip(evals[::-1], evecs.T[::-1]):
        if lam <= cutoff:
            continue
        kraus.append(np.sqrt(lam) * vec.reshape(d, d).T)
    return kraus


def lindblad_generator(hamiltonian: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Generator of d rho/dt = -i[H, rho] + sum_k r_k (J rho J^dag - {J^dag J, rho}/2).

    ``jumps`` holds (rate, J) pairs. Row stacking gives vec(A X B) = (A ⊗ B^T) vec(X).
    """
    h = np.asarray(hamiltonian, dtype=complex)
    d = h.shape[0]
    eye = np.eye(d, dtype=complex)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, jump in jumps:
        j = np.asarray(jump, dtype=complex)
        jdj = j.conj().T @ j
        gen += rate * (np.kron(j, j.conj()) - 0.5 * np.kron(jdj, eye) - 0.5 * np.kron(eye, jdj.T))
    return gen


def channel_from_generator(generator: np.ndarray, t: float) -> np.ndarray:
    return la.expm(np.asarray(generator) * t)


# ── validation ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CPTPReport:
    trace_residual: float
    choi_min_eigenvalue: float
    tol: float

    @property
    def trace_preserving(self) -> bool:
        return self.trace_residual <= self.tol

    @property
    def completely_positive(self) -> bool:
        return self.choi_min_eigenvalue >= -self.tol

    @property
    def passed(self) -> bool:
        return self.trace_preserving and self.completely_positive


def validate_cptp(superop: np.ndarray, tol: float = CPTP_TOL) -> CPTPReport:
    """Check (1|E = (1| and positivity of the Choi matrix, each within ``tol``."""
    d = superop_dim(superop)
    bra = trace_functional(d)
    residual = float(np.max(np.abs(bra @ np.asarray(superop) - bra)))
    min_eig = float(np.min(np.linalg.eigvalsh(choi_matrix(superop))))
    return CPTPReport(trace_residual=residual, choi_min_eigenvalue=min_eig, tol=tol)


def validate_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ChannelError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ChannelError("density matrix is not hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ChannelError(f"density matrix has trace {np.trace(rho).real:.6g}, expected 1")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) < -tol:
        raise ChannelError("density matrix is not positive semidefinite")


# ── spectral analysis ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SpectralData:
    """Spectrum, fixed point and reduced resolvent of a channel E = P* + E'."""

    superop: np.ndarray
    eigenvalues: np.ndarray
    classification: Classification
    spectral_gap: float
    unit_multiplicity: int
    fixed_point: np.ndarray | None = None
    projector: np.ndarray | None = None
    complement: np.ndarray | None = None
    resolvent: np.ndarray | None = None
    tol: float = PERIPHERAL_TOL

    @property
    def dim(self) -> int:
        return superop_dim(self.superop)

    @property
    def ergodic(self) -> bool:
        return self.classification != "NonErgodic"

    @property
    def mixing(self) -> bool:
        return self.classification == "Mixing"

    @property
    def reduced(self) -> np.ndarray:
        """E' = E - P*."""
        self.require_fixed_point()
        return self.superop - self.projector

    def require_fixed_point(self) -> np.ndarray:
        if self.fixed_point is None:
            raise NonErgodicError()
        return self.fixed_point

    def require_mixing(self) -> None:
        self.require_fixed_point()
        if not self.mixing:
            raise NotMixingError()


def _fixed_point(superop: np.ndarray, d: int) -> np.ndarray:
    # right singular vector of (E - 1) with the smallest singular value
    _, _, vh = np.linalg.svd(superop - np.eye(d * d))
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def spectral_decompose(superop: np.ndarray, tol: float = PERIPHERAL_TOL) -> SpectralData:
    """Classify a CPTP map and, when ergodic, build P*, Q* and R = (1 - E + P*)^-1 Q*.

    :param superop: d²×d² channel matrix.
    :param tol: peripheral tolerance; |lambda - 1| < tol counts as a unit eigenvalue and
        |lambda| >= 1 - tol as peripheral.
    """
    superop = np.asarray(superop, dtype=complex)
    d = superop_dim(superop)
    evals = np.linalg.eigvals(superop)
    evals = evals[np.argsort(-np.abs(evals), kind="stable")]

    unit = np.abs(evals - 1) < tol
    n_unit = int(np.count_nonzero(unit))
    if n_unit != 1:
        return SpectralData(
            superop=superop, eigenvalues=evals, classification="NonErgodic",
            spectral_gap=0.0, unit_multiplicity=n_unit, tol=tol,
        )

    others = np.abs(np.delete(evals, int(np.argmin(np.abs(evals - 1)))))
    r = float(np.max(others)) if others.size else 0.0
    classification: Classification = "ErgodicNotMixing" if r >= 1 - tol else "Mixing"

    rho = _fixed_point(superop, d)
    eye = np.eye(d * d, dtype=complex)
    projector = np.outer(vectorize(rho), trace_functional(d))
    complement = eye - projector
    resolvent = np.linalg.solve(eye - superop + projector, complement)

    return SpectralData(
        superop=superop,
        eigenvalues=evals,
        classification=classification,
        spectral_gap=1.0 - r,
        unit_multiplicity=1,
        fixed_point=rho,
        projector=projector,
        complement=complement,
        resolvent=resolvent,
        tol=tol,
    )


def cesaro_mean(superop: np.ndarray, n: int, spectral: SpectralData | None = None) -> np.ndarray:
    """(1/N) sum_{k=0}^{N-1} E^k by repeated multiplication."""
    if n < 1:
        raise ValueError("N must be at least 1")
    spectral = spectral or spectral_decompose(superop)
    spectral.require_fixed_point()
    superop = np.asarray(superop, dtype=complex)
    power = np.eye(superop.shape[0], dtype=complex)
    total = np.zeros_like(power)
    for _ in range(n):
        total += power
        power = superop @ power
    return total / n


def cesaro_closed_form(spectral: SpectralData, n: int) -> np.ndarray:
    """P* + (1/N)(1 - E'^N) R."""
    spectral.require_fixed_point()
    eye = np.eye(spectral.superop.shape[0], dtype=complex)
    tail = eye - np.linalg.matrix_power(spectral.reduced, n)
    return spectral.projector + tail @ spectral.resolvent / n
