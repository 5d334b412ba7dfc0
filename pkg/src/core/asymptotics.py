"""Stationary means, the asymptotic covariance matrix of (S, C_1..C_L), exact finite-N moments
and Fisher information for estimating a parameter from those statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
from rich.console import Console

from .config import FISHER_COND, FISHER_STEP_REL
from .instrument import Instrument, MomentGenerators, build_generators
from .linop import Classification, vectorize

console = Console(stderr=True)

PSD_RTOL     = 1e-10
COND_LIMIT   = FISHER_COND
STEP_REL     = FISHER_STEP_REL


class InitialStateError(Exception):
    """Raised when a stationary-only formula is asked for a non-stationary initial state."""
    pass


@dataclass(frozen=True)
class StationaryStats:
    mean_s: float
    var_s: float
    mean_c: np.ndarray


@dataclass(frozen=True)
class AsymptoticReport:
    mean_s: float
    mean_c: np.ndarray
    sigma2: float
    sigma: np.ndarray
    classification: Classification
    min_eigenvalue: float

    @property
    def L(self) -> int:
        return self.sigma.shape[0] - 1

    @property
    def means(self) -> np.ndarray:
        """Stationary means of (S, C_1..C_L)."""
        return np.concatenate([[self.mean_s], self.mean_c])

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -PSD_RTOL * max(float(np.trace(self.sigma)), 1e-300)


@dataclass(frozen=True)
class FiniteNReport:
    N: int
    L: int
    mean_s: float
    second_moment_s: float
    var_s: float
    mean_c: np.ndarray
    stationary_start: bool
    cov_sc: np.ndarray | None = None
    cov_cc: np.ndarray | None = None

    @property
    def initial_state(self) -> str:
        return "stationary" if self.stationary_start else "generic"

    def covariance(self) -> np.ndarray:
        """Covariance matrix of (S, C_1..C_L) at this N."""
        if self.cov_sc is None or self.cov_cc is None:
            raise InitialStateError("lag covariances are only available for a stationary start")
        out = np.empty((self.L + 1, self.L + 1))
        out[0, 0] = self.var_s
        out[0, 1:] = out[1:, 0] = self.cov_sc
        out[1:, 1:] = self.cov_cc
        return out


@dataclass(frozen=True)
class FisherReport:
    g: float
    N: int
    L: int
    step: float
    derivatives: np.ndarray
    sigma: np.ndarray
    values: np.ndarray
    singular: bool = False
    include_sigma_derivative: bool = False
    method: str = "central-difference"

    @property
    def F0(self) -> float:
        return float(self.values[0])

    @property
    def per_measurement(self) -> np.ndarray:
        return self.values / self.N


# ── stationary quantities ────────────────────────────────────────────────────

def stationary_stats(gen: MomentGenerators) -> StationaryStats:
    """<S>*, (Delta s)^2* and <C_l>* for l = 1..L."""
    return StationaryStats(mean_s=gen.mean_s, var_s=gen.var_s, mean_c=gen.mean_c.copy())


def sigma2(gen: MomentGenerators) -> float:
    """sigma^2 = (1|E2~|rho*) + 2 (1|E1~ R E1~|rho*); requires a mixing channel."""
    spectral = gen.instrument.spectral
    spectral.require_mixing()
    e1 = gen.centered1
    return gen.expect(gen.centered2 + 2 * e1 @ spectral.resolvent @ e1)


def covariance_matrix(gen: MomentGenerators, L: int | None = None) -> AsymptoticReport:
    """Asymptotic covariance matrix Sigma of sqrt(N)(S, C_1..C_L); index 0 is S."""
    spectral = gen.instrument.spectral
    spectral.require_mixing()
    L = gen.L if L is None else L
    if not 0 <= L <= gen.L:
        raise ValueError(f"L={L} outside 0..{gen.L}")

    R = spectral.resolvent
    e1 = gen.centered1
    sigma = np.zeros((L + 1, L + 1))
    sigma[0, 0] = gen.expect(gen.centered2 + 2 * e1 @ R @ e1)
    for l1 in range(1, L + 1):
        x = gen.lag1[l1 - 1]
        sigma[0, l1] = gen.expect(gen.lag2[l1 - 1] + e1 @ R @ x + x @ R @ e1)
        for l2 in range(l1, L + 1):
            y = gen.lag1[l2 - 1]
            sigma[l1, l2] = gen.expect(gen.pair(l1, l2) + y @ R @ x + x @ R @ y)
    sigma = np.triu(sigma) + np.triu(sigma, 1).T

    return AsymptoticReport(
        mean_s=gen.mean_s,
        mean_c=gen.mean_c[:L].copy(),
        sigma2=float(sigma[0, 0]),
        sigma=sigma,
        classification=spectral.classification,
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(sigma))),
    )


# ── exact finite-N moments ───────────────────────────────────────────────────

def finite_N_moments(
    gen: MomentGenerators,
    rho0: np.ndarray | None,
    N: int,
    L: int | None = None,
    covariances: bool | None = None,
) -> FiniteNReport:
    """Exact moments of S and C_l after N measurements starting from ``rho0``.

    Means and the variance of S hold for any initial state; the covariances involving C_l are
    evaluated only for a stationary start (``rho0`` equal to rho* or None).
    """
    L = gen.L if L is None else L
    if not 0 <= L <= gen.L:
        raise ValueError(f"L={L} outside 0..{gen.L}")
    if N < L + 1:
        raise ValueError(f"N={N} is too small for L={L}; need N >= L+1")

    spectral = gen.instrument.spectral
    rho_star = spectral.require_fixed_point()
    rho0 = rho_star if rho0 is None else np.asarray(rho0, dtype=complex)
    stationary = bool(np.max(np.abs(rho0 - rho_star)) < 1e-10)
    if covariances is None:
        covariances = stationary
    if covariances and not stationary:
        raise InitialStateError("lag covariances require the stationary initial state rho*")

    bra, ket, r0 = gen.bra, gen.rho, vectorize(rho0)
    R, Q, Ep = spectral.resolvent, spectral.complement, spectral.reduced
    eye = np.eye(R.shape[0], dtype=complex)

    def tail(m: int) -> np.ndarray:
        return eye - np.linalg.matrix_power(Ep, m)

    def transient(op: np.ndarray, m: int) -> float:
        # (1|op (1 - E'^m) R|rho0)
        return float(np.real(bra @ op @ tail(m) @ R @ r0))

    A, B = gen.centered1, gen.centered2
    RA = R @ A
    mean_s = gen.mean_s + transient(A, N) / N
    mean_c = np.array([
        gen.mean_c[l - 1] + transient(gen.lag1[l - 1], N - l) / (N - l) for l in range(1, L + 1)
    ])

    diag = N * gen.expect(B) + transient(B, N)
    off = (N - 1) * gen.expect(A @ RA) + transient(A @ RA, N - 1)
    off -= gen.expect(A @ (Ep - np.linalg.matrix_power(Ep, N)) @ R @ RA)
    if not stationary and N > 1:
        rows = np.empty((N, r0.size), dtype=complex)
        cols = np.empty((N, r0.size), dtype=complex)
        rows[0], cols[0] = bra @ A, Q @ r0
        for m in range(1, N):
            rows[m] = rows[m - 1] @ Ep
            cols[m] = Ep @ cols[m - 1]
        off -= float(np.real(np.einsum("ja,ab,jb->", rows[N - 1:0:-1], RA, cols[:N - 1])))
    second = (diag + 2 * off) / N ** 2
    var_s = second - (mean_s - gen.mean_s) ** 2

    cov_sc = cov_cc = None
    if covariances:
        cov_sc = np.array([_cov_sc(gen, N, l) for l in range(1, L + 1)])
        cov_cc = np.empty((L, L))
        for l1 in range(1, L + 1):
            for l2 in range(l1, L + 1):
                cov_cc[l1 - 1, l2 - 1] = cov_cc[l2 - 1, l1 - 1] = _cov_cc(gen, N, l1, l2)

    return FiniteNReport(
        N=N, L=L, mean_s=mean_s, second_moment_s=second, var_s=var_s, mean_c=mean_c,
        stationary_start=stationary, cov_sc=cov_sc, cov_cc=cov_cc,
    )


def _gap_weights(gen: MomentGenerators, m: int) -> np.ndarray:
    """sum_{g=0}^{m-1} (m-1-g) E'^g Q* = m R - (1 - E'^m) R^2, zero for m <= 1."""
    spectral = gen.instrument.spectral
    R = spectral.resolvent
    if m <= 1:
        return np.zeros_like(R)
    tail = np.eye(R.shape[0]) - np.linalg.matrix_power(spectral.reduced, m)
    return m * R - tail @ R @ R


def _cov_sc(gen: MomentGenerators, N: int, l: int) -> float:
    x, a = gen.lag1[l - 1], gen.centered1
    K = _gap_weights(gen, N - l)
    total = (N - l) * gen.expect(gen.lag2[l - 1]) + gen.expect(x @ K @ a + a @ K @ x)
    return total / (N * (N - l))


def _cov_cc(gen: MomentGenerators, N: int, l1: int, l2: int) -> float:
    x, y = gen.lag1[l1 - 1], gen.lag1[l2 - 1]
    m = N - l1 - l2
    total = 0.0
    if m >= 1:
        K = _gap_weights(gen, m)
        total += gen.expect(y @ K @ x + x @ K @ y)
        total += m * gen.expect(gen.chained(l1, l2) + gen.chained(l2, l1))
    for k in range(max(1 + l1 + l2 - N, 1), min(l1, l2)):
        total += (m + k) * gen.expect(gen.interleaved(l1, l2, k) + gen.interleaved(l2, l1, k))
    same = gen.coincident(l1) if l1 == l2 else gen.nested(l1, l2)
    total += (N - max(l1, l2)) * gen.expect(same)
    return total / ((N - l1) * (N - l2))


# ── Fisher information ───────────────────────────────────────────────────────

def quadratic_forms(
    sigma: np.ndarray,
    derivatives: np.ndarray,
    N: int,
    sigma_derivative: np.ndarray | None = None,
    cond_limit: float = COND_LIMIT,
) -> tuple[np.ndarray, bool]:
    """N d^T Sigma_l^-1 d for every leading block l = 0..L (plus the covariance term if given)."""
    values = np.empty(sigma.shape[0])
    singular = False
    for l in range(sigma.shape[0]):
        s = sigma[:l + 1, :l + 1]
        d = derivatives[:l + 1]
        if np.linalg.cond(s) > cond_limit:
            singular = True
            solve = lambda rhs, s=s: np.linalg.pinv(s, hermitian=True) @ rhs
        else:
            solve = lambda rhs, s=s: la.solve(s, rhs, assume_a="pos")
        values[l] = N * float(d @ solve(d))
        if sigma_derivative is not None:
            w = solve(sigma_derivative[:l + 1, :l + 1])
            values[l] += 0.5 * float(np.trace(w @ w))
    if singular:
        console.print("[#f4b73d]⚠ covariance matrix is ill-conditioned; using the pseudo-inverse[/#f4b73d]")
    return values, singular


def fisher(
    model: Callable[[float], Instrument],
    g: float,
    L: int,
    N: int = 1,
    step: float | None = None,
    include_sigma_derivative: bool = False,
    cond_limit: float = COND_LIMIT,
    derivatives: np.ndarray | None = None,
) -> FisherReport:
    """Fisher information of S alone (F_0) and of (S, C_1..C_l) (F_l) about the parameter g.

    Derivatives of the stationary means are central differences of half-width ``step``
    (default 1e-4·max(|g|, 1)) unless the exact ``derivatives`` of (<S>*, <C_1>*..<C_L>*)
    are passed in. The dependence of Sigma on g is ignored unless
    ``include_sigma_derivative`` is set.
    """
    h = STEP_REL * max(abs(g), 1.0) if step is None else step
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    lmax = max(L, 1)
    centre = covariance_matrix(build_generators(model(g), lmax), L)
    if derivatives is None or include_sigma_derivative:
        minus, plus = (covariance_matrix(build_generators(model(x), lmax), L) for x in (g - h, g + h))

    if derivatives is None:
        method = "central-difference"
        derivatives = (plus.means - minus.means) / (2 * h)
    else:
        method = "analytic"
        derivatives = np.asarray(derivatives, dtype=float)
        if derivatives.shape != centre.means.shape:
            raise ValueError(f"expected {centre.means.size} mean derivatives, got shape {derivatives.shape}")
    sigma_derivative = (plus.sigma - minus.sigma) / (2 * h) if include_sigma_derivative else None
    values, singular = quadratic_forms(centre.sigma, derivatives, N, sigma_derivative, cond_limit)
    return FisherReport(
        g=g, N=N, L=L, step=h, derivatives=derivatives, sigma=centre.sigma, values=values,
        singular=singular, include_sigma_derivative=include_sigma_derivative, method=method,
    )


def fisher_on_grid(
    instruments: Sequence[Instrument],
    grid: Sequence[float],
    L: int,
    N: int = 1,
    include_sigma_derivative: bool = False,
    cond_limit: float = COND_LIMIT,
) -> list[FisherReport]:
    """Fisher values at every grid point when the model is only known on a grid.

    Derivatives come from ``np.gradient`` along the grid (second order where possible).
    """
    grid = np.asarray(grid, dtype=float)
    if len(instruments) != grid.size or grid.size < 2:
        raise ValueError("need one instrument per grid value and at least two grid values")
    reports = [covariance_matrix(build_generators(instr, max(L, 1)), L) for instr in instruments]
    means = np.stack([r.means for r in reports])
    sigmas = np.stack([r.sigma for r in reports])
    order = 2 if grid.size >= 3 else 1
    d_means = np.gradient(means, grid, axis=0, edge_order=order)
    d_sigmas = np.gradient(sigmas, grid, axis=0, edge_order=order)

    out = []
    for i, report in enumerate(reports):
        values, singular = quadratic_forms(
            report.sigma, d_means[i], N, d_sigmas[i] if include_sigma_derivative else None, cond_limit,
        )
        out.append(FisherReport(
            g=float(grid[i]), N=N, L=L, step=0.0, derivatives=d_means[i], sigma=report.sigma,
            values=values, singular=singular, include_sigma_derivative=include_sigma_derivative,
            method="grid-gradient",
        ))
    return out
