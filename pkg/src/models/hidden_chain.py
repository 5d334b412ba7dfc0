"""Closed forms for the thermometer statistics.

Both the thermal channel and the sigma_z measurement keep diagonal states diagonal, so the
outcome record is a hidden two-state chain: s_i = xi_i x_i with x_i = ±1 the qubit's
population variable at measurement i and xi_i an independent ±1 flip with mean c = cos 2 eta.
The chain relaxes as E[x_j | x_i] = mu + a^(j-i) (x_i - mu) with mu = -g and a = e^{-gamma_beta tau}.

The module-level formulas below are written directly in (gamma, gamma_beta, tau, eta, <sigma_z>_0);
``HiddenChain`` evaluates the same moments from the chain and serves as their cross-check.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from rich.console import Console

from core.asymptotics import quadratic_forms

from .base import ModelError
from .thermometer import ThermometerParams, bloch_vector, fisher_standard, initial_state, mean_derivatives

console = Console(stderr=True)

STATIONARY_TOL = 1e-14
VARIANCE_FLOOR = 1e-300


def _regime(N: int, l1: int, l2: int) -> str:
    return "N>=l+l'" if N >= l1 + l2 else "l+l'>N"


def _check_tau(p: ThermometerParams) -> None:
    if p.tau <= 0:
        raise ModelError("closed forms need tau > 0")


def _offset(p: ThermometerParams, z0: float | None) -> float:
    """<sigma_z>_0 + gamma/gamma_beta, zero for the equilibrium start."""
    return 0.0 if z0 is None else z0 + p.g


# ── closed forms in the thermometer parameters ──────────────────────────────

def stationary_c(p: ThermometerParams, l: int) -> float:
    """<C_l>* for l >= 0 (the l = 0 value is cos^2 2eta, not 1)."""
    g2 = p.g ** 2
    return (g2 + p.a ** l * (1 - g2)) * p.c ** 2


def expected_s(p: ThermometerParams, N: int, z0: float | None = None) -> float:
    """<S>_N for N >= 1 from an initial state with <sigma_z>_0 = z0."""
    _check_tau(p)
    g, a, b = p.g, p.a, p.gamma_beta * p.tau
    return -(g - (1 - a ** N) / math.expm1(b) * _offset(p, z0) / N) * p.c


def variance_s(p: ThermometerParams, N: int, z0: float | None = None) -> float:
    """(Delta S)^2_N for N >= 1.

    The initial-state cross term carries the factor 4/N; at N = 1 this reproduces
    1 - <s_1>^2 exactly.
    """
    _check_tau(p)
    g, a, b, c = p.g, p.a, p.gamma_beta * p.tau, p.c
    s2, h, d0 = 1 - c ** 2, 1 - g ** 2, _offset(p, z0)
    geo = (1 - a ** N) / math.expm1(b)
    stationary = (
        s2 + ((1 + a) / (1 - a) - 2 / N * (1 - a ** N) / (1 - a) ** 2 * a) * h * c ** 2
    ) / N
    cross = -4 / N * (a ** N / (1 - a ** N) - (1 + a) / (2 * N * (1 - a))) * geo * d0 * g * c ** 2
    transient = -(geo * d0 * c / N) ** 2
    return stationary + cross + transient


def expected_c(p: ThermometerParams, N: int, l: int, z0: float | None = None) -> float:
    """<C_l>_N for l >= 0 and N >= l+1."""
    _check_tau(p)
    if N < l + 1:
        raise ModelError(f"<C_{l}> needs N >= {l + 1}")
    g, a, b = p.g, p.a, p.gamma_beta * p.tau
    m = N - l
    shift = (1 - a ** m) / math.expm1(b) * (1 - a ** l) * _offset(p, z0) * g / m
    return stationary_c(p, l) - shift * p.c ** 2


def cov_s_c(p: ThermometerParams, N: int, l: int) -> float:
    """<S C_l>_N - <S>_N <C_l>_N in the stationary state, l >= 1, N >= l+1."""
    _check_tau(p)
    if l < 1 or N < l + 1:
        raise ModelError(f"cov(S, C_{l}) needs l >= 1 and N >= {l + 1}")
    g, a, c = p.g, p.a, p.c
    s2, h, m = 1 - c ** 2, 1 - g ** 2, N - l
    weight = (1 + a) / (1 - a) - (1 - a ** m) / (m * (1 - a) ** 2) * a
    bracket = l * a ** l - weight * (1 - a ** l)
    return 2 / N * (-g * c) * (s2 - bracket * h * c ** 2)


def _cov_c_c_long(p: ThermometerParams, N: int, l: int, lp: int) -> float:
    """l >= lp >= 1 and N >= l + lp."""
    g, a, c = p.g, p.a, p.c
    s2, h, g2 = 1 - c ** 2, 1 - g ** 2, g ** 2
    M, Mp = N - l, N - lp
    q = lp / M
    even = (1 + a ** 2) / (1 - a ** 2)
    odd = (1 + a) / (1 - a)
    inner, outer = a ** (l - lp), a ** (l + lp)

    total = (s2 ** 2 / Mp if l == lp else 0.0)
    total += 2 / Mp * (stationary_c(p, l - lp) + (1 - q) * stationary_c(p, l + lp)) * s2
    quartic = (
        lp * (2 - q) * outer
        - even * (inner - (1 - q) * outer)
        - (l - lp - 2 / M * a ** 2 / (1 - a ** 2) ** 2) * (inner - outer)
    )
    total -= quartic / Mp * h ** 2 * c ** 4
    mixed = (
        lp * (2 - q) * (a ** l + a ** lp)
        - odd * ((2 - q) * (1 - a ** lp) + q * a ** l)
        + a / (M * (1 - a) ** 2) * ((1 - a ** (N - l - lp)) * (1 - a ** l) * (1 - a ** lp) + inner - outer)
    )
    total -= 2 / Mp * mixed * h * g2 * c ** 4
    return total


def _cov_c_c_short(p: ThermometerParams, N: int, l: int, lp: int) -> float:
    """l >= lp >= 1 and l + lp > N >= l + 1."""
    g, a, c = p.g, p.a, p.c
    s2, h, g2 = 1 - c ** 2, 1 - g ** 2, g ** 2
    M, Mp = N - l, N - lp
    even = (1 + a ** 2) / (1 - a ** 2)
    odd = (1 + a) / (1 - a)
    inner, outer = a ** (l - lp), a ** (l + lp)

    total = (s2 ** 2 / Mp if l == lp else 0.0)
    total += 2 / Mp * stationary_c(p, l - lp) * s2
    spread = l - lp + even - 2 / M * (1 - a ** (2 * M)) / (1 - a ** 2) ** 2 * a ** 2
    total -= (outer - spread / Mp * inner) * h ** 2 * c ** 4
    mixed = (
        (1 - (l - lp) / Mp) * (a ** l + a ** lp)
        - odd / Mp * (1 + a ** l - a ** lp)
        # a^(l+lp-N) grows with the overlap l+lp-N
        + (1 - a ** M) / (M * Mp * (1 - a) ** 2) * a * (1 + inner - a ** (l + lp - N) + a ** l)
    )
    total -= 2 * mixed * h * g2 * c ** 4
    return total


def cov_c_c(p: ThermometerParams, N: int, l1: int, l2: int) -> float:
    """<C_l C_l'>_N - <C_l>_N <C_l'>_N in the stationary state for l, l' >= 1, N >= max(l, l')+1.

    Picks the N >= l+l' or the l+l' > N expression as N requires.
    """
    _check_tau(p)
    l, lp = max(l1, l2), min(l1, l2)
    if lp < 1 or N < l + 1:
        raise ModelError(f"cov(C_{l1}, C_{l2}) needs lags >= 1 and N >= {l + 1}")
    if N >= l + lp:
        return _cov_c_c_long(p, N, l, lp)
    return _cov_c_c_short(p, N, l, lp)


# N -> infinity limits, all multiplied by N

def sigma2_limit(p: ThermometerParams) -> float:
    _check_tau(p)
    c, h, a = p.c, 1 - p.g ** 2, p.a
    return 1 - c ** 2 + (1 + a) / (1 - a) * h * c ** 2


def cov_s_c_limit(p: ThermometerParams, l: int) -> float:
    _check_tau(p)
    g, a, c = p.g, p.a, p.c
    bracket = l * a ** l - (1 + a) / (1 - a) * (1 - a ** l)
    return 2 * (-g * c) * (1 - c ** 2 - bracket * (1 - g ** 2) * c ** 2)


def cov_c_c_limit(p: ThermometerParams, l1: int, l2: int) -> float:
    _check_tau(p)
    l, lp = max(l1, l2), min(l1, l2)
    g, a, c = p.g, p.a, p.c
    s2, h = 1 - c ** 2, 1 - g ** 2
    inner, outer = a ** (l - lp), a ** (l + lp)
    even = (1 + a ** 2) / (1 - a ** 2)
    total = (s2 ** 2 if l == lp else 0.0)
    total += 2 * (stationary_c(p, l - lp) + stationary_c(p, l + lp)) * s2
    total -= 2 * (lp * outer - 0.5 * (l - lp + even) * (inner - outer)) * h ** 2 * c ** 4
    total -= 4 * (lp * (a ** l + a ** lp) - (1 + a) / (1 - a) * (1 - a ** lp)) * h * g ** 2 * c ** 4
    return total


def sigma_limit(p: ThermometerParams, L: int) -> np.ndarray:
    """N cov(S, C_1..C_L) as N -> infinity."""
    out = np.empty((L + 1, L + 1))
    out[0, 0] = sigma2_limit(p)
    for l1 in range(1, L + 1):
        out[0, l1] = out[l1, 0] = cov_s_c_limit(p, l1)
        for l2 in range(l1, L + 1):
            out[l1, l2] = out[l2, l1] = cov_c_c_limit(p, l1, l2)
    return out


def f0_limit(p: ThermometerParams) -> float:
    """F_0 / N as N -> infinity."""
    numerator = (p.g * p.c / p.gamma_beta) ** 2
    variance = sigma2_limit(p)
    if variance <= VARIANCE_FLOOR:
        return math.inf if numerator > 0 else math.nan
    return numerator / variance


# ── hidden two-state chain ───────────────────────────────────────────────────

@dataclass(frozen=True)
class HiddenChain:
    mu: float
    a: float
    c: float
    delta0: float = 0.0

    @classmethod
    def from_params(cls, p: ThermometerParams, z0: float | None = None) -> "HiddenChain":
        _check_tau(p)
        return cls(mu=-p.g, a=p.a, c=p.c, delta0=_offset(p, z0))

    @property
    def h(self) -> float:
        return 1.0 - self.mu ** 2

    def gap_sum(self, m: int) -> float:
        """sum_{D=1}^{m-1} (m - D) a^D, zero for m <= 1."""
        if m <= 1:
            return 0.0
        a = self.a
        return m * a / (1 - a) - a * (1 - a ** m) / (1 - a) ** 2

    def product_mean(self, times: Iterable[int]) -> float:
        """Stationary E[s_{t_1} ... s_{t_n}] for measurement indices t >= 1, repeats allowed."""
        odd = sorted(t for t, k in Counter(times).items() if k % 2)
        if not odd:
            return 1.0
        prev2, prev1 = 1.0, self.mu
        for before, after in zip(odd, odd[1:]):
            w = self.a ** (after - before)
            prev2, prev1 = prev1, self.mu * (1 - w) * prev1 + w * prev2
        return self.c ** len(odd) * prev1

    # stationary one- and two-point values
    @property
    def mean_s_star(self) -> float:
        return self.c * self.mu

    def mean_c_star(self, l: int) -> float:
        return self.c ** 2 * (self.mu ** 2 * (1 - self.a ** l) + self.a ** l)

    @property
    def sigma2(self) -> float:
        return 1 - (self.c * self.mu) ** 2 + 2 * self.c ** 2 * self.h * self.a / (1 - self.a)

    # finite N from the chain's initial condition
    def mean_s(self, N: int) -> float:
        a = self.a
        return self.mean_s_star + self.c * self.delta0 * a * (1 - a ** N) / ((1 - a) * N)

    def mean_c(self, N: int, l: int) -> float:
        a, m = self.a, N - l
        tail = self.c ** 2 * self.mu * (1 - a ** l) * self.delta0 * a * (1 - a ** m) / ((1 - a) * m)
        return self.mean_c_star(l) + tail

    def var_s(self, N: int) -> float:
        a, c, mu, d0 = self.a, self.c, self.mu, self.delta0
        a1 = a * (1 - a ** N) / (1 - a)
        odd_weighted = a * ((1 + a) * (1 - a ** N) - 2 * N * a ** N * (1 - a)) / (1 - a) ** 2
        total = (
            N * (1 - (c * mu) ** 2)
            + 2 * c ** 2 * self.h * self.gap_sum(N)
            - 2 * c ** 2 * mu * d0 * odd_weighted
            - (c * d0 * a1) ** 2
        )
        return total / N ** 2

    # stationary covariances: finitely many overlapping placements plus a geometric tail
    def _sc_overlap(self, l: int) -> float:
        centre = self.mean_s_star * self.mean_c_star(l)
        return sum(self.product_mean((1, 1 + o, 1 + l)) - centre for o in range(l + 1))

    def _sc_tail(self, l: int) -> float:
        return 2 * self.c ** 3 * self.mu * self.h * (1 - self.a ** l)

    def _cc_overlap(self, l1: int, l2: int, N: int | None) -> float:
        centre = self.mean_c_star(l1) * self.mean_c_star(l2)
        total = 0.0
        for o in range(-l2, l1 + 1):
            if N is None:
                count = 1
            else:
                count = max(0, min(N - l1, N - l2 - o) - max(1, 1 - o) + 1)
            if count:
                i = 1 + l2
                moment = self.product_mean((i, i + l1, i + o, i + o + l2))
                total += count * (moment - centre)
        return total

    def _cc_tail(self, l1: int, l2: int) -> float:
        return 2 * self.c ** 4 * self.mu ** 2 * self.h * (1 - self.a ** l1) * (1 - self.a ** l2)

    def cov_sc(self, N: int, l: int) -> float:
        m = N - l
        return (m * self._sc_overlap(l) + self.gap_sum(m) * self._sc_tail(l)) / (N * m)

    def cov_cc(self, N: int, l1: int, l2: int) -> float:
        m = N - l1 - l2
        total = self._cc_overlap(l1, l2, N) + self.gap_sum(m) * self._cc_tail(l1, l2)
        return total / ((N - l1) * (N - l2))

    def sigma_matrix(self, L: int) -> np.ndarray:
        """N -> infinity limit of N cov(S, C_1..C_L)."""
        tail = self.a / (1 - self.a)
        out = np.empty((L + 1, L + 1))
        out[0, 0] = self.sigma2
        for l1 in range(1, L + 1):
            out[0, l1] = out[l1, 0] = self._sc_overlap(l1) + tail * self._sc_tail(l1)
            for l2 in range(l1, L + 1):
                value = self._cc_overlap(l1, l2, None) + tail * self._cc_tail(l1, l2)
                out[l1, l2] = out[l2, l1] = value
        return out


@dataclass(frozen=True)
class ClosedFormReport:
    params: ThermometerParams
    N: int
    L: int
    mean_s: float
    var_s: float
    mean_c: np.ndarray
    mean_s_star: float
    sigma2: float
    mean_c_star: np.ndarray
    sigma: np.ndarray
    F_standard: float
    F_Q: float
    F0_per_N: float
    fisher_per_N: np.ndarray
    cov_sc: np.ndarray | None = None
    cov_cc: np.ndarray | None = None
    regimes: dict[tuple[int, int], str] = field(default_factory=dict)
    singular: bool = False
    chain_deviation: float = 0.0

    def covariance(self) -> np.ndarray:
        if self.cov_sc is None or self.cov_cc is None:
            raise ModelError("lag covariances are only given for the stationary start")
        out = np.empty((self.L + 1, self.L + 1))
        out[0, 0] = self.var_s
        out[0, 1:] = out[1:, 0] = self.cov_sc
        out[1:, 1:] = self.cov_cc
        return out


def _fisher_per_N(p: ThermometerParams, sigma: np.ndarray, L: int) -> tuple[np.ndarray, bool]:
    derivatives = mean_derivatives(p, L)
    if sigma[0, 0] <= VARIANCE_FLOOR:
        # S is deterministic
        console.print("[#f4b73d]⚠ the record is deterministic (sigma² = 0); Fisher information is unbounded[/#f4b73d]")
        return np.full(L + 1, math.inf if derivatives[0] != 0 else math.nan), True
    return quadratic_forms(sigma, derivatives, 1)


def closed_forms(p: ThermometerParams, N: int, L: int, rho0: np.ndarray | None = None) -> ClosedFormReport:
    """Exact finite-N moments, their N -> infinity limits and the Fisher information of the
    thermometer record.

    ``rho0`` defaults to the stationary state; lag covariances are reported only then.
    Standard-strategy values use the pure state set by ``p.theta`` and ``p.phi``.
    """
    if L < 0 or N < L + 1:
        raise ModelError(f"N={N} is too small for L={L}; need N >= L+1")
    _check_tau(p)
    z0 = None if rho0 is None else float(bloch_vector(rho0)[2])
    stationary = abs(_offset(p, z0)) < STATIONARY_TOL
    chain = HiddenChain.from_params(p, z0)

    mean_s = expected_s(p, N, z0)
    var_s = variance_s(p, N, z0)
    mean_c = np.array([expected_c(p, N, l, z0) for l in range(1, L + 1)])
    deviations = [mean_s - chain.mean_s(N), var_s - chain.var_s(N)]
    deviations += [mean_c[l - 1] - chain.mean_c(N, l) for l in range(1, L + 1)]

    cov_sc = cov_cc = None
    regimes: dict[tuple[int, int], str] = {}
    if stationary:
        cov_sc = np.array([cov_s_c(p, N, l) for l in range(1, L + 1)])
        cov_cc = np.empty((L, L))
        for l1 in range(1, L + 1):
            deviations.append(cov_sc[l1 - 1] - chain.cov_sc(N, l1))
            for l2 in range(l1, L + 1):
                cov_cc[l1 - 1, l2 - 1] = cov_cc[l2 - 1, l1 - 1] = cov_c_c(p, N, l1, l2)
                deviations.append(cov_cc[l1 - 1, l2 - 1] - chain.cov_cc(N, l1, l2))
                regimes[(l1, l2)] = _regime(N, l1, l2)

    sigma = sigma_limit(p, L)
    fisher_per_N, singular = _fisher_per_N(p, sigma, L)
    standard = fisher_standard(p, initial_state(p.theta, p.phi))

    return ClosedFormReport(
        params=p,
        N=N,
        L=L,
        mean_s=mean_s,
        var_s=var_s,
        mean_c=mean_c,
        mean_s_star=-p.g * p.c,
        sigma2=float(sigma[0, 0]),
        mean_c_star=np.array([stationary_c(p, l) for l in range(1, L + 1)]),
        sigma=sigma,
        F_standard=standard.F,
        F_Q=standard.F_Q,
        F0_per_N=f0_limit(p),
        fisher_per_N=fisher_per_N,
        cov_sc=cov_sc,
        cov_cc=cov_cc,
        regimes=regimes,
        singular=singular,
        chain_deviation=float(np.max(np.abs(deviations))),
    )
