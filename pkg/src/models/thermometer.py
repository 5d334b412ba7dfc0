"""Qubit thermometer: a qubit relaxing in a thermal reservoir, read out by a weak sigma_z
measurement after every waiting time tau.

Basis order is (|up>, |down>), so sigma_z = diag(1, -1) and the ground state has z = -1.
The temperature enters through gamma_beta = gamma coth(hbar Omega / 2 k_B T); gamma is known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from core.asymptotics import fisher
from core.instrument import Instrument, Measurement, build_instrument
from core.linop import (
    channel_from_generator,
    lindblad_generator,
    superop_from_map,
    validate_density_matrix,
)

from .base import ModelError, ParametrizedModel

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS  = np.array([[0, 1], [0, 0]], dtype=complex)   # |up><down|
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)   # |down><up|

PURE_TOL = 1e-12


@dataclass(frozen=True)
class ThermometerParams:
    omega: float
    gamma: float
    gamma_beta: float
    tau: float
    eta: float
    theta: float = math.pi
    phi: float = 0.0

    def __post_init__(self):
        for name in ("omega", "gamma", "gamma_beta", "tau", "eta", "theta", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")
        if self.gamma <= 0:
            raise ModelError("gamma must be positive")
        if self.gamma_beta < self.gamma * (1 - 1e-12):
            raise ModelError(f"gamma_beta={self.gamma_beta} is below gamma={self.gamma}")
        if self.tau < 0:
            raise ModelError("tau must be non-negative")
        if not 0 <= self.eta <= math.pi / 4 + 1e-15:
            raise ModelError(f"eta={self.eta} outside [0, pi/4]")

    @classmethod
    def from_temperature(
        cls, omega: float, gamma: float, temperature: float, tau: float, eta: float,
        hbar: float = 1.0, k_b: float = 1.0, **angles: float,
    ) -> "ThermometerParams":
        if temperature < 0:
            raise ModelError("temperature must be non-negative")
        if temperature == 0:
            ratio = 1.0
        else:
            ratio = 1.0 / math.tanh(hbar * omega / (2 * k_b * temperature))
        return cls(omega=omega, gamma=gamma, gamma_beta=gamma * ratio, tau=tau, eta=eta, **angles)

    def temperature(self, hbar: float = 1.0, k_b: float = 1.0) -> float:
        ratio = self.gamma_beta / self.gamma
        if ratio <= 1.0:
            return 0.0
        return hbar * self.omega / (2 * k_b * math.atanh(1.0 / ratio))

    @property
    def g(self) -> float:
        """gamma / gamma_beta = -<sigma_z> at equilibrium."""
        return self.gamma / self.gamma_beta

    @property
    def a(self) -> float:
        return math.exp(-self.gamma_beta * self.tau)

    @property
    def c(self) -> float:
        return math.cos(2 * self.eta)

    @property
    def n_th(self) -> float:
        return (self.gamma_beta / self.gamma - 1) / 2

    @property
    def gamma_plus(self) -> float:
        """Decay rate (1 + n_th) gamma."""
        return (1 + self.n_th) * self.gamma

    @property
    def gamma_minus(self) -> float:
        """Excitation rate n_th gamma."""
        return self.n_th * self.gamma

    def with_gamma_beta(self, gamma_beta: float) -> "ThermometerParams":
        return replace(self, gamma_beta=gamma_beta)


# ── states ───────────────────────────────────────────────────────────────────

def density_from_bloch(r: Sequence[float]) -> np.ndarray:
    x, y, z = r
    return 0.5 * (np.eye(2) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return np.real([np.trace(rho @ s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])


def initial_state(theta: float, phi: float = 0.0) -> np.ndarray:
    """Pure state e^{-i phi/2} cos(theta/2)|up> + e^{i phi/2} sin(theta/2)|down>."""
    psi = np.array([np.exp(-0.5j * phi) * np.cos(theta / 2), np.exp(0.5j * phi) * np.sin(theta / 2)])
    return np.outer(psi, psi.conj())


def equilibrium_state(p: ThermometerParams) -> np.ndarray:
    return density_from_bloch((0.0, 0.0, -p.g))


# ── channel and measurement ──────────────────────────────────────────────────

def thermal_channel(p: ThermometerParams) -> np.ndarray:
    """Lambda_tau in Bloch form lifted to a 4×4 superoperator.

    Coherences decay as e^{-gamma_beta tau / 2} and rotate at Omega; z -> (z + g) a - g.
    """
    a = p.a
    coherence = math.exp(-p.gamma_beta * p.tau / 2)
    rotation = np.exp(-1j * p.omega * p.tau)

    def evolve(x: np.ndarray) -> np.ndarray:
        t = x[0, 0] + x[1, 1]
        z = a * (x[0, 0] - x[1, 1]) + (a - 1) * p.g * t
        return np.array([
            [(t + z) / 2, coherence * rotation * x[0, 1]],
            [coherence * np.conj(rotation) * x[1, 0], (t - z) / 2],
        ])

    return superop_from_map(evolve, 2)


def master_equation_channel(p: ThermometerParams) -> np.ndarray:
    """Lambda_tau = exp(tau L) of the thermal master equation."""
    generator = lindblad_generator(
        0.5 * p.omega * SIGMA_Z,
        [(p.gamma_plus, SIGMA_MINUS), (p.gamma_minus, SIGMA_PLUS)],
    )
    return channel_from_generator(generator, p.tau)


def weak_measurement(eta: float) -> Measurement:
    """Outcomes ±1 with M_{+1} = diag(cos eta, sin eta) and M_{-1} = diag(sin eta, cos eta)."""
    if not 0 <= eta <= math.pi / 4 + 1e-15:
        raise ModelError(f"eta={eta} outside [0, pi/4]")
    cos, sin = math.cos(eta), math.sin(eta)
    return Measurement.from_pairs([
        (1.0, [np.diag([cos, sin])]),
        (-1.0, [np.diag([sin, cos])]),
    ])


def thermometer_instrument(p: ThermometerParams) -> Instrument:
    """E_s = M_s ∘ Lambda_tau.

    The average channel E has eigenvalues 1, e^{-gamma_beta tau} and
    sin 2eta · e^{-(gamma_beta/2 ± i Omega) tau}: the measurement leaves populations alone and
    multiplies coherences by 2 cos eta sin eta, so E is Lambda_tau only in its population block.
    """
    return build_instrument(weak_measurement(p.eta), thermal_channel(p))


# ── standard strategy ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StandardFisher:
    F: float
    F_Q: float


def _evolved_bloch(p: ThermometerParams, r0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bloch vector after tau and its derivative with respect to gamma_beta."""
    x0, y0, z0 = r0
    decay = math.exp(-p.gamma_beta * p.tau / 2)
    cos, sin = math.cos(p.omega * p.tau), math.sin(p.omega * p.tau)
    xy = decay * np.array([cos * x0 - sin * y0, sin * x0 + cos * y0])
    z = (z0 + p.g) * p.a - p.g
    dz = (p.g / p.gamma_beta) * (1 - p.a) - p.tau * p.a * (z0 + p.g)
    r = np.array([xy[0], xy[1], z])
    dr = np.array([-0.5 * p.tau * xy[0], -0.5 * p.tau * xy[1], dz])
    return r, dr


def _classical(c: float, z: float, dz: float) -> float:
    denom = 1 - (c * z) ** 2
    if denom <= PURE_TOL:
        return 0.0 if abs(dz) <= PURE_TOL else math.inf
    return c ** 2 * dz ** 2 / denom


def _quantum(r: np.ndarray, dr: np.ndarray) -> float:
    v = np.eye(3) - np.outer(r, r)
    if 1 - r @ r <= PURE_TOL:
        # pure state: V is singular along r; the form lives on the tangent space
        return float(dr @ np.linalg.pinv(v, hermitian=True) @ dr)
    return float(dr @ np.linalg.solve(v, dr))


def fisher_standard(p: ThermometerParams, rho0: np.ndarray | None = None) -> StandardFisher:
    """Per-shot Fisher information about gamma_beta of one weak sigma_z measurement after tau,
    and the quantum Fisher information of the state Lambda_tau(rho0)."""
    rho0 = initial_state(p.theta, p.phi) if rho0 is None else rho0
    validate_density_matrix(rho0)
    r, dr = _evolved_bloch(p, bloch_vector(rho0))
    return StandardFisher(F=_classical(p.c, r[2], dr[2]), F_Q=_quantum(r, dr))


def fisher_equilibrium_start(p: ThermometerParams) -> float:
    """Standard strategy restarted from the equilibrium state prepared at the true gamma_beta."""
    r, dr = _evolved_bloch(p, np.array([0.0, 0.0, -p.g]))
    return _classical(p.c, r[2], dr[2])


def quantum_fisher_scan(p: ThermometerParams, thetas: Sequence[float], phi: float = 0.0) -> np.ndarray:
    """F_Q for pure initial states over a range of polar angles."""
    return np.array([fisher_standard(p, initial_state(t, phi)).F_Q for t in thetas])


def mean_derivatives(p: ThermometerParams, L: int) -> np.ndarray:
    """d/d gamma_beta of the stationary means (<S>*, <C_1>*, ..., <C_L>*)."""
    g, a, c = p.g, p.a, p.c
    dg = -g / p.gamma_beta
    h = 1 - g ** 2
    out = np.empty(L + 1)
    out[0] = -c * dg
    for l in range(1, L + 1):
        out[l] = c ** 2 * (2 * g * dg * (1 - a ** l) - h * l * p.tau * a ** l)
    return out


# ── registry provider and sweep ──────────────────────────────────────────────

class ThermometerModel(ParametrizedModel):
    """gamma_beta -> thermometer instrument, all other parameters held fixed."""

    name = "thermometer"
    parameter = "gamma_beta"

    def __init__(self, params: ThermometerParams):
        self.params = params

    @classmethod
    def from_options(cls, options: dict) -> "ThermometerModel":
        try:
            return cls(ThermometerParams(**options))
        except TypeError as e:
            raise ModelError(f"bad thermometer parameters: {e}") from e

    def build(self, value: float) -> Instrument:
        return thermometer_instrument(self.params.with_gamma_beta(value))

    def mean_derivatives(self, value: float, L: int) -> np.ndarray:
        return mean_derivatives(self.params.with_gamma_beta(value), L)


@dataclass(frozen=True)
class SweepRow:
    gamma_ratio: float
    tau_gamma: float
    eta: float
    F_standard: float
    F_sequential: np.ndarray
    F_equilibrium: float | None = None

    @property
    def gains(self) -> np.ndarray:
        """(F_L - F_{L-1}) / F_0 for L = 1..L_max."""
        return np.diff(self.F_sequential) / self.F_sequential[0]

    def as_dict(self) -> dict:
        out = {
            "gamma_ratio": self.gamma_ratio,
            "tau_gamma": self.tau_gamma,
            "eta": self.eta,
            "F_standard": self.F_standard,
        }
        for l, value in enumerate(self.F_sequential):
            out[f"F{l}_per_N"] = float(value)
        for l, value in enumerate(self.gains, start=1):
            out[f"gain{l}"] = float(value)
        if self.F_equilibrium is not None:
            out["F_eq"] = self.F_equilibrium
        return out


def sweep_points(
    gamma: float,
    gamma_ratios: Sequence[float],
    tau_gammas: Sequence[float],
    etas: Sequence[float],
    omega: float = 1.0,
) -> list[ThermometerParams]:
    """Grid points ordered by (gamma_ratio, eta, tau_gamma)."""
    points = []
    for ratio in gamma_ratios:
        for eta in etas:
            for tg in tau_gammas:
                if tg <= 0:
                    raise ModelError("tau = 0 is not a mixing grid point")
                points.append(ThermometerParams(
                    omega=omega, gamma=gamma, gamma_beta=ratio * gamma, tau=tg / gamma, eta=eta,
                ))
    return points


def sweep_row(p: ThermometerParams, L_max: int = 2, include_equilibrium: bool = False) -> SweepRow:
    """Standard vs sequential Fisher information per measurement at one grid point.

    The sequential values come from the generic covariance machinery, not from closed forms;
    only the derivatives of the stationary means are taken analytically.
    """
    if p.tau <= 0:
        raise ModelError("tau = 0 is not a mixing grid point")
    report = fisher(ThermometerModel(p), p.gamma_beta, L_max, N=1, derivatives=mean_derivatives(p, L_max))
    return SweepRow(
        gamma_ratio=p.gamma_beta / p.gamma,
        tau_gamma=p.tau * p.gamma,
        eta=p.eta,
        F_standard=fisher_standard(p, initial_state(math.pi)).F,
        F_sequential=report.values,
        F_equilibrium=fisher_equilibrium_start(p) if include_equilibrium else None,
    )


def sweep(
    gamma: float,
    gamma_ratios: Sequence[float],
    tau_gammas: Sequence[float],
    etas: Sequence[float],
    L_max: int = 2,
    omega: float = 1.0,
    include_equilibrium: bool = False,
) -> list[SweepRow]:
    """Serial sweep; the CLI pipeline runs the same rows on a thread pool."""
    return [
        sweep_row(p, L_max, include_equilibrium)
        for p in sweep_points(gamma, gamma_ratios, tau_gammas, etas, omega)
    ]
