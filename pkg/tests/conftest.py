import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from core.instrument import Measurement, build_instrument
from core.linop import superop_from_kraus, superop_from_map
from models.thermometer import ThermometerParams, thermometer_instrument


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo or enumeration runs")


def random_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    z = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_kraus(rng: np.random.Generator, d: int, n: int) -> list[np.ndarray]:
    """n Kraus operators on dimension d with sum K^dag K = 1."""
    v = random_isometry(rng, d * n, d)
    return [v[i * d:(i + 1) * d] for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture
def random_channel(rng):
    return superop_from_kraus(random_kraus(rng, 2, 3))


@pytest.fixture
def random_instrument(rng):
    """Qubit instrument with outcomes (1, -1, 0.5): generic Kraus pieces and a generic channel."""
    pieces = random_kraus(rng, 2, 3)
    meas = Measurement.from_pairs([(1.0, [pieces[0]]), (-1.0, [pieces[1]]), (0.5, [pieces[2]])])
    channel = superop_from_kraus(random_kraus(rng, 2, 2))
    return build_instrument(meas, channel)


@pytest.fixture
def params():
    return ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=0.5, eta=0.3)


@pytest.fixture
def thermometer(params):
    return thermometer_instrument(params)


def random_state(rng: np.random.Generator, d: int = 2) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def random_thermometer_params(rng: np.random.Generator) -> ThermometerParams:
    gamma = rng.uniform(0.5, 2.0)
    return ThermometerParams(
        omega=rng.uniform(0.0, 3.0),
        gamma=gamma,
        gamma_beta=gamma * rng.uniform(1.0, 4.0),
        tau=rng.uniform(0.2, 2.0),
        eta=rng.uniform(0.0, np.pi / 4),
    )


@pytest.fixture
def reset_instrument(rng):
    """Outcomes (1, -1, 0.5) measured right after a reset to a fixed state: the record is i.i.d."""
    pieces = random_kraus(rng, 2, 3)
    meas = Measurement.from_pairs([(1.0, [pieces[0]]), (-1.0, [pieces[1]]), (0.5, [pieces[2]])])
    target = random_state(rng)
    return build_instrument(meas, superop_from_map(lambda x: np.trace(x) * target, 2))


@pytest.fixture
def make_family(rng):
    """Factory for g -> instrument, a fixed measurement after the mixture (1-g) A + g B of two random channels."""

    def make():
        pieces = random_kraus(rng, 2, 2)
        meas = Measurement.from_pairs([(1.0, [pieces[0]]), (-1.0, [pieces[1]])])
        first = superop_from_kraus(random_kraus(rng, 2, 2))
        second = superop_from_kraus(random_kraus(rng, 2, 2))
        return lambda g: build_instrument(meas, (1 - g) * first + g * second)

    return make
