from dataclasses import replace

import numpy as np
import pytest

from core.asymptotics import (
    InitialStateError,
    covariance_matrix,
    finite_N_moments,
    fisher,
    fisher_on_grid,
    quadratic_forms,
    sigma2,
    stationary_stats,
)
from core.instrument import Measurement, build_generators, build_instrument, outcome_probability
from core.linop import NotMixingError, superop_from_kraus, validate_cptp
from core.trajectory import enumerate_exact, sample
from models.hidden_chain import HiddenChain, closed_forms
from models.thermometer import ThermometerModel, ThermometerParams, mean_derivatives, thermometer_instrument

from conftest import random_thermometer_params


def test_stationary_stats_copy_generator_values(thermometer):
    gen = build_generators(thermometer, 2)
    stats = stationary_stats(gen)
    assert stats.mean_s == gen.mean_s
    np.testing.assert_array_equal(stats.mean_c, gen.mean_c)


def test_sigma_matches_hidden_chain(params, thermometer):
    report = covariance_matrix(build_generators(thermometer, 3))
    expected = HiddenChain.from_params(params).sigma_matrix(3)
    np.testing.assert_allclose(report.sigma, expected, rtol=1e-9, atol=1e-12)
    assert report.sigma2 == pytest.approx(sigma2(build_generators(thermometer, 1)))
    assert report.classification == "Mixing"


def test_sigma_is_symmetric_and_psd(random_instrument):
    report = covariance_matrix(build_generators(random_instrument, 3))
    np.testing.assert_allclose(report.sigma, report.sigma.T)
    assert report.psd
    assert report.L == 3
    assert report.means.shape == (4,)


def test_covariance_matrix_truncates_to_L(random_instrument):
    gen = build_generators(random_instrument, 3)
    full = covariance_matrix(gen).sigma
    np.testing.assert_allclose(covariance_matrix(gen, 1).sigma, full[:2, :2])
    assert covariance_matrix(gen, 0).sigma.shape == (1, 1)
    with pytest.raises(ValueError):
        covariance_matrix(gen, 4)


def test_covariance_requires_mixing():
    swap = [np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]])]
    meas = Measurement.from_pairs([(1.0, [np.diag([1.0, 0.0])]), (-1.0, [np.diag([0.0, 1.0])])])
    instr = build_instrument(meas, superop_from_kraus(swap))
    gen = build_generators(instr, 1)
    assert gen.mean_s == pytest.approx(0.0)
    with pytest.raises(NotMixingError):
        covariance_matrix(gen)
    with pytest.raises(NotMixingError):
        sigma2(gen)


@pytest.mark.parametrize("N, L", [(3, 2), (8, 2), (8, 3)])
def test_finite_N_moments_match_enumeration(random_instrument, N, L):
    gen = build_generators(random_instrument, L)
    rho = random_instrument.spectral.fixed_point
    moments = finite_N_moments(gen, rho, N, L)
    exact = enumerate_exact(random_instrument, rho, N, L)
    assert moments.stationary_start
    assert moments.mean_s == pytest.approx(exact.mean_s, abs=1e-12)
    assert moments.var_s == pytest.approx(exact.var_s, rel=1e-9)
    np.testing.assert_allclose(moments.mean_c, exact.mean_c, atol=1e-12)
    np.testing.assert_allclose(moments.covariance(), exact.covariance(), atol=1e-11)


def test_finite_N_moments_from_a_generic_state(random_instrument):
    gen = build_generators(random_instrument, 2)
    rho0 = np.array([[0.8, 0.3 - 0.1j], [0.3 + 0.1j, 0.2]])
    moments = finite_N_moments(gen, rho0, 7, 2)
    exact = enumerate_exact(random_instrument, rho0, 7, 2)
    assert not moments.stationary_start
    assert moments.initial_state == "generic"
    assert moments.mean_s == pytest.approx(exact.mean_s, abs=1e-12)
    assert moments.second_moment_s == pytest.approx(exact.central_moment_s(2, about=gen.mean_s), rel=1e-9)
    assert moments.var_s == pytest.approx(exact.var_s, rel=1e-9)
    np.testing.assert_allclose(moments.mean_c, exact.mean_c, atol=1e-12)
    with pytest.raises(InitialStateError):
        moments.covariance()


def test_lag_covariances_need_the_stationary_start(random_instrument):
    gen = build_generators(random_instrument, 1)
    with pytest.raises(InitialStateError):
        finite_N_moments(gen, np.diag([1.0, 0.0]), 10, 1, covariances=True)


def test_finite_N_needs_more_steps_than_lags(random_instrument):
    gen = build_generators(random_instrument, 3)
    with pytest.raises(ValueError):
        finite_N_moments(gen, None, 3, 3)


def test_finite_N_covariance_approaches_sigma(random_instrument):
    gen = build_generators(random_instrument, 2)
    N = 20000
    moments = finite_N_moments(gen, None, N, 2)
    sigma = covariance_matrix(gen).sigma
    np.testing.assert_allclose(N * moments.covariance(), sigma, rtol=1e-2, atol=1e-3)


def test_fisher_matches_closed_forms(params):
    report = fisher(ThermometerModel(params), params.gamma_beta, 3)
    expected = closed_forms(params, 10, 3)
    np.testing.assert_allclose(report.values, expected.fisher_per_N, rtol=1e-5)
    assert report.F0 == pytest.approx(expected.F0_per_N, rel=1e-5)
    assert report.method == "central-difference"
    assert not report.singular


def test_fisher_is_monotone_in_L(params):
    values = fisher(ThermometerModel(params), params.gamma_beta, 4).values
    assert np.all(np.diff(values) >= -1e-12)
    assert values[-1] > values[0]


def test_fisher_scales_with_N(params):
    one = fisher(ThermometerModel(params), params.gamma_beta, 2)
    many = fisher(ThermometerModel(params), params.gamma_beta, 2, N=50)
    np.testing.assert_allclose(many.values, 50 * one.values, rtol=1e-12)
    np.testing.assert_allclose(many.per_measurement, one.values, rtol=1e-12)


def test_fisher_vanishes_for_an_uninformative_measurement():
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=0.5, eta=np.pi / 4)
    report = fisher(ThermometerModel(p), p.gamma_beta, 2)
    np.testing.assert_allclose(report.values, 0.0, atol=1e-12)


def test_fisher_sigma_derivative_only_adds(params):
    plain = fisher(ThermometerModel(params), params.gamma_beta, 2, N=1)
    full = fisher(ThermometerModel(params), params.gamma_beta, 2, N=1, include_sigma_derivative=True)
    assert full.include_sigma_derivative
    assert np.all(full.values >= plain.values)


def test_fisher_rejects_non_positive_step(params):
    with pytest.raises(ValueError):
        fisher(ThermometerModel(params), params.gamma_beta, 1, step=0.0)


def test_fisher_on_grid_agrees_with_central_differences(params):
    grid = params.gamma_beta + np.linspace(-2e-3, 2e-3, 5)
    instruments = [thermometer_instrument(params.with_gamma_beta(g)) for g in grid]
    reports = fisher_on_grid(instruments, grid, 2)
    direct = fisher(ThermometerModel(params), params.gamma_beta, 2)
    assert reports[2].method == "grid-gradient"
    assert reports[2].g == pytest.approx(params.gamma_beta)
    np.testing.assert_allclose(reports[2].values, direct.values, rtol=1e-4)


def test_fisher_on_grid_needs_matching_lengths(params, thermometer):
    with pytest.raises(ValueError):
        fisher_on_grid([thermometer], [params.gamma_beta], 1)


def test_fisher_takes_exact_mean_derivatives(params):
    exact = mean_derivatives(params, 2)
    report = fisher(ThermometerModel(params), params.gamma_beta, 2, derivatives=exact)
    assert report.method == "analytic"
    np.testing.assert_array_equal(report.derivatives, exact)
    differenced = fisher(ThermometerModel(params), params.gamma_beta, 2)
    np.testing.assert_allclose(report.values, differenced.values, rtol=1e-5)
    with pytest.raises(ValueError, match="mean derivatives"):
        fisher(ThermometerModel(params), params.gamma_beta, 2, derivatives=exact[:2])


def test_model_fisher_uses_the_exact_derivatives(params):
    report = ThermometerModel(params).fisher_over([params.gamma_beta], 2)[0]
    assert report.method == "analytic"
    np.testing.assert_allclose(report.derivatives, mean_derivatives(params, 2))


def test_quadratic_forms_fall_back_to_the_pseudo_inverse(capsys):
    sigma = np.array([[1.0, 1.0], [1.0, 1.0]])
    values, singular = quadratic_forms(sigma, np.array([2.0, 2.0]), 3)
    assert singular
    np.testing.assert_allclose(values, [12.0, 12.0])
    assert "pseudo-inverse" in capsys.readouterr().err


def _single_step(instr):
    p = np.array([outcome_probability(instr, v, np.eye(2) / 2) for v in instr.values])
    m = float(p @ instr.values)
    return p, m, float(p @ instr.values ** 2) - m ** 2


def test_iid_record_statistics(reset_instrument):
    _, m, v = _single_step(reset_instrument)
    gen = build_generators(reset_instrument, 2)
    stats = stationary_stats(gen)
    assert stats.mean_s == pytest.approx(m, abs=1e-12)
    assert stats.var_s == pytest.approx(v, rel=1e-10)
    np.testing.assert_allclose(stats.mean_c, [m ** 2, m ** 2], atol=1e-12)
    assert sigma2(gen) == pytest.approx(v, rel=1e-10)

    # S meets each product s_i s_{i+l} twice; two distinct products share at most one factor
    cross, shared = 2 * m * v, 4 * m ** 2 * v
    expected = np.array([
        [v, cross, cross],
        [cross, v ** 2 + shared, shared],
        [cross, shared, v ** 2 + shared],
    ])
    np.testing.assert_allclose(covariance_matrix(gen).sigma, expected, atol=1e-12)


def test_iid_record_enumeration(reset_instrument):
    N = 10
    p, m, v = _single_step(reset_instrument)
    dist = enumerate_exact(reset_instrument, np.diag([0.9, 0.1]), N, 2)
    np.testing.assert_allclose(dist.probabilities, np.prod(p[dist.indices], axis=1), atol=1e-14)
    cov = dist.covariance()
    assert cov[0, 0] == pytest.approx(v / N, rel=1e-9)
    np.testing.assert_allclose(cov[0, 1:], 2 * m * v / N, atol=1e-12)
    np.testing.assert_allclose(dist.mean_c, m ** 2, atol=1e-12)
    moments = finite_N_moments(build_generators(reset_instrument, 2), None, N, 2)
    np.testing.assert_allclose(moments.covariance(), cov, atol=1e-12)


def test_rescaled_outcomes_scale_sigma_but_not_fisher(params, random_instrument):
    factor = 2.5
    base = covariance_matrix(build_generators(random_instrument, 2))
    scaled = covariance_matrix(build_generators(random_instrument.rescaled(factor), 2))
    powers = np.array([factor, factor ** 2, factor ** 2])
    np.testing.assert_allclose(scaled.means, powers * base.means, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(scaled.sigma, np.outer(powers, powers) * base.sigma, rtol=1e-9, atol=1e-12)

    model = ThermometerModel(params)
    plain = fisher(model, params.gamma_beta, 2)
    rescaled = fisher(lambda g: model(g).rescaled(factor), params.gamma_beta, 2)
    np.testing.assert_allclose(rescaled.values, plain.values, rtol=1e-8)


def test_fisher_is_monotone_in_L_for_random_instruments(make_family):
    for _ in range(20):
        values = fisher(make_family(), 0.4, 2).values
        assert values[0] > 0
        assert np.all(np.diff(values) >= -1e-10 * values[-1])


def test_properties_on_random_instances(rng, make_family):
    for _ in range(50):
        model = make_family()
        instr = model(0.4)
        assert validate_cptp(instr.average).passed
        report = covariance_matrix(build_generators(instr, 2))
        assert report.psd
        values = fisher(model, 0.4, 2).values
        assert np.all(np.diff(values) >= -1e-10 * values[-1])

        seed = int(rng.integers(2 ** 32))
        rho = instr.spectral.fixed_point
        np.testing.assert_array_equal(sample(instr, rho, 30, seed).outcomes, sample(instr, rho, 30, seed).outcomes)

        p = random_thermometer_params(rng)
        first = covariance_matrix(build_generators(thermometer_instrument(p), 2))
        moved = covariance_matrix(build_generators(thermometer_instrument(replace(p, omega=p.omega + 1.7)), 2))
        np.testing.assert_allclose(moved.means, first.means, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(moved.sigma, first.sigma, rtol=1e-9, atol=1e-12)


def test_initial_state_offset_halves_when_N_doubles(random_instrument):
    gen = build_generators(random_instrument, 1)
    rho0 = np.diag([1.0, 0.0])
    # long enough for E'^N to be negligible
    N = max(50, int(np.ceil(-25 / np.log1p(-random_instrument.spectral.spectral_gap))))

    def offset(n):
        return finite_N_moments(gen, rho0, n, 1).mean_s - gen.mean_s

    assert abs(offset(N)) > 1e-8
    assert offset(N) / offset(2 * N) == pytest.approx(2.0, rel=1e-6)
