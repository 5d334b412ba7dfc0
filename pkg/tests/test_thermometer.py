import math

import numpy as np
import pytest

from core.asymptotics import covariance_matrix, finite_N_moments
from core.instrument import build_generators
from core.linop import apply, spectral_decompose, validate_cptp
from core.trajectory import central_moment_scaling, enumerate_exact
from models import ModelError
from models.hidden_chain import (
    HiddenChain,
    closed_forms,
    cov_c_c,
    cov_s_c,
    expected_c,
    expected_s,
    mean_derivatives,
    sigma_limit,
    stationary_c,
    variance_s,
)
from models.thermometer import (
    ThermometerModel,
    ThermometerParams,
    bloch_vector,
    density_from_bloch,
    equilibrium_state,
    fisher_equilibrium_start,
    fisher_standard,
    initial_state,
    master_equation_channel,
    quantum_fisher_scan,
    sweep,
    sweep_points,
    sweep_row,
    thermal_channel,
    thermometer_instrument,
)

from conftest import random_thermometer_params


def test_parameter_validation():
    with pytest.raises(ModelError, match="below"):
        ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=0.5, tau=1.0, eta=0.1)
    with pytest.raises(ModelError, match="eta"):
        ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=1.0, eta=1.0)
    with pytest.raises(ModelError, match="tau"):
        ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=-1.0, eta=0.1)
    with pytest.raises(ModelError, match="finite"):
        ThermometerParams(omega=math.nan, gamma=1.0, gamma_beta=2.0, tau=1.0, eta=0.1)


def test_detailed_balance():
    T = 0.7
    p = ThermometerParams.from_temperature(omega=1.3, gamma=0.4, temperature=T, tau=1.0, eta=0.1)
    assert p.gamma_plus / p.gamma_minus == pytest.approx(math.exp(1.3 / T))
    assert p.n_th == pytest.approx(1 / (math.exp(1.3 / T) - 1))
    assert p.gamma_plus + p.gamma_minus == pytest.approx(p.gamma_beta)
    assert p.temperature() == pytest.approx(T)


def test_zero_temperature():
    p = ThermometerParams.from_temperature(omega=1.0, gamma=1.0, temperature=0.0, tau=1.0, eta=0.1)
    assert p.gamma_beta == 1.0
    assert p.gamma_minus == 0.0
    assert p.temperature() == 0.0


def test_thermal_channel_is_cptp_with_equilibrium_fixed_point(params):
    superop = thermal_channel(params)
    assert validate_cptp(superop).passed
    spectral = spectral_decompose(superop)
    assert spectral.classification == "Mixing"
    np.testing.assert_allclose(spectral.fixed_point, equilibrium_state(params), atol=1e-12)


def test_thermal_channel_solves_the_master_equation(params):
    np.testing.assert_allclose(thermal_channel(params), master_equation_channel(params), atol=1e-12)


def test_thermal_channel_rotates_and_damps_coherences(params):
    rho = initial_state(math.pi / 2)
    x, y, z = bloch_vector(apply(thermal_channel(params), rho))
    damp = math.exp(-params.gamma_beta * params.tau / 2)
    wt = params.omega * params.tau
    assert x == pytest.approx(damp * math.cos(wt))
    assert y == pytest.approx(damp * math.sin(wt))
    assert z == pytest.approx(-params.g * (1 - params.a))


def test_initial_state_angles():
    np.testing.assert_allclose(initial_state(0.0), np.diag([1, 0]), atol=1e-15)
    np.testing.assert_allclose(initial_state(math.pi), np.diag([0, 1]), atol=1e-15)
    np.testing.assert_allclose(bloch_vector(initial_state(math.pi / 2, math.pi / 2)), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(bloch_vector(density_from_bloch([0.1, -0.2, 0.3])), [0.1, -0.2, 0.3])


def test_projective_ground_state_readout_is_quantum_optimal():
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=3.0, tau=0.4, eta=0.0)
    standard = fisher_standard(p, initial_state(math.pi))
    assert standard.F > 0
    assert standard.F == pytest.approx(standard.F_Q, rel=1e-12)


def test_weak_readout_loses_information(params):
    standard = fisher_standard(params)
    assert 0 < standard.F < standard.F_Q


def test_quantum_fisher_scan_peaks_at_the_ground_state(params):
    thetas = np.linspace(0, math.pi, 7)
    scan = quantum_fisher_scan(params, thetas)
    assert scan[-1] == pytest.approx(fisher_standard(params, initial_state(math.pi)).F_Q)
    assert np.all(scan > 0)
    assert int(np.argmax(scan)) == len(thetas) - 1
    np.testing.assert_allclose(quantum_fisher_scan(params, thetas, phi=1.1), scan, rtol=1e-12)


def test_standard_fisher_matches_finite_differences(params):
    # F = sum_s (dp_s)^2 / p_s for the two outcomes after one waiting time from |down>
    h = 1e-6
    rho0 = initial_state(math.pi)

    def probs(gb):
        q = params.with_gamma_beta(gb)
        z = bloch_vector(apply(thermal_channel(q), rho0))[2]
        return np.array([1 + q.c * z, 1 - q.c * z]) / 2

    p0 = probs(params.gamma_beta)
    dp = (probs(params.gamma_beta + h) - probs(params.gamma_beta - h)) / (2 * h)
    assert fisher_standard(params, rho0).F == pytest.approx(np.sum(dp ** 2 / p0), rel=1e-6)


def test_equilibrium_start_formula(params):
    dz = (params.g / params.gamma_beta) * (1 - params.a)
    expected = params.c ** 2 * dz ** 2 / (1 - (params.c * params.g) ** 2)
    assert fisher_equilibrium_start(params) == pytest.approx(expected)


def test_gap_sum_matches_direct_sum():
    chain = HiddenChain(mu=-0.4, a=0.6, c=0.8)
    for m in (0, 1, 2, 6):
        direct = sum((m - d) * 0.6 ** d for d in range(1, m))
        assert chain.gap_sum(m) == pytest.approx(direct)


def test_product_mean_of_two_points():
    chain = HiddenChain(mu=-0.4, a=0.6, c=0.8)
    assert chain.product_mean((3, 3)) == 1.0
    assert chain.product_mean((2, 5)) == pytest.approx(chain.mean_c_star(3))


@pytest.mark.parametrize("N, L", [(5, 3), (12, 3), (9, 1)])
def test_closed_forms_match_generic_moments(params, thermometer, N, L):
    report = closed_forms(params, N, L)
    moments = finite_N_moments(build_generators(thermometer, L), None, N, L)
    assert report.mean_s == pytest.approx(moments.mean_s, abs=1e-12)
    assert report.var_s == pytest.approx(moments.var_s, rel=1e-10)
    np.testing.assert_allclose(report.mean_c, moments.mean_c, atol=1e-12)
    np.testing.assert_allclose(report.covariance(), moments.covariance(), rtol=1e-9, atol=1e-13)


def test_closed_forms_match_enumeration(params, thermometer):
    report = closed_forms(params, 6, 4)
    exact = enumerate_exact(thermometer, equilibrium_state(params), 6, 4)
    np.testing.assert_allclose(report.covariance(), exact.covariance(), atol=1e-12)
    assert report.regimes[(1, 2)] == "N>=l+l'"
    assert report.regimes[(3, 4)] == "l+l'>N"


def test_closed_forms_from_the_ground_state(params, thermometer):
    rho0 = initial_state(math.pi)
    report = closed_forms(params, 10, 2, rho0=rho0)
    moments = finite_N_moments(build_generators(thermometer, 2), rho0, 10, 2)
    assert report.mean_s == pytest.approx(moments.mean_s, abs=1e-12)
    assert report.var_s == pytest.approx(moments.var_s, rel=1e-10)
    np.testing.assert_allclose(report.mean_c, moments.mean_c, atol=1e-12)
    assert report.cov_sc is None
    with pytest.raises(ModelError):
        report.covariance()


def test_closed_form_limits(params, thermometer):
    report = closed_forms(params, 50, 3)
    asym = covariance_matrix(build_generators(thermometer, 3))
    assert report.mean_s_star == pytest.approx(asym.mean_s)
    np.testing.assert_allclose(report.mean_c_star, asym.mean_c, rtol=1e-10)
    assert report.sigma2 == pytest.approx(asym.sigma2)


def test_mean_derivatives_match_finite_differences(params):
    h = 1e-5
    plus = HiddenChain.from_params(params.with_gamma_beta(params.gamma_beta + h))
    minus = HiddenChain.from_params(params.with_gamma_beta(params.gamma_beta - h))

    def means(chain):
        return np.array([chain.mean_s_star] + [chain.mean_c_star(l) for l in (1, 2)])

    np.testing.assert_allclose(mean_derivatives(params, 2), (means(plus) - means(minus)) / (2 * h), rtol=1e-6)


def test_closed_forms_need_a_waiting_time():
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=0.0, eta=0.1)
    with pytest.raises(ModelError):
        closed_forms(p, 10, 1)


def test_model_builds_at_the_requested_temperature(params):
    model = ThermometerModel(params)
    instr = model(3.0)
    np.testing.assert_allclose(instr.ops, thermometer_instrument(params.with_gamma_beta(3.0)).ops)
    assert model.parameter == "gamma_beta"


def test_model_from_options_rejects_unknown_keys():
    with pytest.raises(ModelError):
        ThermometerModel.from_options({"omega": 1.0, "gamma": 1.0, "gamma_beta": 2.0, "tau": 1.0, "eta": 0.1, "foo": 1})


def test_sweep_points_order_and_validation():
    points = sweep_points(1.0, [1.5, 2.0], [0.5, 1.0], [0.1, 0.2])
    assert len(points) == 8
    assert [(p.gamma_beta, p.eta, p.tau) for p in points[:3]] == [(1.5, 0.1, 0.5), (1.5, 0.1, 1.0), (1.5, 0.2, 0.5)]
    with pytest.raises(ModelError):
        sweep_points(1.0, [2.0], [0.0], [0.1])


def test_sweep_row_compares_standard_and_sequential():
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=0.8, eta=0.2)
    row = sweep_row(p, L_max=2, include_equilibrium=True)
    expected = closed_forms(p, 10, 2)
    np.testing.assert_allclose(row.F_sequential, expected.fisher_per_N, rtol=1e-5)
    assert row.F_standard == pytest.approx(fisher_standard(p, initial_state(math.pi)).F)
    assert row.F_equilibrium == pytest.approx(fisher_equilibrium_start(p))

    out = row.as_dict()
    assert list(out)[:4] == ["gamma_ratio", "tau_gamma", "eta", "F_standard"]
    assert {"F0_per_N", "F2_per_N", "gain1", "gain2", "F_eq"} <= set(out)
    assert out["gain1"] == pytest.approx((row.F_sequential[1] - row.F_sequential[0]) / row.F_sequential[0])


def test_serial_sweep_matches_rows():
    rows = sweep(1.0, [2.0], [0.5], [0.1, 0.3], L_max=1)
    assert [r.eta for r in rows] == [0.1, 0.3]
    assert rows[0].F_sequential.shape == (2,)


def _assert_same_spectrum(computed, expected, atol):
    remaining = list(np.asarray(computed, dtype=complex))
    assert len(remaining) == len(expected)
    for value in expected:
        k = int(np.argmin([abs(r - value) for r in remaining]))
        assert abs(remaining.pop(k) - value) < atol, (computed, expected)


GRID_5 = [(gbt, wt) for gbt in np.linspace(0.1, 5.0, 5) for wt in np.linspace(0.0, 3.0, 5)]


@pytest.mark.parametrize("eta", [0.0, 0.3, math.pi / 4])
def test_average_channel_spectrum(eta):
    tau = 0.5
    for gbt, wt in GRID_5:
        p = ThermometerParams(omega=wt / tau, gamma=0.1, gamma_beta=gbt / tau, tau=tau, eta=eta)
        rotating = np.exp(-(gbt / 2 + 1j * wt))
        channel = [1.0, math.exp(-gbt), rotating, np.conj(rotating)]
        _assert_same_spectrum(np.linalg.eigvals(thermal_channel(p)), channel, 1e-10)
        # the measurement scales the coherence pair by sin 2eta
        average = channel[:2] + [math.sin(2 * eta) * x for x in channel[2:]]
        _assert_same_spectrum(np.linalg.eigvals(thermometer_instrument(p).average), average, 1e-10)


def test_measurement_shrinks_coherence_eigenvalues(params):
    def coherence_modulus(superop):
        return max(abs(x) for x in np.linalg.eigvals(superop) if abs(abs(x) - params.a) > 1e-6 and abs(x - 1) > 1e-6)

    ratio = coherence_modulus(thermometer_instrument(params).average) / coherence_modulus(thermal_channel(params))
    assert ratio == pytest.approx(math.sin(0.6), rel=1e-10)


@pytest.mark.parametrize("N, L", [(8, 3), (5, 3), (4, 3)])
def test_closed_form_formulas_against_oracles(rng, N, L):
    for _ in range(10):
        p = random_thermometer_params(rng)
        instr = thermometer_instrument(p)
        moments = finite_N_moments(build_generators(instr, L), None, N, L)
        exact = enumerate_exact(instr, instr.spectral.fixed_point, N, L)
        cov = exact.covariance()

        assert expected_s(p, N) == pytest.approx(exact.mean_s, abs=1e-10)
        assert variance_s(p, N) == pytest.approx(exact.var_s, abs=1e-10)
        for l in range(1, L + 1):
            assert expected_c(p, N, l) == pytest.approx(exact.mean_c[l - 1], abs=1e-10)
            assert cov_s_c(p, N, l) == pytest.approx(cov[0, l], abs=1e-10)
            for lp in range(1, L + 1):
                assert cov_c_c(p, N, l, lp) == pytest.approx(cov[l, lp], abs=1e-10)
        np.testing.assert_allclose(moments.covariance(), cov, atol=1e-10)

        ground = enumerate_exact(instr, initial_state(math.pi), N, L)
        assert expected_s(p, N, -1.0) == pytest.approx(ground.mean_s, abs=1e-10)
        assert variance_s(p, N, -1.0) == pytest.approx(ground.var_s, abs=1e-10)
        np.testing.assert_allclose([expected_c(p, N, l, -1.0) for l in range(1, L + 1)], ground.mean_c, atol=1e-10)


def test_single_measurement_variance(rng):
    for _ in range(10):
        p = random_thermometer_params(rng)
        z0 = rng.uniform(-1, 1)
        assert variance_s(p, 1, z0) == pytest.approx(1 - expected_s(p, 1, z0) ** 2, abs=1e-12)


def test_lag_zero_correlation_is_cos_squared(params):
    assert stationary_c(params, 0) == pytest.approx(params.c ** 2)
    assert stationary_c(params, 3) == pytest.approx(HiddenChain.from_params(params).mean_c_star(3))


def test_sigma_limit_matches_generic_and_chain(rng):
    for _ in range(10):
        p = random_thermometer_params(rng)
        generic = covariance_matrix(build_generators(thermometer_instrument(p), 3)).sigma
        np.testing.assert_allclose(sigma_limit(p, 3), generic, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(sigma_limit(p, 3), HiddenChain.from_params(p).sigma_matrix(3), rtol=1e-9, atol=1e-12)


def test_closed_forms_agree_with_the_chain(params):
    for N, L in [(10, 3), (5, 3), (40, 2)]:
        assert closed_forms(params, N, L).chain_deviation < 1e-12


def test_closed_forms_for_a_deterministic_record(capsys):
    # zero temperature and a projective readout: every outcome is -1
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=1.0, tau=0.5, eta=0.0)
    report = closed_forms(p, 10, 2)
    assert report.var_s == 0.0
    assert report.sigma2 == 0.0
    assert report.mean_s == pytest.approx(-1.0)
    assert report.singular
    assert math.isinf(report.F0_per_N)
    assert np.all(np.isinf(report.fisher_per_N))
    assert "deterministic" in capsys.readouterr().err


def test_statistics_do_not_depend_on_omega(params):
    reports = [
        covariance_matrix(build_generators(thermometer_instrument(ThermometerParams(
            omega=omega, gamma=params.gamma, gamma_beta=params.gamma_beta, tau=params.tau, eta=params.eta,
        )), 3))
        for omega in (0.0, 1.0, 3.7)
    ]
    for report in reports[1:]:
        assert report.sigma2 == pytest.approx(reports[0].sigma2, rel=1e-12)
        np.testing.assert_allclose(report.sigma, reports[0].sigma, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(report.means, reports[0].means, rtol=1e-12, atol=1e-14)


def test_unbiased_readout_gives_unit_variance():
    for tau in (0.1, 0.5, 3.0):
        p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.5, tau=tau, eta=math.pi / 4)
        report = covariance_matrix(build_generators(thermometer_instrument(p), 2))
        assert report.sigma2 == pytest.approx(1.0, abs=1e-12)
        assert report.mean_s == pytest.approx(0.0, abs=1e-12)


def test_initial_state_offset_of_the_closed_form_halves(params):
    offsets = [expected_s(params, N, -1.0) - expected_s(params, N) for N in (50, 100, 200)]
    assert offsets[0] / offsets[1] == pytest.approx(2.0, rel=1e-12)
    assert offsets[1] / offsets[2] == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("N", [1000, 10000])
def test_finite_N_covariance_converges_to_sigma(params, thermometer, N):
    gen = build_generators(thermometer, 2)
    sigma = covariance_matrix(gen).sigma
    np.testing.assert_allclose(N * finite_N_moments(gen, None, N, 2).covariance(), sigma, rtol=10 / N)


def test_ground_state_readout_is_quantum_optimal_over_the_grid():
    for ratio in (1.2, 2.0, 5.0):
        for tau_gb in np.linspace(0.1, 5.0, 9):
            p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=ratio, tau=tau_gb / ratio, eta=0.0)
            standard = fisher_standard(p, initial_state(math.pi))
            assert abs(standard.F - standard.F_Q) / standard.F_Q < 1e-9


def test_moments_of_S_scale_like_a_gaussian():
    p = ThermometerParams(omega=1.0, gamma=1.0, gamma_beta=2.0, tau=1.0, eta=0.3)
    instr = thermometer_instrument(p)
    rho = instr.spectral.fixed_point
    third = central_moment_scaling(instr, rho, [4, 6, 8, 10, 12], 3)
    assert third.slope == pytest.approx(-2.0, abs=0.2)

    asym = covariance_matrix(build_generators(instr, 1))
    Ns = np.array([8, 10, 12])
    ratios = np.array([
        n ** 2 * enumerate_exact(instr, rho, int(n)).central_moment_s(4, about=asym.mean_s) / (3 * asym.sigma2 ** 2)
        for n in Ns
    ])
    assert ratios[-1] == pytest.approx(1.0, abs=0.15)
    # extrapolate the ratio linearly in 1/N
    slope, intercept = np.polyfit(1.0 / Ns, ratios, 1)
    assert slope < 0
    assert intercept == pytest.approx(1.0, abs=0.15)


def test_projective_sweep_never_beats_the_standard_strategy():
    rows = sweep(1.0, [1.5, 2.0, 5.0], [0.1, 0.5, 1.0, 5.0], [0.0], L_max=2)
    for row in rows:
        assert row.F_sequential[0] <= row.F_standard * (1 + 1e-10)
        assert row.F_sequential[-1] <= row.F_standard * (1 + 1e-10)
        assert row.gains[1] < 1e-8
    assert max(row.gains[0] for row in rows) > 0


def test_weak_low_temperature_sweep_can_beat_the_standard_strategy():
    rows = sweep(1.0, [1.05], [0.5, 1.0], [0.3], L_max=2)
    for row in rows:
        assert row.F_sequential[0] > row.F_standard
        assert np.all(np.diff(row.F_sequential) >= 0)
