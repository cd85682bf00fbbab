import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcapacity.ar import (
    ArModel,
    DegenerateSignalError,
    SignalVector,
    SpectrumEstimate,
    UnstableModelError,
    aic_from_errors,
    aic_score,
    autocovariance,
    burg_estimate,
    burg_recursion,
    is_stable,
    psd_of_model,
    reflection_to_ar,
    select_order,
    synthesize,
)
from arcapacity.distance import avg_periodogram


def ar1_psd(alpha, var, f):
    return var / (1.0 - 2.0 * alpha * np.cos(2 * np.pi * f) + alpha * alpha)


# -- types -----------------------------------------------------------------

def test_model_validation():
    with pytest.raises(ValueError):
        ArModel([0.5], 0.0)
    with pytest.raises(ValueError):
        ArModel([np.nan], 1.0)
    m = ArModel([0.5, -0.2], 2.0)
    assert m.order == 2
    np.testing.assert_array_equal(m.denominator, [1.0, -0.5, 0.2])
    assert ArModel.from_denominator(m.denominator, 2.0) == m


def test_model_dict_round_trip():
    m = ArModel([0.25, -0.125], 1.5)
    assert ArModel.from_dict(m.to_dict()) == m
    assert m.to_dict() == {"order": 2, "coeffs": [0.25, -0.125], "noise_variance": 1.5}
    with pytest.raises(ValueError):
        ArModel.from_dict({"order": 3, "coeffs": [0.1], "noise_variance": 1.0})


def test_spectrum_rejects_non_positive():
    with pytest.raises(ValueError):
        SpectrumEstimate([1.0, 0.0])
    with pytest.raises(ValueError):
        SpectrumEstimate([1.0, np.inf])


def test_signal_vector_rejects_bad_input():
    with pytest.raises(ValueError):
        SignalVector([])
    with pytest.raises(ValueError):
        SignalVector([1.0, np.nan])


# -- stability ---------------------------------------------------------------

@pytest.mark.parametrize(
    "coeffs, expected",
    [([0.5], True), ([1.0], False), ([0.6, -0.3], True), ([], True), ([0.9999999], False)],
)
def test_is_stable(coeffs, expected):
    assert is_stable(ArModel(coeffs, 1.0)) is expected


def test_is_stable_quadratic_oracle():
    # x_t = 0.6 x_{t-1} - 0.3 x_{t-2}: roots of z^2 - 0.6 z + 0.3
    disc = complex(0.6**2 - 4 * 0.3)
    roots = [(0.6 + s * disc**0.5) / 2 for s in (1, -1)]
    assert max(abs(r) for r in roots) == pytest.approx(math.sqrt(0.3))
    assert is_stable(ArModel([0.6, -0.3], 1.0))


@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=12))
def test_reflection_coefficients_give_stable_models(refl):
    assert is_stable(reflection_to_ar(refl), margin=0.0)


# -- psd -------------------------------------------------------------------

def test_psd_white_noise_is_flat():
    np.testing.assert_allclose(psd_of_model(ArModel([], 1.0), 8).values, np.ones(8))


def test_psd_ar1_at_dc():
    assert psd_of_model(ArModel([0.5], 1.0), 16).values[0] == pytest.approx(4.0)


def test_psd_matches_closed_form_ar1():
    f = np.arange(64) / 64
    np.testing.assert_allclose(psd_of_model(ArModel([0.7], 2.0), 64).values, ar1_psd(0.7, 2.0, f))


def test_psd_mean_equals_simulated_variance():
    model = ArModel([0.6, -0.3], 2.0)
    spectrum = psd_of_model(model, 1024)
    x = synthesize(model, 1_000_000, seed=11)
    assert spectrum.values.mean() == pytest.approx(np.var(x.samples), rel=0.01)
    assert spectrum.values.mean() == pytest.approx(autocovariance(model, 0)[0], rel=1e-9)


def test_psd_rejects_unstable():
    with pytest.raises(UnstableModelError):
        psd_of_model(ArModel([1.0], 1.0), 8)
    with pytest.raises(ValueError):
        psd_of_model(ArModel([0.1], 1.0), 1)


def test_psd_is_conjugate_symmetric():
    assert psd_of_model(ArModel([0.4, 0.3, -0.2], 1.0), 33).is_conjugate_symmetric()


def test_psd_order_exceeding_grid():
    model = reflection_to_ar([0.3] * 10)
    coarse = psd_of_model(model, 4).values
    fine = psd_of_model(model, 64).values
    np.testing.assert_allclose(coarse, fine[::16])


@settings(max_examples=50)
@given(st.lists(st.floats(-0.8, 0.8), min_size=0, max_size=8), st.floats(0.01, 100.0))
def test_psd_strictly_positive(refl, var):
    assert np.all(psd_of_model(reflection_to_ar(refl, var), 128).values > 0)


# -- autocovariance ------------------------------------------------------------

def test_autocovariance_ar1_closed_form():
    r = autocovariance(ArModel([0.8], 1.0), 5)
    np.testing.assert_allclose(r, 0.8 ** np.arange(6) / (1 - 0.64))


def test_autocovariance_matches_inverse_fft_of_psd():
    model = ArModel([0.5, -0.4, 0.2], 1.3)
    r = autocovariance(model, 10)
    r_fft = np.fft.ifft(psd_of_model(model, 1 << 14).values).real[:11]
    np.testing.assert_allclose(r, r_fft, rtol=1e-9, atol=1e-12)


# -- synthesize ---------------------------------------------------------------

def test_synthesize_white_noise_variance():
    variances = [np.var(synthesize(ArModel([], 1.0), 100_000, s).samples) for s in range(20)]
    assert all(0.98 <= v <= 1.02 for v in variances)


def test_synthesize_ar1_lag_one_autocorrelation():
    x = synthesize(ArModel([0.9], 1.0), 100_000, seed=3, burn_in=1000).samples
    x = x - x.mean()
    rho = np.dot(x[1:], x[:-1]) / np.dot(x, x)
    assert rho == pytest.approx(0.9, abs=0.01)


def test_synthesize_deterministic():
    m = ArModel([0.5, 0.2], 1.0)
    a = synthesize(m, 500, seed=42, burn_in=100)
    b = synthesize(m, 500, seed=42, burn_in=100)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert len(a) == 500
    c = synthesize(m, 500, seed=43, burn_in=100)
    assert not np.array_equal(a.samples, c.samples)


def test_synthesize_rejects_unstable():
    with pytest.raises(UnstableModelError):
        synthesize(ArModel([1.2], 1.0), 10, seed=0)


def test_averaged_periodogram_matches_model_psd():
    model = ArModel([0.6, -0.3], 1.0)
    n, reps = 4096, 2000
    rng = np.random.default_rng(5)
    from arcapacity.simulate import sample_vectors

    pav = avg_periodogram(list(sample_vectors(model, reps, n, rng))).values
    psd = psd_of_model(model, n).values
    assert np.max(np.abs(pav / psd - 1)) < 0.10


# -- burg -------------------------------------------------------------------

def test_burg_recovers_ar1():
    x = synthesize(ArModel([0.5], 1.0), 100_000, seed=0)
    est = burg_estimate(x, 1)
    assert 0.49 <= est.coeffs[0] <= 0.51
    assert est.noise_variance == pytest.approx(1.0, rel=0.02)


def test_burg_white_noise():
    x = synthesize(ArModel([], 2.0), 100_000, seed=1)
    est = burg_estimate(x, 4)
    assert np.all(np.abs(est.coeffs) < 0.05)
    psd = psd_of_model(est, 256).values
    assert np.all(np.abs(psd / 2.0 - 1) < 0.10)


def test_burg_matches_reference_recursion():
    # independent reference: textbook Burg with explicit lists
    x = synthesize(ArModel([0.3, 0.4], 1.0), 300, seed=9).samples
    x = x - x.mean()
    f, b = list(x), list(x)
    a = [1.0]
    for m in range(1, 4):
        num = sum(f[t] * b[t - 1] for t in range(m, len(x)))
        den = sum(f[t] ** 2 + b[t - 1] ** 2 for t in range(m, len(x)))
        k = -2 * num / den
        nf = f[:]
        nb = b[:]
        for t in range(m, len(x)):
            nf[t] = f[t] + k * b[t - 1]
            nb[t] = b[t - 1] + k * f[t]
        f, b = nf, nb
        pad = a + [0.0]
        a = [pad[i] + k * pad[m - i] for i in range(m + 1)]
    est = burg_estimate(x, 3)
    np.testing.assert_allclose(est.denominator, a, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 15))
def test_burg_output_is_stable(seed, order):
    x = np.random.default_rng(seed).standard_normal(64).cumsum()  # strongly non-white
    assert is_stable(burg_estimate(x, order), margin=0.0)


def test_burg_rejects_constant_and_bad_order():
    with pytest.raises(DegenerateSignalError):
        burg_estimate(np.full(100, 3.0), 2)
    with pytest.raises(DegenerateSignalError):
        burg_estimate(np.zeros(100), 2)
    with pytest.raises(ValueError):
        burg_estimate(np.arange(10.0), 10)


def test_burg_error_history_is_non_increasing():
    x = synthesize(ArModel([0.5, -0.3], 1.0), 2000, seed=2)
    _, errors = burg_recursion(x, 10)
    assert np.all(np.diff(errors) <= 0)


# -- aic / order selection ------------------------------------------------------

def test_aic_formula():
    x = synthesize(ArModel([0.5], 1.0), 1000, seed=4)
    _, errors = burg_recursion(x, 3)
    assert aic_score(x, 3) == pytest.approx(1000 * math.log(errors[3]) + 6)


def test_aic_penalty_increases_with_order():
    errors = np.full(6, 0.7)
    aic = aic_from_errors(100, errors, range(1, 6))
    assert np.all(np.diff(aic) == 2.0)


def white_noise_selection_oracle(max_order=20, draws=400_000, seed=0):
    # Asymptotically AIC(p) - AIC(1) = -sum_{j=2..p} (chi2_1 - 2) for white noise.
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((draws, max_order - 1)) ** 2 - 2
    gain = np.concatenate([np.zeros((draws, 1)), np.cumsum(steps, axis=1)], axis=1)
    return float(np.mean(np.maximum(gain[:, 0], gain[:, 1]) >= gain[:, 2:].max(axis=1)))


def test_aic_white_noise_selects_low_order():
    expected = white_noise_selection_oracle()
    assert expected == pytest.approx(0.824, abs=0.005)
    trials = 200
    hits = 0
    for s in range(trials):
        x = synthesize(ArModel([], 1.0), 2048, seed=1000 + s)
        _, errors = burg_recursion(x, 20)
        hits += int(np.argmin(aic_from_errors(2048, errors, range(1, 21)))) + 1 <= 2
    se = math.sqrt(expected * (1 - expected) / trials)
    assert abs(hits / trials - expected) < 3 * se


def test_aic_ar4_curve_drops_then_flattens():
    model = reflection_to_ar([0.7, -0.5, 0.4, -0.3])
    curves = []
    for s in range(20):
        _, errors = burg_recursion(synthesize(model, 4096, seed=s), 12)
        curves.append(aic_from_errors(4096, errors, range(1, 13)))
    steps = np.diff(np.median(curves, axis=0))
    assert np.all(steps[:3] < 0)
    assert np.all(steps[3:] > -5.0)


def test_select_order_single_candidate():
    x = synthesize(ArModel([0.5], 1.0), 500, seed=0)
    assert select_order([x], [7]).order == 7


def test_select_order_empty():
    with pytest.raises(ValueError):
        select_order([], [1, 2])
    with pytest.raises(ValueError):
        select_order([np.arange(10.0)], [])


def test_select_order_ar2_populations():
    from arcapacity.simulate import gen_population

    chosen = []
    for p in range(20):
        pop = gen_population(4, 2, seed=p)
        xs = [synthesize(m, 1024, seed=100 * p + i) for i, m in enumerate(pop.models)]
        chosen.append(select_order(xs, range(1, 21)).order)
    assert set(chosen) <= {2, 3, 4}


def test_select_order_reports_curve():
    x = synthesize(ArModel([0.5, -0.3], 1.0), 2048, seed=0)
    sel = select_order([x], [1, 2, 3, 4])
    assert sel.candidate_orders == [1, 2, 3, 4]
    assert len(sel.mean_aic) == 4
    assert sel.order == 2
