import math

import numpy as np
import pytest

from hexloc import dsp
from hexloc.dsp import (CorrelationFunction, RealSignal, Spectrum, band_limit,
                        bandpass, correlate, correlate_many, cross_power,
                        inverse_real_spectrum, phat_weight, real_spectrum)

import oracles

FS = 44100.0


def white(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def whitened_pair_spectrum(x1, x2, band=None):
    n = dsp.correlation_fft_length(x1.size)
    g = cross_power(real_spectrum(RealSignal(x1, FS), n),
                    real_spectrum(RealSignal(x2, FS), n))
    if band is not None:
        g = band_limit(g, *band)
    return phat_weight(g)


# --- types ---------------------------------------------------------------

def test_real_signal_validation():
    with pytest.raises(ValueError):
        RealSignal(np.array([1.0]), FS)
    with pytest.raises(ValueError):
        RealSignal(np.array([1.0, np.nan]), FS)
    with pytest.raises(ValueError):
        RealSignal(np.ones(8), 0.0)


def test_spectrum_bin_count_enforced():
    with pytest.raises(ValueError):
        Spectrum(bins=np.ones(5, dtype=complex), bin_spacing=1.0,
                 origin_length=16)


def test_spectrum_real_dc_enforced():
    bins = np.ones(9, dtype=complex)
    bins[0] = 1j
    with pytest.raises(ValueError):
        Spectrum(bins=bins, bin_spacing=1.0, origin_length=16)


def test_correlation_function_odd_length():
    with pytest.raises(ValueError):
        CorrelationFunction(values=np.ones(4), lag_spacing=1.0 / FS)


# --- forward/inverse round trip ------------------------------------------

@pytest.mark.parametrize("n", [256, 255])
def test_round_trip_even_and_odd(n):
    x = white(n, seed=n)
    spec = real_spectrum(RealSignal(x, FS))
    back = inverse_real_spectrum(spec)
    assert np.max(np.abs(back - x)) / np.max(np.abs(x)) < 1e-9


# --- bandpass -------------------------------------------------------------

def test_bandpass_passband_tone_rms_preserved():
    t = np.arange(int(FS)) / FS
    x = np.sin(2 * np.pi * 1000.0 * t)
    y = bandpass(RealSignal(x, FS), 300.0, 3500.0).samples
    core = np.s_[4000:-4000]  # outside the filter's edge transients
    rms_in = oracles.sine_rms(x[core], 1000.0, FS)
    rms_out = oracles.sine_rms(y[core], 1000.0, FS)
    assert abs(20.0 * math.log10(rms_out / rms_in)) <= 1.0


def test_bandpass_stopband_tone_attenuated_40db():
    t = np.arange(int(FS)) / FS
    x = np.sin(2 * np.pi * 60.0 * t)
    y = bandpass(RealSignal(x, FS), 300.0, 3500.0).samples
    core = np.s_[4000:-4000]
    rms_in = oracles.sine_rms(x[core], 60.0, FS)
    rms_out = oracles.sine_rms(y[core], 60.0, FS)
    assert 20.0 * math.log10(rms_out / rms_in) <= -40.0


def test_bandpass_zero_input_zero_output():
    y = bandpass(RealSignal(np.zeros(2048), FS), 300.0, 3500.0)
    assert not np.any(y.samples)


def test_bandpass_preserves_length():
    x = white(5000, seed=3)
    y = bandpass(RealSignal(x, FS), 300.0, 3500.0)
    assert y.samples.size == x.size


def test_bandpass_rejects_bad_edges():
    sig = RealSignal(white(1024), FS)
    with pytest.raises(ValueError):
        bandpass(sig, -1.0, 3500.0)
    with pytest.raises(ValueError):
        bandpass(sig, 3500.0, 300.0)
    with pytest.raises(ValueError):
        bandpass(sig, 300.0, FS)


# --- cross power ----------------------------------------------------------

def test_cross_power_self_is_real_magnitude_squared():
    spec = real_spectrum(RealSignal(white(512, seed=1), FS))
    g = cross_power(spec, spec)
    np.testing.assert_allclose(g.bins.imag, 0.0, atol=1e-12)
    np.testing.assert_allclose(g.bins.real, np.abs(spec.bins) ** 2, rtol=1e-12)


def test_cross_power_delta_pair_phase():
    # delta at sample k against delta at 0: bin m carries phase -2 pi m k / N
    n, k = 64, 5
    a = np.zeros(n)
    a[k] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    g = cross_power(real_spectrum(RealSignal(a, FS)),
                    real_spectrum(RealSignal(b, FS)))
    expected = np.exp(-2j * np.pi * np.arange(n // 2 + 1) * k / n)
    np.testing.assert_allclose(g.bins / np.abs(g.bins), expected, atol=1e-9)


def test_cross_power_zero_partner_zeroes_output():
    a = real_spectrum(RealSignal(white(256, seed=2), FS))
    b = real_spectrum(RealSignal(np.zeros(256), FS))
    assert not np.any(cross_power(a, b).bins)


def test_cross_power_shape_mismatch():
    a = real_spectrum(RealSignal(white(256), FS))
    b = real_spectrum(RealSignal(white(128), FS))
    with pytest.raises(ValueError):
        cross_power(a, b)


# --- PHAT weighting -------------------------------------------------------

def test_phat_unit_magnitude_bin():
    spec = Spectrum(bins=np.array([5.0, 5.0, 5.0], dtype=complex),
                    bin_spacing=1.0, origin_length=4)
    out = phat_weight(spec)
    np.testing.assert_allclose(out.bins, 1.0 + 0.0j, atol=1e-12)


def test_phat_zero_bin_stays_zero():
    bins = np.array([1.0, 0.0, 2.0], dtype=complex)
    out = phat_weight(Spectrum(bins=bins, bin_spacing=1.0, origin_length=4),
                      epsilon=1e-12)
    assert out.bins[1] == 0.0


def test_phat_random_spectrum_unit_magnitudes():
    rng = np.random.default_rng(9)
    x1, x2 = rng.standard_normal(512), rng.standard_normal(512)
    g = cross_power(real_spectrum(RealSignal(x1, FS)),
                    real_spectrum(RealSignal(x2, FS)))
    out = phat_weight(g)
    mags = np.abs(out.bins[np.abs(g.bins) > 0])
    np.testing.assert_allclose(mags, 1.0, atol=1e-9)


def test_phat_idempotent():
    g = cross_power(real_spectrum(RealSignal(white(300, seed=4), FS)),
                    real_spectrum(RealSignal(white(300, seed=5), FS)))
    once = phat_weight(g)
    twice = phat_weight(once)
    np.testing.assert_allclose(twice.bins, once.bins, atol=1e-12)


def test_phat_rejects_bad_epsilon():
    g = real_spectrum(RealSignal(white(64), FS))
    with pytest.raises(ValueError):
        phat_weight(g, epsilon=0.0)


# --- correlate ------------------------------------------------------------

def test_correlate_identical_signals_peak_at_zero():
    x = white(2048, seed=6)
    phi = whitened_pair_spectrum(x, x)
    corr = correlate(phi, 1)
    assert int(np.argmax(corr.values)) == corr.center


def test_correlate_integer_delay_peak_matches_bruteforce():
    k = 7
    master = white(4096 + 2 * k, seed=7)
    x1 = master[k: 4096 + k]
    x2 = master[: 4096]  # x2[n] = x1[n - k]: channel 1 leads
    expected = oracles.brute_force_delay_samples(x1, x2, 20)
    assert expected == k  # oracle sanity
    phi = whitened_pair_spectrum(x1, x2)
    corr = correlate(phi, 1)
    assert int(np.argmax(corr.values)) - corr.center == k


def test_correlate_upsampled_peak_within_eighth_sample():
    k = 7
    master = white(4096 + 2 * k, seed=8)
    x1 = master[k: 4096 + k]
    x2 = master[: 4096]
    phi = whitened_pair_spectrum(x1, x2)
    corr = correlate(phi, 8)
    peak = int(np.argmax(corr.values)) - corr.center
    assert abs(peak / 8.0 - k) <= 1.0 / 8.0


@pytest.mark.parametrize("n,up", [(64, 1), (64, 4), (63, 1), (63, 3)])
def test_correlate_length_and_center(n, up):
    phi = phat_weight(cross_power(
        real_spectrum(RealSignal(white(n, seed=n), FS)),
        real_spectrum(RealSignal(white(n, seed=n + 1), FS))))
    # origin length here is the fft length, not n
    m = phi.origin_length * up
    corr = correlate(phi, up)
    expected_len = m - 1 if m % 2 == 0 else m
    assert corr.values.size == expected_len
    assert corr.lags[corr.center] == 0.0
    assert corr.lag_spacing == pytest.approx(1.0 / (FS * up))


@pytest.mark.parametrize("up", [1, 2, 8])
def test_correlate_lag_zero_equals_full_spectrum_mean(up):
    # inverse-transform identity: r(0) is the mean over the Hermitian
    # two-sided spectrum
    phi = whitened_pair_spectrum(white(500, seed=10), white(500, seed=11))
    n = phi.origin_length
    full = np.concatenate([phi.bins, np.conj(phi.bins[-2:0:-1])])
    assert full.size == n
    expected = float(np.mean(full).real)
    corr = correlate(phi, up)
    assert corr.values[corr.center] == pytest.approx(expected, abs=1e-9)


def test_correlate_time_shift_theorem():
    base = white(2048, seed=12)
    for k in (3, 11, 17):
        x1 = np.concatenate([base, np.zeros(k)])
        x2 = np.concatenate([np.zeros(k), base])
        phi = whitened_pair_spectrum(x1, x2)
        corr = correlate(phi, 1)
        assert int(np.argmax(corr.values)) - corr.center == k
        # and the mirrored delay moves the peak the other way
        phi_rev = whitened_pair_spectrum(x2, x1)
        corr_rev = correlate(phi_rev, 1)
        assert int(np.argmax(corr_rev.values)) - corr_rev.center == -k


def test_correlate_rejects_bad_factor():
    phi = whitened_pair_spectrum(white(64), white(64, seed=1))
    with pytest.raises(ValueError):
        correlate(phi, 0)


@pytest.mark.parametrize("up", [1, 3, 8])
@pytest.mark.parametrize("band", [None, (300.0, 3500.0)])
def test_windowed_correlate_matches_full(up, band):
    x1, x2 = white(3000, seed=20), white(3000, seed=21)
    phi = whitened_pair_spectrum(x1, x2, band)
    full = correlate(phi, up)
    win = correlate(phi, up, max_lag_steps=40)
    sl = full.values[full.center - 40: full.center + 41]
    np.testing.assert_allclose(win.values, sl, atol=1e-12)


def test_correlate_many_matches_singles():
    phis = [whitened_pair_spectrum(white(3000, seed=s), white(3000, seed=s + 50),
                                   (300.0, 3500.0)) for s in range(4)]
    batch = correlate_many(phis, 8, max_lag_steps=30)
    for phi, got in zip(phis, batch):
        single = correlate(phi, 8, max_lag_steps=30)
        np.testing.assert_allclose(got.values, single.values, atol=1e-12)
        assert got.lag_spacing == single.lag_spacing


def test_windowed_correlate_rejects_excessive_window():
    phi = whitened_pair_spectrum(white(64), white(64, seed=1))
    with pytest.raises(ValueError):
        correlate(phi, 1, max_lag_steps=10 ** 9)


# --- band gate ------------------------------------------------------------

def test_band_limit_zeroes_outside():
    spec = real_spectrum(RealSignal(white(1024, seed=13), FS))
    gated = band_limit(spec, 300.0, 3500.0)
    freqs = gated.frequencies
    outside = (freqs < 300.0) | (freqs > 3500.0)
    assert not np.any(gated.bins[outside])
    inside = ~outside
    np.testing.assert_allclose(gated.bins[inside], spec.bins[inside])
