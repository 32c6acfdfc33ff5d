import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from kuramoto_imf.spectral import (AliasingError, ComplexSeries, GaussianFreq, GridMismatchError,
                                   Kubo, Lorentzian, Spectrum, analytic_spectrum, average_spectra,
                                   check_aliasing, common_band, frequency_grid, half_height_width,
                                   mean_periodogram, periodogram, read_spectrum, smooth_spectrum,
                                   spectral_distance, write_spectrum)
from kuramoto_imf.streams import stream

# Kubo(0.5) vs Kubo(0.55) over |omega| <= 200, adaptive quadrature (scipy.integrate.quad)
KUBO_PAIR_DISTANCE = 0.06060033108006818

def test_single_tone_lands_in_one_bin():
    n, dt = 1000, 0.1
    T = n * dt
    w0 = 2 * np.pi * 7 / T
    t = dt * np.arange(n)
    s = periodogram(ComplexSeries(np.exp(1j * w0 * t), dt))
    k = int(np.argmax(s.values))
    assert s.omega[k] == pytest.approx(w0)
    assert s.values[k] == pytest.approx(T)
    rest = np.delete(s.values, k)
    assert np.max(rest) < 1e-20 * T


def test_negative_tone_peaks_at_negative_frequency():
    n, dt = 512, 0.05
    w0 = -2 * np.pi * 11 / (n * dt)
    s = periodogram(ComplexSeries(np.exp(1j * w0 * dt * np.arange(n)), dt))
    assert s.omega[np.argmax(s.values)] == pytest.approx(w0)


def test_white_noise_is_flat_at_sample_dt():
    n, dt, reps = 1024, 0.2, 200
    rng = stream(1, "white")
    x = (rng.standard_normal((n, reps)) + 1j * rng.standard_normal((n, reps))) / math.sqrt(2)
    s = mean_periodogram(x, dt)
    assert abs(s.values.mean() / dt - 1.0) < 0.02


def test_grid_convention():
    w = frequency_grid(8, 0.5)
    assert w[0] == pytest.approx(-4 * 2 * np.pi / 4.0)
    assert w[-1] == pytest.approx(3 * 2 * np.pi / 4.0)
    assert 0.0 in w
    assert len(frequency_grid(7, 1.0)) == 7


def test_nonuniform_times_rejected():
    with pytest.raises(ValueError):
        ComplexSeries.from_samples([0.0, 0.1, 0.25], [1, 1, 1])
    s = ComplexSeries.from_samples([1.0, 1.5, 2.0], [1, 2, 3])
    assert s.dt == pytest.approx(0.5) and s.t0 == 1.0
    with pytest.raises(ValueError):
        periodogram(ComplexSeries([1.0], 1.0))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.integers(4, 64), elements=st.floats(-np.pi, np.pi)),
       st.floats(0.01, 2.0))
def test_unit_pointer_power_is_one(phases, dt):
    s = periodogram(ComplexSeries(np.exp(1j * phases), dt))
    assert s.total_power() == pytest.approx(1.0, rel=1e-12)
    assert np.all(s.values >= 0)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.complex128, st.integers(2, 50),
                  elements=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)),
       st.integers(0, 100))
def test_circular_shift_invariance(x, shift):
    dt = 0.3
    a = periodogram(ComplexSeries(x, dt)).values
    b = periodogram(ComplexSeries(np.roll(x, shift), dt)).values
    scale = max(np.max(a), 1e-300)
    assert np.max(np.abs(a - b)) <= 1e-10 * scale + 1e-300


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.complex128, st.integers(2, 50),
                  elements=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)))
def test_conjugation_reflects_spectrum(x):
    dt = 0.1
    n = len(x)
    a = periodogram(ComplexSeries(x, dt))
    b = periodogram(ComplexSeries(np.conj(x), dt))
    # reflect: bin j maps to -j modulo n on the ascending grid
    j = np.arange(-(n // 2), n - n // 2)
    idx = (-j + n // 2) % n
    np.testing.assert_allclose(b.values, a.values[idx], rtol=1e-10, atol=1e-12 * max(a.values.max(), 1))


def test_smoothing_identity_and_constant():
    s = Spectrum(frequency_grid(100, 0.5), np.arange(100.0))
    same = smooth_spectrum(s, s.spacing)
    np.testing.assert_array_equal(same.values, s.values)
    flat = Spectrum(frequency_grid(1000, 0.1), np.full(1000, 3.5))
    sm = smooth_spectrum(flat, 2 * np.pi / 10)
    np.testing.assert_allclose(sm.values, 3.5, rtol=1e-14)


def test_smoothing_spike_height():
    n, dt = 1000, 0.1
    T = n * dt
    s = Spectrum(frequency_grid(n, dt), np.zeros(n))
    s.values[n // 2 + 20] = T  # omega = 20 * domega, a multiple of m = 5
    sm = smooth_spectrum(s, 5 * s.spacing)
    assert sm.values.max() == pytest.approx(T / 5)


def test_smoothing_grid_alignment_across_windows():
    a = smooth_spectrum(Spectrum(frequency_grid(10_000, 0.1), np.ones(10_000)))
    b = smooth_spectrum(Spectrum(frequency_grid(40_000, 0.25), np.ones(40_000)))
    a2, b2 = common_band(a, b)
    assert len(a2) == len(b2) > 100
    assert a2.spacing == pytest.approx(2 * np.pi / 100)


def test_smoothing_rejects_finer_target_and_bad_tiling():
    s = Spectrum(frequency_grid(100, 0.5), np.ones(100))
    with pytest.raises(ValueError):
        smooth_spectrum(s, s.spacing / 2)
    with pytest.raises(ValueError):
        smooth_spectrum(s, 3 * s.spacing)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 3, 4, 5, 8, 10]), st.integers(2, 40),
       st.integers(0, 2**32 - 1))
def test_smoothing_conserves_power(m, groups, seed):
    n = m * groups
    if n < 2:
        n, groups = 2 * m, 2
    values = stream(seed, "sm").exponential(size=n)
    s = Spectrum(frequency_grid(n, 0.37), values)
    sm = smooth_spectrum(s, m * s.spacing)
    assert sm.total_power() == pytest.approx(s.total_power(), rel=1e-12)


def test_average_spectra():
    g = frequency_grid(10, 1.0)
    a = Spectrum(g, np.ones(10))
    assert np.array_equal(average_spectra([a]).values, a.values)
    assert np.array_equal(average_spectra([a, a]).values, a.values)
    b = Spectrum(g, 3 * np.ones(10))
    np.testing.assert_allclose(average_spectra([a, b]).values, 2.0)
    with pytest.raises(GridMismatchError):
        average_spectra([a, Spectrum(frequency_grid(10, 0.5), np.ones(10))])
    with pytest.raises(ValueError):
        average_spectra([])


def test_uncoupled_gaussian_rotators_average_to_gaussian():
    n_osc, n, dt = 4000, 2000, 0.5
    freqs = stream(2, "rot").standard_normal(n_osc)
    t = dt * np.arange(n)
    phase0 = stream(2, "phase").uniform(0, 2 * np.pi, n_osc)
    x = np.exp(1j * (np.outer(t, freqs) + phase0))
    s = smooth_spectrum(mean_periodogram(x, dt), 2 * np.pi / 20)
    ref = analytic_spectrum(GaussianFreq(1.0), s.omega)
    assert spectral_distance(s, ref) < 0.1


def test_analytic_values():
    g = np.array([0.0])
    assert analytic_spectrum(Kubo(0.5), g).values[0] == pytest.approx(4.0)
    assert analytic_spectrum(GaussianFreq(1.0), g).values[0] == pytest.approx(math.sqrt(2 * math.pi))
    assert analytic_spectrum(Lorentzian(2, 20), g).values[0] == pytest.approx(2 / math.pi**2)
    with pytest.raises(ValueError):
        analytic_spectrum(Kubo(0.0), g)


def test_spectral_distance_examples():
    g = frequency_grid(64, 0.1)
    b = analytic_spectrum(Lorentzian(2, 20), g)
    assert spectral_distance(b, b) == 0.0
    assert spectral_distance(b * 2.0, b) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        spectral_distance(b, b * 0.0)
    with pytest.raises(GridMismatchError):
        spectral_distance(b, Spectrum(frequency_grid(32, 0.1), np.ones(32)))


def test_kubo_pair_distance_against_quadrature():
    T, dt = 10_000.0, np.pi / 400.0
    n = int(round(T / dt))
    g = frequency_grid(n, T / n)
    a = analytic_spectrum(Kubo(0.5), g)
    b = analytic_spectrum(Kubo(0.55), g)
    assert spectral_distance(a, b, band=200.0) == pytest.approx(KUBO_PAIR_DISTANCE, abs=1e-5)


def test_aliasing_guard():
    g = frequency_grid(100, 0.1)
    narrow = analytic_spectrum(Kubo(0.01), g)
    assert check_aliasing(narrow) < 0.01
    with pytest.raises(AliasingError):
        check_aliasing(Spectrum(g, np.ones(100)))


def test_half_height_width():
    g = frequency_grid(2000, 0.05)
    s = analytic_spectrum(Kubo(0.5), g)
    # Lorentzian full width at half maximum is 2D
    assert half_height_width(s) == pytest.approx(1.0, rel=1e-3)


def test_spectrum_file_roundtrip(tmp_path):
    rng = stream(3, "io")
    s = Spectrum(frequency_grid(33, 0.7), rng.exponential(size=33) * 1e-7)
    p = write_spectrum(tmp_path / "s.csv", s, {"seed": 3, "a": np.float64(0.1)})
    back, meta = read_spectrum(p)
    assert np.array_equal(back.omega, s.omega) and np.array_equal(back.values, s.values)
    assert meta == {"seed": 3, "a": 0.1}
