"""Complex Gaussian noise with a prescribed two-sided spectrum.

Each frequency bin gets an independent coefficient ``(G + i G') sqrt(S T / 2)``
and the series is the inverse of the transform used by
:func:`kuramoto_imf.spectral.periodogram`, so the periodogram of the output
has expectation ``S`` in every bin. The series is periodic with period T.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .spectral import ComplexSeries, Spectrum


def coefficient_scale(target: Spectrum, window: float) -> np.ndarray:
    """Per-bin amplitude ``sqrt(S T / 2)`` in ascending frequency order."""
    values = np.asarray(target.values)
    if np.any(values < 0):
        raise ValueError("target spectrum has negative values")
    if not np.isclose(target.window, window, rtol=1e-9):
        raise ValueError(f"target grid implies window {target.window:.6g}, requested {window:.6g}")
    return np.sqrt(values * (window / 2.0))


def draw_coefficients(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal((2, n))
    return g[0] + 1j * g[1]


def synthesize(scale: np.ndarray, gauss: np.ndarray, window: float) -> np.ndarray:
    """Time series from unit Gaussian coefficients ``gauss`` (last axis = bins)."""
    n = scale.shape[-1]
    coeffs = np.fft.ifftshift(gauss * scale, axes=-1)
    return sfft.ifft(coeffs, axis=-1) * (n / window)


def noise_from_spectrum(target: Spectrum, window: float, stream: np.random.Generator) -> ComplexSeries:
    scale = coefficient_scale(target, window)
    n = len(target)
    values = synthesize(scale, draw_coefficients(stream, n), window)
    return ComplexSeries(values, window / n)
