"""Two-sided power spectra of complex series.

Conventions used throughout the package:

* a series of ``n`` samples spaced ``dt`` spans the window ``T = n * dt``;
* the frequency grid is ``omega_j = 2 pi j / T`` for ``j`` in ``[-n//2, n - n//2)``;
* the finite-time transform is ``x~(omega) = dt * sum_t x(t) exp(-i omega t)``
  so a pointer rotating at ``+omega0`` puts its power at ``+omega0``;
* the periodogram is ``S(omega) = |x~(omega)|^2 / T``, in units of time.

With these conventions ``sum_j S_j * domega / (2 pi)`` equals the mean of
``|x|^2`` exactly (Parseval), i.e. 1 for any unit-modulus pointer.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi
DEFAULT_BIN = TWO_PI / 100.0


class GridMismatchError(ValueError):
    pass


class AliasingError(RuntimeError):
    pass


@dataclass
class ComplexSeries:
    """Uniformly sampled complex series starting at ``t0``."""

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.dt <= 0:
            raise ValueError("sample spacing must be positive")

    @classmethod
    def from_samples(cls, times, values) -> "ComplexSeries":
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or times.shape[0] < 2:
            raise ValueError("need at least two sample times")
        steps = np.diff(times)
        dt = float(np.mean(steps))
        if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
            raise ValueError("sample times are not uniformly spaced")
        return cls(values, dt, float(times[0]))

    def __len__(self):
        return self.values.shape[-1]

    @property
    def window(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


@dataclass
class Spectrum:
    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.omega.shape != self.values.shape or self.omega.ndim != 1:
            raise ValueError("omega and values must be 1-D arrays of equal length")

    def __len__(self):
        return self.omega.shape[0]

    @property
    def spacing(self) -> float:
        return float(self.omega[1] - self.omega[0])

    @property
    def window(self) -> float:
        """Time window T implied by the grid spacing."""
        return TWO_PI / self.spacing

    @property
    def sample_dt(self) -> float:
        return self.window / len(self)

    def total_power(self) -> float:
        """Integral of the spectrum over d omega / (2 pi)."""
        return float(np.sum(self.values) * self.spacing / TWO_PI)

    def __mul__(self, factor: float) -> "Spectrum":
        return Spectrum(self.omega, self.values * factor)

    __rmul__ = __mul__

    def value_at(self, omega: float) -> float:
        return float(self.values[np.argmin(np.abs(self.omega - omega))])


def frequency_grid(n: int, dt: float) -> np.ndarray:
    """Angular frequencies of an ``n``-sample window, ascending."""
    j = np.arange(-(n // 2), n - n // 2)
    return j * (TWO_PI / (n * dt))


def same_grid(a: Spectrum, b: Spectrum) -> bool:
    if len(a) != len(b):
        return False
    tol = 1e-9 * abs(a.spacing)
    return bool(np.allclose(a.omega, b.omega, rtol=0.0, atol=tol))


def _require_same_grid(a: Spectrum, b: Spectrum):
    if not same_grid(a, b):
        raise GridMismatchError(
            f"spectra live on different grids ({len(a)} bins, spacing {a.spacing:.6g} "
            f"vs {len(b)} bins, spacing {b.spacing:.6g})")


def periodogram_values(x: np.ndarray, dt: float) -> np.ndarray:
    """Periodogram of the last axis of ``x``, ascending frequency order."""
    n = x.shape[-1]
    spec = sfft.fft(x, axis=-1)
    power = spec.real**2 + spec.imag**2
    power *= dt / n
    return np.fft.fftshift(power, axes=-1)


def mean_periodogram(x: np.ndarray, dt: float, block: int = 64) -> Spectrum:
    """Average periodogram of the columns of a time-major array ``x``."""
    x = np.asarray(x)
    n, cols = x.shape
    if cols == 0:
        raise ValueError("no series to average")
    total = np.zeros(n)
    for start in range(0, cols, block):
        chunk = np.ascontiguousarray(x[:, start:start + block].T)
        total += periodogram_values(chunk, dt).sum(axis=0)
    return Spectrum(frequency_grid(n, dt), total / cols)


def periodogram(series: ComplexSeries) -> Spectrum:
    if len(series) < 2:
        raise ValueError("periodogram needs at least two samples")
    values = periodogram_values(series.values, series.dt)
    return Spectrum(frequency_grid(len(series), series.dt), values)


def smoothing_width(spacing: float, target_bin: float) -> int:
    ratio = target_bin / spacing
    if ratio < 1.0 - 1e-9:
        raise ValueError(f"target bin {target_bin:.6g} is finer than the native spacing {spacing:.6g}")
    return int(math.ceil(ratio - 1e-9))


def smooth_spectrum(spec: Spectrum, target_bin: float = DEFAULT_BIN) -> Spectrum:
    """Boxcar-average ``m = ceil(target_bin / domega)`` neighbouring bins.

    Output bins are centred on multiples of ``m * domega``, so any two spectra
    smoothed to the same bin width share one grid regardless of their native
    window. For even ``m`` the kernel spans ``m + 1`` bins with half weight
    on the two ends (modified Daniell), which keeps it centred. The frequency
    axis is treated as periodic, as it is for a DFT, and total power is
    conserved exactly.
    """
    n = len(spec)
    m = smoothing_width(spec.spacing, target_bin)
    if m == 1:
        return Spectrum(spec.omega.copy(), spec.values.copy())
    if n % m:
        raise ValueError(f"{n} bins cannot be tiled by smoothing groups of {m}")
    groups = n // m
    if groups < 2:
        raise ValueError(f"smoothing {n} bins by {m} leaves fewer than two output bins")
    j_min = -(n // 2)
    centres = np.arange(-(groups // 2), groups - groups // 2) * m
    if m % 2:
        offsets = np.arange(-(m // 2), m // 2 + 1)
        weights = np.full(m, 1.0 / m)
    else:
        offsets = np.arange(-(m // 2), m // 2 + 1)
        weights = np.full(m + 1, 1.0 / m)
        weights[0] = weights[-1] = 0.5 / m
    idx = (centres[:, None] + offsets[None, :] - j_min) % n
    values = spec.values[idx] @ weights
    omega = centres * spec.spacing
    return Spectrum(omega, values)


def average_spectra(specs) -> Spectrum:
    specs = list(specs)
    if not specs:
        raise ValueError("nothing to average")
    first = specs[0]
    total = np.zeros_like(first.values)
    for s in specs:
        _require_same_grid(first, s)
        total += s.values
    return Spectrum(first.omega.copy(), total / len(specs))


@dataclass(frozen=True)
class Kubo:
    """Pointer spectrum of pure phase diffusion with intensity D."""

    D: float

    def __call__(self, omega):
        return 2.0 * self.D / (self.D**2 + np.asarray(omega) ** 2)


@dataclass(frozen=True)
class GaussianFreq:
    """Spectrum of free rotators with Gaussian frequencies of width sigma."""

    sigma: float

    def __call__(self, omega):
        s = self.sigma
        return math.sqrt(TWO_PI) * np.exp(-np.asarray(omega) ** 2 / (2 * s * s)) / s


@dataclass(frozen=True)
class Lorentzian:
    """``a / (pi^2 + b omega^2)``."""

    a: float
    b: float

    def __call__(self, omega):
        return self.a / (math.pi**2 + self.b * np.asarray(omega) ** 2)


def analytic_spectrum(kind, grid) -> Spectrum:
    params = [v for v in vars(kind).values()]
    if any(p <= 0 for p in params):
        raise ValueError(f"{kind} needs positive parameters")
    omega = grid.omega if isinstance(grid, Spectrum) else np.asarray(grid, dtype=np.float64)
    return Spectrum(omega.copy(), kind(omega))


def crop(spec: Spectrum, omega_max: float) -> Spectrum:
    keep = np.abs(spec.omega) <= omega_max * (1 + 1e-12)
    return Spectrum(spec.omega[keep], spec.values[keep])


def common_band(a: Spectrum, b: Spectrum):
    """Crop two spectra with equal spacing to their shared frequency range."""
    lo = max(a.omega[0], b.omega[0])
    hi = min(a.omega[-1], b.omega[-1])
    tol = 1e-9 * abs(a.spacing)

    def cut(s):
        keep = (s.omega >= lo - tol) & (s.omega <= hi + tol)
        return Spectrum(s.omega[keep], s.values[keep])

    a2, b2 = cut(a), cut(b)
    _require_same_grid(a2, b2)
    return a2, b2


def spectral_distance(a: Spectrum, b: Spectrum, band: float | None = None) -> float:
    """Relative integrated absolute deviation of ``a`` from reference ``b``."""
    if band is not None:
        a, b = crop(a, band), crop(b, band)
    _require_same_grid(a, b)
    ref = np.sum(np.abs(b.values))
    if ref == 0:
        raise ValueError("reference spectrum is identically zero")
    return float(np.sum(np.abs(a.values - b.values)) / ref)


def high_band_fraction(spec: Spectrum) -> float:
    """Share of total power above half the Nyquist frequency."""
    nyquist = math.pi / spec.sample_dt
    total = np.sum(spec.values)
    if total == 0:
        return 0.0
    return float(np.sum(spec.values[np.abs(spec.omega) > 0.5 * nyquist]) / total)


def check_aliasing(spec: Spectrum, limit: float = 0.01):
    """Refuse a coarse recording whose spectrum reaches toward Nyquist."""
    frac = high_band_fraction(spec)
    if frac > limit:
        raise AliasingError(
            f"{frac:.2%} of the power lies above half the Nyquist frequency "
            f"{math.pi / spec.sample_dt:.4g}; record on a finer grid")
    return frac


def half_height_width(spec: Spectrum) -> float:
    """Width of the contiguous region around the peak where S >= max/2.

    Edges are located by linear interpolation between bins.
    """
    v = spec.values
    k = int(np.argmax(v))
    half = v[k] / 2.0
    lo = k
    while lo > 0 and v[lo - 1] >= half:
        lo -= 1
    hi = k
    while hi < len(v) - 1 and v[hi + 1] >= half:
        hi += 1
    w = spec.omega
    left = w[lo] if lo == 0 else w[lo - 1] + (half - v[lo - 1]) / (v[lo] - v[lo - 1]) * (w[lo] - w[lo - 1])
    right = w[hi] if hi == len(v) - 1 else w[hi] + (v[hi] - half) / (v[hi] - v[hi + 1]) * (w[hi + 1] - w[hi])
    return float(right - left)


def write_spectrum(path, spec: Spectrum, meta: dict | None = None) -> Path:
    """Two-column CSV with a JSON metadata header line."""
    path = Path(path)
    header = json.dumps(meta or {}, sort_keys=True, default=_json_default)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# kuramoto-imf spectrum\n")
        fh.write(f"# meta: {header}\n")
        fh.write("omega,value\n")
        for w, v in zip(spec.omega.tolist(), spec.values.tolist()):
            fh.write(f"{w!r},{v!r}\n")
    return path


def read_spectrum(path):
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# meta:"):
                meta = json.loads(line[len("# meta:"):])
            elif line.startswith("#") or line.startswith("omega"):
                continue
            elif line.strip():
                w, v = line.split(",")
                rows.append((float(w), float(v)))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 2)
    return Spectrum(arr[:, 0], arr[:, 1]), meta


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")
