"""Iterative stochastic mean field (IMF) for the disordered Kuramoto network.

A single phase obeys the effective equation

    dtheta/dt = omega + sqrt(2 D) xi(t) + Im(exp(-i theta) zeta(t))

where ``zeta`` is complex Gaussian noise whose spectrum must equal
``(k^2 + K^2/N) S_z``, the pointer spectrum averaged over the network.
:func:`imf_iterate` finds that fixed point by alternating surrogate-noise
simulations with spectrum re-estimation.

Performance notes. Trials run in batches of :data:`TRIAL_BATCH` through one
compiled kernel so independent trials fill the vector lanes. The kernel
carries the pointer ``exp(i theta)`` rather than the phase and applies each
Euler-Maruyama increment as an exact rotation (short Taylor series for the
small per-step angle), which avoids a libm sin/cos pair per step. The
surrogate noise lives on the recording grid, ``sample_every`` integration
steps apart, and is evaluated between samples by periodic Catmull-Rom
interpolation.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .integrate import FASTMATH, IntegrationError, TrajectoryRecording
from .model import SimParams
from .spectral import (DEFAULT_BIN, ComplexSeries, Lorentzian, Spectrum, analytic_spectrum,
                       check_aliasing, frequency_grid, mean_periodogram, periodogram_values,
                       same_grid, smooth_spectrum, spectral_distance)
from .streams import stream as make_stream
from .surrogate import coefficient_scale, draw_coefficients, synthesize

TWO_PI = 2.0 * math.pi
TRIAL_BATCH = 32
MAX_ROTATION = 1.5  # rad per step; Taylor rotation accuracy limit
_NORMALS_BUDGET = 4_000_000


@nb.njit(inline="always", fastmath=FASTMATH)
def _rotate(c, s, d):
    # exp(i d) by Taylor series, exact to rounding for |d| <= 1.5
    d2 = d * d
    cd = 1.0 - d2 * (0.5 - d2 * (1.0 / 24 - d2 * (1.0 / 720 - d2 * (
        1.0 / 40320 - d2 * (1.0 / 3628800 - d2 * (1.0 / 479001600 - d2 / 87178291200))))))
    sd = d * (1.0 - d2 * (1.0 / 6 - d2 * (1.0 / 120 - d2 * (1.0 / 5040 - d2 * (
        1.0 / 362880 - d2 * (1.0 / 39916800 - d2 * (1.0 / 6227020800 - d2 / 1307674368000)))))))
    c2 = c * cd - s * sd
    s2 = s * cd + c * sd
    # one Newton step back onto the unit circle
    inv = 1.5 - 0.5 * (c2 * c2 + s2 * s2)
    return c2 * inv, s2 * inv


@nb.njit(nogil=True, cache=True, fastmath=FASTMATH)
def _effective_kernel(pc, ps, freq, zr, zi, q, dt, g0, g1, rec_from, noise_scale, normals,
                      outr, outi, largest):
    nc, B = zr.shape
    a0 = np.empty(q)
    a1 = np.empty(q)
    a2 = np.empty(q)
    a3 = np.empty(q)
    for u in range(q):
        t = u / q
        t2 = t * t
        t3 = t2 * t
        a0[u] = -0.5 * t3 + t2 - 0.5 * t
        a1[u] = 1.5 * t3 - 2.5 * t2 + 1.0
        a2[u] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
        a3[u] = 0.5 * t3 - 0.5 * t2
    with_noise = normals.shape[1] > 0
    step = 0
    for g in range(g0, g1):
        j = g % nc
        if g >= rec_from:
            r = g - rec_from
            for b in range(B):
                outr[r, b] = pc[b]
                outi[r, b] = ps[b]
        jm = (j - 1) % nc
        j1 = (j + 1) % nc
        j2 = (j + 2) % nc
        for u in range(q):
            w0 = a0[u]
            w1 = a1[u]
            w2 = a2[u]
            w3 = a3[u]
            # the branch sits outside the lane loop so that loop vectorizes
            if with_noise:
                for b in range(B):
                    re = w0 * zr[jm, b] + w1 * zr[j, b] + w2 * zr[j1, b] + w3 * zr[j2, b]
                    im = w0 * zi[jm, b] + w1 * zi[j, b] + w2 * zi[j1, b] + w3 * zi[j2, b]
                    d = dt * (freq[b] + pc[b] * im - ps[b] * re) + noise_scale * normals[b, step]
                    largest[b] = max(largest[b], abs(d))
                    pc[b], ps[b] = _rotate(pc[b], ps[b], d)
            else:
                for b in range(B):
                    re = w0 * zr[jm, b] + w1 * zr[j, b] + w2 * zr[j1, b] + w3 * zr[j2, b]
                    im = w0 * zi[jm, b] + w1 * zi[j, b] + w2 * zi[j1, b] + w3 * zi[j2, b]
                    d = dt * (freq[b] + pc[b] * im - ps[b] * re)
                    largest[b] = max(largest[b], abs(d))
                    pc[b], ps[b] = _rotate(pc[b], ps[b], d)
            step += 1


def _integrate_batch(freqs: np.ndarray, noise: np.ndarray | None, nc: int, q: int, dt: float,
                     D: float, phase0: np.ndarray, rngs: Sequence[np.random.Generator],
                     transient_windows: int) -> np.ndarray:
    """Run ``B`` effective trials; returns recorded pointers, shape (B, nc)."""
    B = freqs.shape[0]
    if noise is None:
        zr = np.zeros((nc, B))
        zi = np.zeros((nc, B))
    else:
        zr = np.ascontiguousarray(noise.real.T)
        zi = np.ascontiguousarray(noise.imag.T)
    pc = np.cos(phase0)
    ps = np.sin(phase0)
    freqs = np.ascontiguousarray(freqs, dtype=np.float64)
    outr = np.empty((nc, B))
    outi = np.empty((nc, B))
    total = (transient_windows + 1) * nc
    rec_from = transient_windows * nc
    noise_scale = math.sqrt(2.0 * D * dt)
    if D > 0:
        span = max(1, _NORMALS_BUDGET // (q * B))
    else:
        span = total
    empty = np.zeros((B, 0))
    largest = np.zeros(B)
    g = 0
    while g < total:
        g1 = min(total, g + span)
        if D > 0:
            normals = np.empty((B, (g1 - g) * q))
            for b, rng in enumerate(rngs):
                rng.standard_normal(out=normals[b])
        else:
            normals = empty
        _effective_kernel(pc, ps, freqs, zr, zi, q, dt, g, g1, rec_from, noise_scale,
                          normals, outr, outi, largest)
        biggest = float(largest.max()) if np.all(np.isfinite(largest)) else math.nan
        if not math.isfinite(biggest):
            raise IntegrationError(f"non-finite phase increment in effective dynamics near "
                                   f"t = {g1 * q * dt:.6g}")
        if biggest > MAX_ROTATION:
            raise IntegrationError(f"phase increment {biggest:.3g} rad in one step; reduce dt {dt}")
        g = g1
    pointers = outr.T + 1j * outi.T
    if not np.all(np.isfinite(pointers)):
        raise IntegrationError("non-finite pointer in effective dynamics")
    return pointers


def simulate_effective(freq: float, noise: ComplexSeries | None, D: float, dt: float,
                       stream: np.random.Generator, *, window: float | None = None,
                       sample_every: int = 1, transient_windows: int = 1,
                       check_alias: bool = True) -> ComplexSeries:
    """One trajectory of the effective single-oscillator dynamics.

    ``noise`` is sampled every ``q * dt`` for an integer ``q`` (``q = 1`` means
    the integration grid itself) and treated as periodic over its window.
    The run spends ``transient_windows`` windows relaxing under the same
    periodic noise and then records ``exp(i theta)`` on the noise grid for
    one window. ``noise=None`` means zeta = 0; the recording grid is then
    given by ``window`` and ``sample_every``.
    """
    if noise is None:
        if window is None:
            raise ValueError("window is required when no noise is given")
        q = int(sample_every)
        nc = int(round(window / (q * dt)))
        values = None
    else:
        q = int(round(noise.dt / dt))
        if q < 1 or not math.isclose(q * dt, noise.dt, rel_tol=1e-9):
            raise ValueError(f"noise spacing {noise.dt} is not an integer multiple of dt {dt}")
        nc = len(noise)
        values = noise.values[None, :]
    phase0 = np.array([stream.uniform(0.0, TWO_PI)])
    ptr = _integrate_batch(np.array([float(freq)]), values, nc, q, dt, D, phase0, [stream],
                           transient_windows)[0]
    series = ComplexSeries(ptr, q * dt, t0=transient_windows * nc * q * dt)
    if check_alias and q > 1 and nc >= 2:
        check_aliasing(Spectrum(frequency_grid(nc, q * dt), periodogram_values(ptr, q * dt)))
    return series


@dataclass(frozen=True)
class ImfParams:
    """Knobs of the IMF solver.

    ``n_freqs`` is both the number of frequencies per iteration and the N of
    the finite-size term K^2/N. ``init_spectrum`` is a :class:`Lorentzian`,
    a :class:`Spectrum` on the IMF grid, or ``"flat"`` (unit total power).
    ``freq_mode`` is ``"resample"`` (fresh N(0, sigma^2) draws each
    iteration) or ``"fixed"`` (use ``freqs``).
    """

    n_freqs: int = 1000
    trials_per_freq: int = 1
    max_iters: int = 50
    conv_tol: float = 1e-2
    relax: float = 1.0
    init_spectrum: Lorentzian | Spectrum | str = Lorentzian(2.0, 20.0)
    freq_mode: str = "resample"
    freqs: tuple | None = None
    sample_every: int = 10
    smoothing_bin: float = DEFAULT_BIN
    transient_windows: int = 1

    def __post_init__(self):
        if self.n_freqs < 1 or self.trials_per_freq < 1 or self.max_iters < 1:
            raise ValueError("n_freqs, trials_per_freq and max_iters must be positive")
        if self.conv_tol <= 0:
            raise ValueError("conv_tol must be positive")
        if not 0 < self.relax <= 1:
            raise ValueError("relax must lie in (0, 1]")
        if self.sample_every < 1 or self.transient_windows < 0:
            raise ValueError("sample_every must be >= 1 and transient_windows >= 0")
        if isinstance(self.init_spectrum, str) and self.init_spectrum != "flat":
            raise ValueError(f"unknown initial spectrum {self.init_spectrum!r}")
        if self.freq_mode not in ("resample", "fixed"):
            raise ValueError(f"unknown freq_mode {self.freq_mode!r}")
        if self.freq_mode == "fixed":
            if self.freqs is None or len(self.freqs) != self.n_freqs:
                raise ValueError("fixed freq_mode needs exactly n_freqs frequencies")
            object.__setattr__(self, "freqs", tuple(float(f) for f in self.freqs))

    @property
    def total_trials(self) -> int:
        return self.n_freqs * self.trials_per_freq

    def noise_gain(self, params: SimParams) -> float:
        return params.coupling_disorder**2 + params.mean_coupling**2 / self.n_freqs

    def to_dict(self) -> dict:
        init = self.init_spectrum
        if isinstance(init, str):
            init_d = {"kind": init}
        elif isinstance(init, Lorentzian):
            init_d = {"kind": "lorentzian", "a": init.a, "b": init.b}
        else:
            init_d = {"kind": "provided", "omega": init.omega.tolist(), "values": init.values.tolist()}
        return {
            "n_freqs": self.n_freqs, "trials_per_freq": self.trials_per_freq,
            "max_iters": self.max_iters, "conv_tol": self.conv_tol, "relax": self.relax,
            "init_spectrum": init_d, "freq_mode": self.freq_mode,
            "freqs": None if self.freqs is None else list(self.freqs),
            "sample_every": self.sample_every, "smoothing_bin": self.smoothing_bin,
            "transient_windows": self.transient_windows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImfParams":
        d = dict(d)
        init = d.pop("init_spectrum", None)
        if isinstance(init, dict):
            kind = init.get("kind", "lorentzian")
            if kind == "lorentzian":
                d["init_spectrum"] = Lorentzian(init.get("a", 2.0), init.get("b", 20.0))
            elif kind == "provided":
                d["init_spectrum"] = Spectrum(init["omega"], init["values"])
            elif kind != "flat":
                raise ValueError(f"unknown init spectrum kind {kind!r}")
            else:
                d["init_spectrum"] = "flat"
        elif init is not None:
            d["init_spectrum"] = init
        if d.get("freqs") is not None:
            d["freqs"] = tuple(d["freqs"])
        return cls(**d)


@dataclass
class ImfState:
    noise_spectrum: Spectrum
    pointer_spectrum: Spectrum | None = None
    iter: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    iterates: list = field(default_factory=list)
    pointer_power: list = field(default_factory=list)
    gain: float = 0.0
    sample_dt: float = 0.0


def imf_grid(params: SimParams, imf: ImfParams) -> tuple[int, float]:
    """Number of recorded samples per window and their spacing."""
    q = imf.sample_every
    if params.window_steps % q:
        raise ValueError(f"sample_every={q} must divide the {params.window_steps} window steps")
    return params.window_steps // q, q * params.dt


def flat_spectrum(params: SimParams, imf: ImfParams, power: float = 1.0) -> Spectrum:
    """Flat spectrum on the IMF grid with total power ``power``."""
    nc, sdt = imf_grid(params, imf)
    return Spectrum(frequency_grid(nc, sdt), np.full(nc, power * sdt))


def initial_spectrum(params: SimParams, imf: ImfParams) -> Spectrum:
    nc, sdt = imf_grid(params, imf)
    grid = frequency_grid(nc, sdt)
    init = imf.init_spectrum
    if isinstance(init, str) and init == "flat":
        return flat_spectrum(params, imf)
    if isinstance(init, Lorentzian):
        return analytic_spectrum(init, grid)
    if not same_grid(init, Spectrum(grid, np.zeros_like(grid))):
        raise ValueError("provided initial spectrum is not on the IMF grid")
    if np.any(init.values < 0):
        raise ValueError("initial spectrum has negative values")
    return Spectrum(init.omega.copy(), init.values.copy())


def _map_ordered(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def trial_spectrum_sum(freqs: np.ndarray, streams_for, scale: np.ndarray | None, params: SimParams,
                       imf: ImfParams, threads: int = 1) -> np.ndarray:
    """Summed pointer periodograms over all trials.

    ``freqs[i]`` is the frequency of trial ``i`` and ``streams_for(i)`` its
    generator. Trials are grouped in fixed batches whose partial sums are
    added in batch order, so the result does not depend on ``threads``.
    """
    nc, sdt = imf_grid(params, imf)
    q = imf.sample_every
    window = params.window
    n = freqs.shape[0]
    batches = [(s, min(n, s + TRIAL_BATCH)) for s in range(0, n, TRIAL_BATCH)]

    def run(bounds):
        lo, hi = bounds
        rngs = [streams_for(i) for i in range(lo, hi)]
        phase0 = np.array([rng.uniform(0.0, TWO_PI) for rng in rngs])
        if scale is None:
            noise = None
        else:
            gauss = np.stack([draw_coefficients(rng, nc) for rng in rngs])
            noise = synthesize(scale, gauss, window)
        ptr = _integrate_batch(freqs[lo:hi], noise, nc, q, params.dt, params.noise_intensity,
                               phase0, rngs, imf.transient_windows)
        return periodogram_values(ptr, sdt).sum(axis=0)

    total = np.zeros(nc)
    for part in _map_ordered(run, batches, threads):
        total += part
    return total


def _iteration_freqs(params: SimParams, imf: ImfParams, iteration: int) -> np.ndarray:
    if imf.freq_mode == "fixed":
        return np.asarray(imf.freqs, dtype=np.float64)
    rng = make_stream(params.seed, "imf-freqs", iteration)
    return params.freq_spread * rng.standard_normal(imf.n_freqs)


def imf_iterate(params: SimParams, imf: ImfParams, threads: int = 1, keep_iterates: bool = True,
                progress=None) -> ImfState:
    """Iterate the noise spectrum to self-consistency.

    Each iteration simulates ``n_freqs * trials_per_freq`` effective trials
    under fresh surrogate noise drawn from the current noise spectrum,
    averages their pointer periodograms into S_z and mixes
    ``(k^2 + K^2/N) S_z`` into the noise spectrum with weight ``relax``.
    Iteration stops once the smoothed spectra of successive iterates differ
    by less than ``conv_tol`` (relative L1), or after ``max_iters``; the
    ``converged`` flag tells the two apart.
    """
    gain = imf.noise_gain(params)
    if gain <= 0:
        raise ValueError("k^2 + K^2/N must be positive; without network noise there is nothing to iterate")
    nc, sdt = imf_grid(params, imf)
    current = initial_spectrum(params, imf)
    state = ImfState(noise_spectrum=current, gain=gain, sample_dt=sdt)
    if keep_iterates:
        state.iterates.append(current)
    M = imf.trials_per_freq
    for it in range(1, imf.max_iters + 1):
        freqs = np.repeat(_iteration_freqs(params, imf, it), M)
        scale = coefficient_scale(current, params.window)
        total = trial_spectrum_sum(freqs, lambda i, it=it: make_stream(params.seed, "imf-trial", it, i),
                                   scale, params, imf, threads)
        s_z = Spectrum(current.omega, total / freqs.shape[0])
        if imf.sample_every > 1:
            check_aliasing(s_z)
        proposal = gain * s_z.values
        new = Spectrum(current.omega, (1.0 - imf.relax) * current.values + imf.relax * proposal)
        dist = spectral_distance(smooth_spectrum(new, imf.smoothing_bin),
                                 smooth_spectrum(current, imf.smoothing_bin))
        state.history.append(dist)
        state.pointer_spectrum = s_z
        state.pointer_power.append(s_z.total_power())
        state.noise_spectrum = new
        state.iter = it
        if keep_iterates:
            state.iterates.append(new)
        if progress is not None:
            progress(it, dist)
        current = new
        if dist < imf.conv_tol:
            state.converged = True
            break
    return state


def single_oscillator_spectrum(converged: ImfState, freq: float, params: SimParams, trials: int,
                               imf: ImfParams | None = None, stream_id: int = 0, threads: int = 1,
                               smooth: bool = True) -> Spectrum:
    """Trial-averaged pointer spectrum of one oscillator with fixed frequency.

    Every trial draws fresh surrogate noise from the converged noise spectrum.
    """
    imf = imf or ImfParams()
    noise = converged.noise_spectrum
    q = int(round(noise.sample_dt / params.dt))
    imf = _with_sample_every(imf, q)
    scale = coefficient_scale(noise, params.window)
    freqs = np.full(int(trials), float(freq))
    total = trial_spectrum_sum(freqs, lambda i: make_stream(params.seed, "single", stream_id, i),
                               scale, params, imf, threads)
    spec = Spectrum(noise.omega, total / trials)
    return smooth_spectrum(spec, imf.smoothing_bin) if smooth else spec


def _with_sample_every(imf: ImfParams, q: int) -> ImfParams:
    return imf if imf.sample_every == q else dataclasses.replace(imf, sample_every=q)


@dataclass
class NoiseRelationReport:
    gain: float
    distance: float
    noise_spectrum: Spectrum
    scaled_pointer_spectrum: Spectrum


def noise_relation_check(nd_run: TrajectoryRecording, params: SimParams,
                         smoothing_bin: float = DEFAULT_BIN) -> NoiseRelationReport:
    """Compare the measured noise spectrum with (k^2 + K^2/N) S_z from the same run."""
    if nd_run.noise_series is None or not nd_run.pointers.size:
        raise ValueError("the network run must record both pointers and network noise")
    gain = params.noise_gain
    s_zeta = smooth_spectrum(mean_periodogram(nd_run.noise_series, nd_run.sample_dt), smoothing_bin)
    s_z = smooth_spectrum(mean_periodogram(nd_run.pointers, nd_run.sample_dt), smoothing_bin)
    scaled = gain * s_z
    return NoiseRelationReport(gain, spectral_distance(s_zeta, scaled), s_zeta, scaled)
