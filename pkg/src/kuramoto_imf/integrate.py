"""Time stepping of the full N-oscillator network.

The compiled path (:func:`simulate_network`) advances all phases with either
classical RK4 (deterministic runs) or Euler-Maruyama, evaluating the dense
coupling sum directly at O(N^2) per drift evaluation. :func:`rk4_step` and
:func:`euler_maruyama_step` are plain-numpy single steps for arbitrary drift
functions; the tests use them as an independent check on the compiled path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .model import DisorderRealization, PhaseState, SimParams, Integrator
from .spectral import check_aliasing, frequency_grid, Spectrum, periodogram_values
from .streams import stream as make_stream

# no nnan/ninf: NaN detection must survive optimisation
FASTMATH = {"contract", "reassoc", "nsz", "arcp"}
CHUNK_STEPS = 4096


class IntegrationError(FloatingPointError):
    pass


class StepSizeError(ValueError):
    pass


@nb.njit(nogil=True, cache=True, fastmath=FASTMATH)
def _drift(theta, freqs, K, uniform, cval, out, c, s):
    n = theta.shape[0]
    for m in range(n):
        c[m] = math.cos(theta[m])
        s[m] = math.sin(theta[m])
    if uniform:
        sr = 0.0
        si = 0.0
        for m in range(n):
            sr += c[m]
            si += s[m]
        zr = cval * sr
        zi = cval * si
        for l in range(n):
            out[l] = freqs[l] + c[l] * zi - s[l] * zr
    else:
        for l in range(n):
            ar = 0.0
            ai = 0.0
            for m in range(n):
                ar += K[l, m] * c[m]
                ai += K[l, m] * s[m]
            out[l] = freqs[l] + c[l] * ai - s[l] * ar


@nb.njit(nogil=True, cache=True, fastmath=FASTMATH)
def _advance(theta, freqs, K, uniform, cval, dt, rk4, n_steps, noise_scale, normals):
    n = theta.shape[0]
    c = np.empty(n)
    s = np.empty(n)
    k1 = np.empty(n)
    if rk4:
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        for _ in range(n_steps):
            _drift(theta, freqs, K, uniform, cval, k1, c, s)
            for i in range(n):
                tmp[i] = theta[i] + 0.5 * dt * k1[i]
            _drift(tmp, freqs, K, uniform, cval, k2, c, s)
            for i in range(n):
                tmp[i] = theta[i] + 0.5 * dt * k2[i]
            _drift(tmp, freqs, K, uniform, cval, k3, c, s)
            for i in range(n):
                tmp[i] = theta[i] + dt * k3[i]
            _drift(tmp, freqs, K, uniform, cval, k4, c, s)
            for i in range(n):
                theta[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    else:
        with_noise = normals.shape[0] > 0
        for step in range(n_steps):
            _drift(theta, freqs, K, uniform, cval, k1, c, s)
            if with_noise:
                for i in range(n):
                    theta[i] += dt * k1[i] + noise_scale * normals[step, i]
            else:
                for i in range(n):
                    theta[i] += dt * k1[i]


@dataclass
class RecordRequest:
    """What to store during the measurement window.

    ``oscillators`` and ``noise`` are index lists, ``"all"`` or None.
    Samples are taken every ``sample_every`` integration steps.
    """

    oscillators: Sequence[int] | str | None = "all"
    noise: Sequence[int] | str | None = None
    order: bool = False
    sample_every: int = 1

    def resolve(self, which, n: int) -> np.ndarray:
        if which is None:
            return np.zeros(0, dtype=np.int64)
        if isinstance(which, str):
            if which != "all":
                raise ValueError(f"unknown selection {which!r}")
            return np.arange(n)
        idx = np.asarray(which, dtype=np.int64).reshape(-1)
        if np.any((idx < 0) | (idx >= n)):
            raise IndexError(f"oscillator selection out of range [0, {n})")
        return idx


@dataclass
class TrajectoryRecording:
    sample_dt: float
    pointers: np.ndarray
    oscillators: np.ndarray
    noise_series: np.ndarray | None = None
    noise_oscillators: np.ndarray | None = None
    order_series: np.ndarray | None = None
    t0: float = 0.0
    final_state: PhaseState | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        if self.pointers.size:
            return self.pointers.shape[0]
        if self.order_series is not None:
            return self.order_series.shape[0]
        return 0 if self.noise_series is None else self.noise_series.shape[0]

    @property
    def window(self) -> float:
        return self.n_samples * self.sample_dt

    @property
    def mean_order(self) -> float:
        return float(np.mean(self.order_series))


def kuramoto_drift(disorder: DisorderRealization) -> Callable:
    """Plain-numpy drift ``omega + Im(exp(-i theta) * K @ exp(i theta))``."""
    freqs, K = disorder.freqs, disorder.couplings

    def drift(theta, t=0.0):
        z = np.exp(1j * theta)
        return freqs + np.imag(np.conj(z) * (K @ z))

    return drift


def rk4_step(state: PhaseState, drift: Callable, dt: float) -> PhaseState:
    th, t = state.phases, state.time
    k1 = drift(th, t)
    k2 = drift(th + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = drift(th + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = drift(th + dt * k3, t + dt)
    return PhaseState(th + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), t + dt)


def euler_maruyama_step(state: PhaseState, drift: Callable, D: float, dt: float,
                        stream: np.random.Generator) -> PhaseState:
    th = state.phases
    new = th + drift(th, state.time) * dt
    if D > 0:
        new = new + math.sqrt(2.0 * D * dt) * stream.standard_normal(th.shape)
    return PhaseState(new, state.time + dt)


def stability_number(params: SimParams, disorder: DisorderRealization) -> float:
    """``dt * max_l (|omega_l| + sum_m |K_lm|)``; runs refuse values above 1."""
    rate = np.abs(disorder.freqs) + np.sum(np.abs(disorder.couplings), axis=1)
    return float(params.dt * np.max(rate))


class _Stepper:
    def __init__(self, params: SimParams, disorder: DisorderRealization, theta: np.ndarray,
                 rng: np.random.Generator | None):
        self.theta = np.array(theta, dtype=np.float64)
        self.freqs = disorder.freqs
        self.K = disorder.couplings
        cval = disorder.uniform_coupling
        self.uniform = cval is not None
        self.cval = 0.0 if cval is None else cval
        self.dt = params.dt
        self.rk4 = params.integrator is Integrator.RUNGE_KUTTA4
        self.D = params.noise_intensity
        self.noise_scale = math.sqrt(2.0 * self.D * self.dt)
        self.rng = rng
        self.steps_done = 0
        self._empty = np.zeros((0, self.theta.shape[0]))

    def advance(self, n_steps: int):
        while n_steps > 0:
            chunk = min(n_steps, CHUNK_STEPS)
            if not self.rk4 and self.D > 0:
                normals = self.rng.standard_normal((chunk, self.theta.shape[0]))
            else:
                normals = self._empty
            _advance(self.theta, self.freqs, self.K, self.uniform, self.cval, self.dt,
                     self.rk4, chunk, self.noise_scale, normals)
            self.steps_done += chunk
            n_steps -= chunk
            if not np.all(np.isfinite(self.theta)):
                bad = int(np.flatnonzero(~np.isfinite(self.theta))[0])
                raise IntegrationError(
                    f"non-finite phase for oscillator {bad} after step {self.steps_done} "
                    f"(t = {self.steps_done * self.dt:.6g}); dt = {self.dt}")


def simulate_network(params: SimParams, disorder: DisorderRealization, init: PhaseState,
                     record: RecordRequest | None = None,
                     stream: np.random.Generator | None = None,
                     check_alias: bool = True) -> TrajectoryRecording:
    """Integrate the network over ``[0, transient + window]``, recording after the transient.

    ``stream`` supplies the white-noise increments when D > 0; by default it is
    derived from ``params.seed`` and the disorder index.
    """
    record = record or RecordRequest()
    n = disorder.n_osc
    if init.phases.shape != (n,):
        raise ValueError(f"initial state has {init.phases.shape[0]} phases, network has {n}")
    if params.n_osc != n:
        raise ValueError(f"params.n_osc = {params.n_osc} but disorder has {n} oscillators")
    lam = stability_number(params, disorder)
    if lam > 1.0:
        raise StepSizeError(
            f"dt * (|omega|_max + sum|K|) = {lam:.3g} > 1; reduce dt below {params.dt / lam:.3g}")
    every = int(record.sample_every)
    if every < 1 or params.window_steps % every:
        raise ValueError(f"sample_every={every} must divide the {params.window_steps} window steps")
    if stream is None and params.noise_intensity > 0:
        stream = make_stream(params.seed, "nd-noise", disorder.index)

    sel = record.resolve(record.oscillators, n)
    noise_sel = record.resolve(record.noise, n)
    n_rec = params.window_steps // every
    pointers = np.empty((n_rec, sel.shape[0]), dtype=np.complex128)
    noise = np.empty((n_rec, noise_sel.shape[0]), dtype=np.complex128) if noise_sel.size else None
    order = np.empty(n_rec) if record.order else None
    K_noise = disorder.couplings[noise_sel] if noise_sel.size else None

    stepper = _Stepper(params, disorder, init.phases, stream)
    stepper.advance(params.transient_steps)
    for j in range(n_rec):
        z = np.exp(1j * stepper.theta)
        if sel.size:
            pointers[j] = z[sel]
        if noise is not None:
            noise[j] = K_noise @ z
        if order is not None:
            order[j] = abs(z.mean())
        stepper.advance(every)

    rec = TrajectoryRecording(
        sample_dt=every * params.dt, pointers=pointers, oscillators=sel,
        noise_series=noise, noise_oscillators=noise_sel if noise is not None else None,
        order_series=order, t0=params.transient,
        final_state=PhaseState(stepper.theta.copy(), params.transient + params.window),
        meta={"params": params.to_dict(), "disorder_index": disorder.index})
    if check_alias and every > 1 and sel.size and n_rec >= 2:
        probe = pointers[:, : min(32, sel.size)].T
        values = periodogram_values(probe, rec.sample_dt).mean(axis=0)
        check_aliasing(Spectrum(frequency_grid(n_rec, rec.sample_dt), values))
    return rec


def self_convergence_error(params: SimParams, disorder: DisorderRealization, state: PhaseState,
                           horizon: float = 1.0) -> float:
    """Richardson estimate of the RK4 endpoint phase error over ``horizon``.

    Runs the deterministic part with ``dt`` and ``dt/2`` from ``state``.
    """
    def run(dt):
        p = params.replace(dt=dt, noise_intensity=0.0, integrator=Integrator.RUNGE_KUTTA4,
                           window=horizon, transient=0.0)
        st = _Stepper(p, disorder, state.phases, None)
        st.advance(int(round(horizon / dt)))
        return st.theta

    coarse = run(params.dt)
    fine = run(params.dt / 2)
    return float(np.max(np.abs(coarse - fine)) * 16.0 / 15.0)


_MAGIC = b"KIMF-TRAJ-1\n"


def save_trajectory(path, rec: TrajectoryRecording, header: dict | None = None) -> Path:
    """Write a recording as a JSON header line followed by raw time-major arrays."""
    path = Path(path)
    blocks = [("pointers", rec.pointers)]
    if rec.noise_series is not None:
        blocks.append(("noise_series", rec.noise_series))
    if rec.order_series is not None:
        blocks.append(("order_series", rec.order_series))
    columns = []
    offset = 0
    for name, arr in blocks:
        arr = np.ascontiguousarray(arr)
        columns.append({"name": name, "dtype": arr.dtype.newbyteorder("<").str,
                        "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    head = {
        "sample_dt": rec.sample_dt, "t0": rec.t0,
        "oscillators": rec.oscillators.tolist(),
        "noise_oscillators": None if rec.noise_oscillators is None else rec.noise_oscillators.tolist(),
        "columns": columns, "meta": rec.meta, "header": header or {},
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        for (_, arr), col in zip(blocks, columns):
            fh.write(np.ascontiguousarray(arr, dtype=col["dtype"]).tobytes())
    return path


def load_trajectory(path) -> TrajectoryRecording:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        head = json.loads(fh.readline())
        data = fh.read()
    arrays = {}
    for col in head["columns"]:
        dtype = np.dtype(col["dtype"])
        count = int(np.prod(col["shape"]))
        arrays[col["name"]] = np.frombuffer(data, dtype=dtype, count=count,
                                            offset=col["offset"]).reshape(col["shape"]).copy()
    noise_osc = head["noise_oscillators"]
    return TrajectoryRecording(
        sample_dt=head["sample_dt"], pointers=arrays["pointers"],
        oscillators=np.asarray(head["oscillators"], dtype=np.int64),
        noise_series=arrays.get("noise_series"),
        noise_oscillators=None if noise_osc is None else np.asarray(noise_osc, dtype=np.int64),
        order_series=arrays.get("order_series"), t0=head["t0"], meta=head["meta"])
