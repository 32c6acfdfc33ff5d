"""Disordered Kuramoto network: parameters, quenched disorder, phases and observables.

The phase of oscillator ``l`` obeys

    dtheta_l/dt = omega_l + sum_m K_lm sin(theta_m - theta_l) + xi_l(t)

with Gaussian natural frequencies ``omega_l = sigma_omega * G_l`` and Gaussian
couplings ``K_lm = K/N + k * G_lm / sqrt(N)``; ``xi_l`` is white noise of
intensity ``D``.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .streams import MAX_SEED

TWO_PI = 2.0 * math.pi


class Integrator(str, enum.Enum):
    RUNGE_KUTTA4 = "rk4"
    EULER_MARUYAMA = "euler-maruyama"


def _is_multiple(x: float, step: float) -> bool:
    ratio = x / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


@dataclass(frozen=True)
class SimParams:
    """Scalar knobs of one network run.

    ``window`` and ``transient`` are the measurement window T and the
    discarded transient t_d, both in time units and both integer multiples
    of ``dt``. Leaving ``integrator`` unset picks RK4 for D = 0 and
    Euler-Maruyama otherwise.
    """

    n_osc: int = 1000
    mean_coupling: float = 0.0
    coupling_disorder: float = 1.0
    freq_spread: float = 1.0
    noise_intensity: float = 0.0
    dt: float = 0.01
    window: float = 1000.0
    transient: float = 1000.0
    seed: int = 0
    integrator: Integrator | None = None

    def __post_init__(self):
        if int(self.n_osc) != self.n_osc or self.n_osc < 1:
            raise ValueError(f"n_osc must be a positive integer, got {self.n_osc}")
        object.__setattr__(self, "n_osc", int(self.n_osc))
        for name in ("coupling_disorder", "freq_spread", "noise_intensity", "transient"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.dt <= 0 or self.window <= 0:
            raise ValueError("dt and window must be positive")
        if not _is_multiple(self.window, self.dt):
            raise ValueError(f"window {self.window} is not an integer multiple of dt {self.dt}")
        if not _is_multiple(self.transient, self.dt):
            raise ValueError(f"transient {self.transient} is not an integer multiple of dt {self.dt}")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        integrator = self.integrator
        if integrator is None:
            integrator = Integrator.RUNGE_KUTTA4 if self.noise_intensity == 0 else Integrator.EULER_MARUYAMA
        integrator = Integrator(integrator)
        if integrator is Integrator.RUNGE_KUTTA4 and self.noise_intensity != 0:
            raise ValueError("RK4 integration requires noise_intensity == 0")
        object.__setattr__(self, "integrator", integrator)

    @property
    def window_steps(self) -> int:
        return int(round(self.window / self.dt))

    @property
    def transient_steps(self) -> int:
        return int(round(self.transient / self.dt))

    @property
    def noise_gain(self) -> float:
        """Self-consistency factor k^2 + K^2/N linking noise and pointer spectra."""
        return self.coupling_disorder**2 + self.mean_coupling**2 / self.n_osc

    def replace(self, **changes) -> "SimParams":
        if "noise_intensity" in changes and "integrator" not in changes:
            changes["integrator"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["integrator"] = self.integrator.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SimParams fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """One quenched draw of natural frequencies and the dense coupling matrix."""

    freqs: np.ndarray
    couplings: np.ndarray
    seed: int | None = None
    index: int = 0

    def __post_init__(self):
        freqs = np.ascontiguousarray(self.freqs, dtype=np.float64)
        couplings = np.ascontiguousarray(self.couplings, dtype=np.float64)
        n = freqs.shape[0]
        if freqs.ndim != 1 or couplings.shape != (n, n):
            raise ValueError(f"need freqs (N,) and couplings (N, N); got {freqs.shape}, {couplings.shape}")
        freqs.setflags(write=False)
        couplings.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_osc(self) -> int:
        return self.freqs.shape[0]

    @property
    def uniform_coupling(self) -> float | None:
        """The common coupling value if every entry is identical, else None.

        A constant matrix factors exactly through the mean field, which lets
        the integrator evaluate the coupling sum in O(N).
        """
        c = self.couplings.flat[0]
        if np.all(self.couplings == c):
            return float(c)
        return None

    def save(self, path) -> Path:
        path = Path(path)
        meta = {"seed": self.seed, "index": self.index, "n_osc": self.n_osc}
        with open(path, "wb") as fh:
            np.savez(fh, freqs=self.freqs, couplings=self.couplings,
                     meta=np.array(json.dumps(meta, sort_keys=True)))
        return path

    @classmethod
    def load(cls, path) -> "DisorderRealization":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            return cls(freqs=data["freqs"].copy(), couplings=data["couplings"].copy(),
                       seed=meta["seed"], index=meta["index"])


@dataclass
class PhaseState:
    """Unwrapped phases at a given time; observables wrap on output."""

    phases: np.ndarray
    time: float = 0.0

    @property
    def wrapped(self) -> np.ndarray:
        return np.mod(self.phases, TWO_PI)

    @property
    def pointers(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def copy(self) -> "PhaseState":
        return PhaseState(self.phases.copy(), self.time)


@dataclass(frozen=True)
class OrderParameterSample:
    r: float
    psi: float


def sample_disorder(params: SimParams, stream: np.random.Generator,
                    freqs=None, index: int = 0) -> DisorderRealization:
    """Draw frequencies and couplings.

    Frequencies come first from ``stream``, then the N x N coupling
    Gaussians, so a given stream always yields the same frequencies whatever
    the coupling parameters are. Passing ``freqs`` fixes the frequencies (the
    stream still advances past them) and only the couplings are random.
    """
    n = params.n_osc
    drawn = params.freq_spread * stream.standard_normal(n)
    if freqs is not None:
        drawn = np.asarray(freqs, dtype=np.float64)
        if drawn.shape != (n,):
            raise ValueError(f"fixed frequency list has shape {drawn.shape}, expected ({n},)")
    if params.coupling_disorder == 0:
        couplings = np.full((n, n), params.mean_coupling / n)
    else:
        couplings = stream.standard_normal((n, n))
        couplings *= params.coupling_disorder / math.sqrt(n)
        couplings += params.mean_coupling / n
    return DisorderRealization(drawn, couplings, seed=params.seed, index=index)


def init_phases(params: SimParams, stream: np.random.Generator) -> PhaseState:
    return PhaseState(stream.uniform(0.0, TWO_PI, params.n_osc), 0.0)


def mean_field(phases: np.ndarray) -> complex:
    return complex(np.mean(np.exp(1j * np.asarray(phases)), axis=-1))


def order_parameter(state: PhaseState) -> OrderParameterSample:
    """Modulus and argument of the population-averaged pointer."""
    z = mean_field(state.phases)
    psi = math.atan2(z.imag, z.real)
    if psi >= math.pi:
        psi -= TWO_PI
    return OrderParameterSample(r=min(abs(z), 1.0), psi=psi)


def network_noise(state: PhaseState, disorder: DisorderRealization, index: int) -> complex:
    """Coupling-weighted pointer sum driving oscillator ``index``."""
    if not 0 <= index < disorder.n_osc:
        raise IndexError(f"oscillator index {index} out of range [0, {disorder.n_osc})")
    return complex(disorder.couplings[index] @ np.exp(1j * state.phases))
