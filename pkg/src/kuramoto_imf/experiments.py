"""Scenario runner: network dynamics, IMF, comparisons, sweeps and checks.

A :class:`Scenario` bundles the simulation parameters with the choices that
define an experiment (replicates, recorded oscillators, sweep, outputs).
Runners return result objects that know which spectra and tables they can
emit; :func:`emit_outputs` writes them next to a ``meta.json`` carrying the
full configuration, so every output directory can be regenerated from its
own metadata.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imf import (ImfParams, ImfState, imf_iterate, noise_relation_check, single_oscillator_spectrum,
                  trial_spectrum_sum)
from .integrate import RecordRequest, simulate_network
from .model import SimParams, init_phases, sample_disorder
from .spectral import (DEFAULT_BIN, Kubo, GaussianFreq, Lorentzian, Spectrum, analytic_spectrum,
                       common_band, frequency_grid, mean_periodogram, periodogram_values,
                       smooth_spectrum, spectral_distance, write_spectrum, _json_default)
from .streams import stream as make_stream
from .surrogate import coefficient_scale, draw_coefficients, synthesize

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

__all__ = [
    "Scenario", "NdResult", "ImfResult", "ComparisonReport", "OrderSweepTable", "CheckResult",
    "run_nd", "run_imf", "run_comparison", "run_order_sweep", "kubo_check", "surrogate_check",
    "emit_outputs", "load_config", "scenario_from_config", "run_command",
]

VERSION = "0.1.0"
OUTPUT_KINDS = ("network", "noise", "oscillators", "order", "history", "iterates", "check")
_SWEEPABLE = {f.name for f in dataclasses.fields(SimParams)} - {"seed", "integrator"}


@dataclass
class Scenario:
    """Everything needed to run and re-run one experiment.

    ``sweep`` is ``(field, values)`` over a numeric :class:`SimParams` field.
    ``fixed_freqs`` pins the natural frequencies of every network
    realization (couplings stay random). ``oscillators`` lists the indices
    whose individual spectra are reported. ``noise_oscillators`` is the
    number of oscillators whose network noise is recorded.
    """

    name: str = "run"
    base: SimParams = field(default_factory=SimParams)
    imf: ImfParams | None = None
    sweep: tuple | None = None
    replicates: int = 1
    outputs: tuple = ("network",)
    oscillators: tuple = ()
    mode: str = "single"
    sample_every: int = 1
    noise_oscillators: int = 0
    smoothing_bin: float = DEFAULT_BIN
    single_trials: int = 100
    fixed_freqs: tuple | None = None
    check: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        self.outputs = tuple(self.outputs)
        bad = [o for o in self.outputs if o not in OUTPUT_KINDS]
        if bad:
            raise ValueError(f"unknown outputs {bad}; choose from {OUTPUT_KINDS}")
        self.oscillators = tuple(int(i) for i in self.oscillators)
        if any(not 0 <= i < self.base.n_osc for i in self.oscillators):
            raise ValueError(f"oscillator index out of range [0, {self.base.n_osc})")
        if self.mode not in ("single", "ensemble"):
            raise ValueError(f"mode must be 'single' or 'ensemble', got {self.mode!r}")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in _SWEEPABLE:
                raise ValueError(f"sweep parameter {name!r} is not a real field of SimParams")
            self.sweep = (name, tuple(values))
        if self.fixed_freqs is not None:
            self.fixed_freqs = tuple(float(f) for f in self.fixed_freqs)
            if len(self.fixed_freqs) != self.base.n_osc:
                raise ValueError("fixed_freqs must list one frequency per oscillator")

    def to_dict(self) -> dict:
        return {
            "scenario": {
                "name": self.name, "replicates": self.replicates, "outputs": list(self.outputs),
                "oscillators": list(self.oscillators), "mode": self.mode,
                "single_trials": self.single_trials,
                "fixed_freqs": None if self.fixed_freqs is None else list(self.fixed_freqs),
                "sweep": None if self.sweep is None else {"param": self.sweep[0],
                                                          "values": list(self.sweep[1])},
            },
            "model": self.base.to_dict(),
            "integrate": {"sample_every": self.sample_every,
                          "noise_oscillators": self.noise_oscillators},
            "spectral": {"smoothing_bin": self.smoothing_bin},
            "imf": None if self.imf is None else self.imf.to_dict(),
            "check": dict(self.check),
        }


def load_config(path) -> dict:
    """Read a TOML or JSON config; a ``meta.json`` yields its embedded config."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        data = json.loads(raw)
        return data.get("config", data)
    return tomllib.loads(raw.decode("utf-8"))


def scenario_from_config(cfg: dict, seed: int | None = None) -> Scenario:
    cfg = cfg or {}
    sc = dict(cfg.get("scenario") or {})
    model = dict(cfg.get("model") or {})
    if seed is not None:
        model["seed"] = seed
    base = SimParams.from_dict(model)
    integ = cfg.get("integrate") or {}
    spectral = cfg.get("spectral") or {}
    imf_cfg = cfg.get("imf")
    imf = ImfParams.from_dict(imf_cfg) if imf_cfg else None
    sweep = sc.get("sweep")
    if isinstance(sweep, dict):
        sweep = (sweep["param"], sweep["values"])
    return Scenario(
        name=sc.get("name", "run"), base=base, imf=imf, sweep=sweep,
        replicates=sc.get("replicates", 1), outputs=sc.get("outputs", ("network",)),
        oscillators=sc.get("oscillators", ()), mode=sc.get("mode", "single"),
        sample_every=integ.get("sample_every", 1),
        noise_oscillators=integ.get("noise_oscillators", 0),
        smoothing_bin=spectral.get("smoothing_bin", DEFAULT_BIN),
        single_trials=sc.get("single_trials", 100), fixed_freqs=sc.get("fixed_freqs"),
        check=dict(cfg.get("check") or {}),
    )


def _fan_out(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- results

@dataclass
class NdResult:
    """Spectra and order statistics of network runs, averaged over replicates.

    Spectra are stored raw; ``smoothed`` applies the scenario bin.
    """

    scenario: Scenario
    network: Spectrum
    noise: Spectrum | None
    oscillators: dict
    mean_order: list
    freqs: list
    noise_relation: list = field(default_factory=list)

    @property
    def asynchronous(self) -> bool:
        n = self.scenario.base.n_osc
        return float(np.mean(self.mean_order)) <= 3.0 / math.sqrt(n) + 0.1

    def smoothed(self, spec: Spectrum) -> Spectrum:
        return smooth_spectrum(spec, self.scenario.smoothing_bin)

    def spectra(self, outputs) -> dict:
        out = {}
        if "network" in outputs:
            out["nd_network"] = self.smoothed(self.network)
        if "noise" in outputs and self.noise is not None:
            out["nd_noise"] = self.smoothed(self.noise)
        if "oscillators" in outputs:
            for i, s in self.oscillators.items():
                out[f"nd_osc{i}"] = self.smoothed(s)
        return out

    def tables(self, outputs) -> dict:
        if "order" not in outputs:
            return {}
        rows = [(r, m) for r, m in enumerate(self.mean_order)]
        return {"nd_order": (("replicate", "mean_r"), rows)}

    def summary(self) -> dict:
        d = {"mean_r": float(np.mean(self.mean_order)), "asynchronous": self.asynchronous,
             "network_power": self.network.total_power()}
        if self.noise_relation:
            d["noise_relation_distance"] = [float(x) for x in self.noise_relation]
        return d


@dataclass
class ImfResult:
    scenario: Scenario
    state: ImfState
    oscillators: dict

    def smoothed(self, spec: Spectrum) -> Spectrum:
        return smooth_spectrum(spec, self.scenario.smoothing_bin)

    def spectra(self, outputs) -> dict:
        out = {}
        if "network" in outputs:
            out["imf_network"] = self.smoothed(self.state.pointer_spectrum)
        if "noise" in outputs:
            out["imf_noise"] = self.smoothed(self.state.noise_spectrum)
        if "oscillators" in outputs:
            for i, s in self.oscillators.items():
                out[f"imf_osc{i}"] = s
        if "iterates" in outputs:
            for it, s in enumerate(self.state.iterates):
                out[f"imf_iter{it:03d}"] = self.smoothed(s)
        return out

    def tables(self, outputs) -> dict:
        if "history" not in outputs:
            return {}
        rows = [(i + 1, d, p) for i, (d, p) in enumerate(zip(self.state.history,
                                                             self.state.pointer_power))]
        return {"imf_history": (("iteration", "distance", "pointer_power"), rows)}

    def summary(self) -> dict:
        return {"iterations": self.state.iter, "converged": self.state.converged,
                "final_distance": self.state.history[-1] if self.state.history else None,
                "gain": self.state.gain}


@dataclass
class ComparisonReport:
    nd: NdResult
    imf: ImfResult
    distances: dict

    def spectra(self, outputs) -> dict:
        out = self.nd.spectra(outputs)
        out.update(self.imf.spectra(outputs))
        return out

    def tables(self, outputs) -> dict:
        out = self.nd.tables(outputs)
        out.update(self.imf.tables(outputs))
        rows = sorted(self.distances.items())
        out["distances"] = (("observable", "imf_vs_nd_distance"), rows)
        return out

    def summary(self) -> dict:
        return {"nd": self.nd.summary(), "imf": self.imf.summary(),
                "distances": dict(sorted(self.distances.items()))}


@dataclass
class OrderSweepTable:
    param: str
    rows: list  # (value, mean r, stderr, flagged synchronous)
    n_osc: list

    def spectra(self, outputs) -> dict:
        return {}

    def tables(self, outputs) -> dict:
        if "order" not in outputs:
            return {}
        return {"order_sweep": ((self.param, "mean_r", "stderr", "synchronous_flag"),
                                [(v, m, s, int(f)) for v, m, s, f in self.rows])}

    def summary(self) -> dict:
        return {"param": self.param, "points": len(self.rows),
                "flagged": [r[0] for r in self.rows if r[3]]}

    def log_slope(self) -> float:
        """Least-squares slope of log mean r against log N."""
        n = np.log(np.asarray(self.n_osc, dtype=float))
        r = np.log(np.asarray([row[1] for row in self.rows]))
        return float(np.polyfit(n, r, 1)[0])


@dataclass
class CheckResult:
    estimate: Spectrum
    reference: Spectrum
    stats: dict
    labels: tuple = ("estimate", "reference")

    def spectra(self, outputs) -> dict:
        if not outputs:
            return {}
        return {self.labels[0]: self.estimate, self.labels[1]: self.reference}

    def tables(self, outputs) -> dict:
        return {}

    def summary(self) -> dict:
        return dict(self.stats)


# ---------------------------------------------------------------- runners

def _one_network(scenario: Scenario, params: SimParams, replicate: int, record: RecordRequest,
                 keep_recording: bool = False):
    disorder = sample_disorder(params, make_stream(params.seed, "disorder", replicate),
                               freqs=scenario.fixed_freqs, index=replicate)
    init = init_phases(params, make_stream(params.seed, "init", replicate))
    rec = simulate_network(params, disorder, init, record)
    out = {"freqs": disorder.freqs.tolist(), "mean_r": rec.mean_order}
    if rec.pointers.size:
        out["network"] = mean_periodogram(rec.pointers, rec.sample_dt)
        cols = {int(i): k for k, i in enumerate(rec.oscillators)}
        out["oscillators"] = {i: Spectrum(frequency_grid(rec.n_samples, rec.sample_dt),
                                          periodogram_values(rec.pointers[:, cols[i]], rec.sample_dt))
                              for i in scenario.oscillators}
    if rec.noise_series is not None:
        out["noise"] = mean_periodogram(rec.noise_series, rec.sample_dt)
        out["relation"] = noise_relation_check(rec, params, scenario.smoothing_bin).distance
    if keep_recording:
        out["recording"] = rec
    return out


def _mean(specs):
    first = specs[0]
    return Spectrum(first.omega, np.mean([s.values for s in specs], axis=0))


def run_nd(scenario: Scenario, threads: int = 1, keep_recordings: bool = False):
    """Network dynamics over ``scenario.replicates`` disorder draws.

    Returns an :class:`NdResult`; with ``keep_recordings`` also the list of
    raw :class:`TrajectoryRecording` objects.
    """
    params = scenario.base
    record = RecordRequest(oscillators="all", noise=list(range(scenario.noise_oscillators)) or None,
                           order=True, sample_every=scenario.sample_every)
    runs = _fan_out(lambda r: _one_network(scenario, params, r, record, keep_recordings),
                    list(range(scenario.replicates)), threads)
    noise = _mean([r["noise"] for r in runs]) if scenario.noise_oscillators else None
    result = NdResult(
        scenario=scenario, network=_mean([r["network"] for r in runs]), noise=noise,
        oscillators={i: _mean([r["oscillators"][i] for r in runs]) for i in scenario.oscillators},
        mean_order=[r["mean_r"] for r in runs], freqs=runs[0]["freqs"],
        noise_relation=[r["relation"] for r in runs if "relation" in r])
    if keep_recordings:
        return result, [r["recording"] for r in runs]
    return result


def run_imf(scenario: Scenario, threads: int = 1, freqs=None, progress=None) -> ImfResult:
    """IMF to convergence, then single-oscillator spectra for ``scenario.oscillators``.

    ``freqs`` gives the frequencies of the listed oscillators; by default
    they come from ``scenario.fixed_freqs`` or from the disorder stream of
    replicate 0, i.e. the same draw a network run would use.
    """
    if scenario.imf is None:
        raise ValueError("scenario has no [imf] section")
    params = scenario.base
    state = imf_iterate(params, scenario.imf, threads=threads,
                        keep_iterates="iterates" in scenario.outputs, progress=progress)
    singles = {}
    if scenario.oscillators:
        if freqs is None:
            if scenario.fixed_freqs is not None:
                freqs = scenario.fixed_freqs
            else:
                freqs = params.freq_spread * make_stream(params.seed, "disorder", 0).standard_normal(
                    params.n_osc)
        for i in scenario.oscillators:
            singles[i] = single_oscillator_spectrum(state, freqs[i], params, scenario.single_trials,
                                                    imf=scenario.imf, stream_id=i, threads=threads)
    return ImfResult(scenario, state, singles)


def compare(a: Spectrum, b: Spectrum, band: float | None = None) -> float:
    """Distance of ``a`` from ``b`` over their shared (optionally cropped) band."""
    a, b = common_band(a, b)
    return spectral_distance(a, b, band)


def run_comparison(scenario: Scenario, threads: int = 1, nd: NdResult | None = None,
                   progress=None) -> ComparisonReport:
    """Run both arms and report IMF-vs-ND distances of smoothed spectra.

    In ``single`` mode the IMF uses the realized frequencies of the network
    run (fixed list, one per oscillator); in ``ensemble`` mode it runs as
    configured. A precomputed network result can be passed as ``nd``.
    """
    if scenario.imf is None:
        raise ValueError("comparison needs an [imf] section")
    if nd is None:
        nd = run_nd(scenario, threads)
    imf_scn = scenario
    if scenario.mode == "single":
        imf_params = dataclasses.replace(scenario.imf, freq_mode="fixed", freqs=tuple(nd.freqs),
                                         n_freqs=len(nd.freqs))
        imf_scn = dataclasses.replace(scenario, imf=imf_params)
    imf = run_imf(imf_scn, threads, freqs=nd.freqs, progress=progress)
    distances = {"network": compare(imf.smoothed(imf.state.pointer_spectrum), nd.smoothed(nd.network))}
    for i in scenario.oscillators:
        distances[f"osc{i}"] = compare(imf.oscillators[i], nd.smoothed(nd.oscillators[i]))
    return ComparisonReport(nd, imf, distances)


def run_order_sweep(scenario: Scenario, threads: int = 1) -> OrderSweepTable:
    """Time-averaged order parameter against a swept parameter.

    Replicate ``r`` uses the same disorder and initial-phase streams at every
    sweep point, so differences between points are not blurred by fresh
    randomness. A point is flagged when its mean r exceeds 3/sqrt(N) + 0.1.
    """
    if scenario.sweep is None:
        raise ValueError("order sweep needs a [scenario.sweep] table")
    name, values = scenario.sweep
    record = RecordRequest(oscillators=None, order=True, sample_every=scenario.sample_every)
    points = [scenario.base.replace(**{name: v}) for v in values]
    if scenario.fixed_freqs is not None and name == "n_osc":
        raise ValueError("fixed_freqs cannot be combined with a sweep over n_osc")
    tasks = [(p, r) for p in points for r in range(scenario.replicates)]
    runs = _fan_out(lambda t: _one_network(scenario, t[0], t[1], record)["mean_r"], tasks, threads)
    R = scenario.replicates
    rows = []
    for k, (v, p) in enumerate(zip(values, points)):
        rs = np.asarray(runs[k * R:(k + 1) * R])
        err = float(rs.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
        mean = float(rs.mean())
        rows.append((v, mean, err, mean > 3.0 / math.sqrt(p.n_osc) + 0.1))
    return OrderSweepTable(name, rows, [p.n_osc for p in points])


def kubo_check(params: SimParams, trials: int, sample_every: int = 10, threads: int = 1,
               band: float = 10.0, smoothing_bin: float = DEFAULT_BIN) -> CheckResult:
    """Free phase diffusion versus the Kubo spectrum 2D/(D^2 + omega^2).

    Uses the effective dynamics with zero network noise and zero frequency.
    The phase starts uniform, so the pointer is stationary from t = 0 and no
    transient window is spent.
    """
    D = params.noise_intensity
    if D <= 0:
        raise ValueError("the Kubo check needs a positive noise intensity")
    imf = ImfParams(n_freqs=1, sample_every=sample_every, transient_windows=0)
    total = trial_spectrum_sum(np.zeros(trials), lambda i: make_stream(params.seed, "kubo", i), None,
                               params, imf, threads)
    nc = params.window_steps // sample_every
    raw = Spectrum(frequency_grid(nc, sample_every * params.dt), total / trials)
    est = smooth_spectrum(raw, smoothing_bin)
    ref = analytic_spectrum(Kubo(D), est.omega)
    stats = {"distance": spectral_distance(est, ref, band), "peak": est.value_at(0.0),
             "analytic_peak": 2.0 / D, "power": raw.total_power(), "trials": trials}
    return CheckResult(est, ref, stats, ("kubo_estimate", "kubo_analytic"))


def _target_kind(spec: dict):
    kind = spec.get("kind", "lorentzian")
    if kind == "lorentzian":
        return Lorentzian(spec.get("a", 2.0), spec.get("b", 20.0))
    if kind == "gaussian":
        return GaussianFreq(spec.get("sigma", 1.0))
    if kind == "kubo":
        return Kubo(spec.get("D", 0.5))
    raise ValueError(f"unknown target kind {kind!r}")


def surrogate_check(target, window: float, n_bins: int, draws: int, seed: int = 0,
                    threads: int = 1) -> CheckResult:
    """Average periodogram of generated noise against its target spectrum.

    Each bin of a single periodogram is exponentially distributed with mean
    S, so its average over ``draws`` has standard error ``S / sqrt(draws)``.
    """
    sdt = window / n_bins
    ref = analytic_spectrum(target, frequency_grid(n_bins, sdt))
    scale = coefficient_scale(ref, window)
    chunks = [(s, min(draws, s + 64)) for s in range(0, draws, 64)]

    def run(bounds):
        gauss = np.stack([draw_coefficients(make_stream(seed, "surrogate", i), n_bins)
                          for i in range(*bounds)])
        return periodogram_values(synthesize(scale, gauss, window), sdt).sum(axis=0)

    total = np.zeros(n_bins)
    for part in _fan_out(run, chunks, threads):
        total += part
    est = Spectrum(ref.omega, total / draws)
    z = (est.values - ref.values) / (ref.values / math.sqrt(draws))
    stats = {"distance": spectral_distance(est, ref), "max_abs_z": float(np.max(np.abs(z))),
             "draws": draws, "bins": n_bins}
    return CheckResult(est, ref, stats, ("surrogate_estimate", "surrogate_target"))


# ---------------------------------------------------------------- output

def _write_table(path: Path, columns, rows, meta: dict):
    header = json.dumps(meta, sort_keys=True, default=_json_default)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# kuramoto-imf table\n")
        fh.write(f"# meta: {header}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                              for x in row) + "\n")
    return path


def emit_outputs(result, out_dir, command: str, config: dict, outputs=None, plot: bool = False):
    """Write data files, ``meta.json`` and optionally SVG plots into ``out_dir``.

    Files carry no timestamps, so identical runs give identical bytes. The
    metadata holds the command and full config for re-running.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    outputs = tuple(outputs if outputs is not None else config.get("scenario", {}).get("outputs", ()))
    provenance = {"command": command, "seed": config.get("model", {}).get("seed"),
                  "version": VERSION}
    written = []
    spectra = result.spectra(outputs) if result is not None else {}
    tables = result.tables(outputs) if result is not None else {}
    try:
        for name, spec in spectra.items():
            written.append(write_spectrum(out_dir / f"{name}.csv", spec, dict(provenance, series=name)))
        for name, (cols, rows) in tables.items():
            written.append(_write_table(out_dir / f"{name}.csv", cols, rows,
                                        dict(provenance, table=name)))
        if plot and result is not None:
            from . import plotting
            written.extend(plotting.plot_result(result, spectra, tables, out_dir, command))
        meta = dict(provenance, config=config,
                    summary=result.summary() if result is not None else {},
                    files=sorted(p.name for p in written))
        meta_path = out_dir / "meta.json"
        meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2, default=_json_default) + "\n",
                             encoding="utf-8")
    except OSError as exc:
        raise OSError(f"writing outputs to {out_dir} failed: {exc}") from exc
    return [meta_path] + written


def run_command(command: str, config: dict, seed: int | None = None, threads: int = 1,
                progress=None):
    """Dispatch one CLI command; returns ``(result, resolved config)``."""
    scenario = scenario_from_config(config, seed)
    resolved = scenario.to_dict()
    check = scenario.check
    if command == "nd":
        result = run_nd(scenario, threads)
    elif command == "imf":
        result = run_imf(scenario, threads, progress=progress)
    elif command == "compare":
        result = run_comparison(scenario, threads, progress=progress)
    elif command == "order-sweep":
        result = run_order_sweep(scenario, threads)
    elif command == "kubo-check":
        result = kubo_check(scenario.base, check.get("trials", 1000), scenario.sample_every, threads,
                            check.get("band", 10.0), scenario.smoothing_bin)
    elif command == "surrogate-check":
        result = surrogate_check(_target_kind(check.get("target", {})), scenario.base.window,
                                 check.get("bins", 1000), check.get("draws", 1000),
                                 scenario.base.seed, threads)
    else:
        raise ValueError(f"unknown command {command!r}")
    return result, resolved
