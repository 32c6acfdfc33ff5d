import json
import math

import numpy as np
import pytest

from kuramoto_imf import cli
from kuramoto_imf.experiments import (Scenario, emit_outputs, kubo_check, load_config, run_command,
                                      run_comparison, run_nd, run_order_sweep, scenario_from_config,
                                      surrogate_check)
from kuramoto_imf.imf import ImfParams
from kuramoto_imf.model import SimParams
from kuramoto_imf.spectral import Lorentzian, read_spectrum

TOML = """
[scenario]
name = "tiny"
outputs = ["network", "noise", "oscillators", "order", "history"]
oscillators = [0, 3]
single_trials = 8

[model]
n_osc = 24
mean_coupling = 1.0
coupling_disorder = 1.0
dt = 0.01
window = 100.0
transient = 5.0
seed = 7

[integrate]
sample_every = 5
noise_oscillators = 6

[imf]
n_freqs = 24
max_iters = 2
sample_every = 5
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TOML)
    return path


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(sweep=("integrator", [1]))
    with pytest.raises(ValueError):
        Scenario(sweep=("nonsense", [1]))
    with pytest.raises(ValueError):
        Scenario(outputs=("pictures",))
    with pytest.raises(ValueError):
        Scenario(base=SimParams(n_osc=4), oscillators=(4,))
    Scenario(sweep=("mean_coupling", [0.0, 1.0]))


def test_config_roundtrip(config):
    cfg = load_config(config)
    sc = scenario_from_config(cfg)
    assert sc.base.n_osc == 24 and sc.imf.n_freqs == 24 and sc.oscillators == (0, 3)
    again = scenario_from_config(json.loads(json.dumps(sc.to_dict())))
    assert again.to_dict() == sc.to_dict()
    assert scenario_from_config(cfg, seed=99).base.seed == 99


def test_empty_outputs_give_metadata_only(tmp_path, config):
    cfg = load_config(config)
    cfg["scenario"]["outputs"] = []
    result, resolved = run_command("nd", cfg)
    paths = emit_outputs(result, tmp_path / "o", "nd", resolved, plot=True)
    assert [p.name for p in paths] == ["meta.json"]
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["meta.json"]


def test_same_config_gives_identical_bytes(tmp_path, config):
    for name in ("a", "b"):
        assert cli.main(["compare", "--config", str(config), "--out", str(tmp_path / name), "--plot"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "spectra.svg" in files and "distances.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_meta_reruns_to_same_outputs(tmp_path, config):
    assert cli.main(["imf", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    meta = tmp_path / "a" / "meta.json"
    assert cli.main(["imf", "--config", str(meta), "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_thread_count_does_not_change_outputs(tmp_path, config):
    assert cli.main(["nd", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["nd", "--config", str(config), "--threads", "3", "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_spectrum_output_reads_back_exactly(tmp_path, config):
    cfg = load_config(config)
    result, resolved = run_command("nd", cfg)
    emit_outputs(result, tmp_path, "nd", resolved)
    back, meta = read_spectrum(tmp_path / "nd_network.csv")
    mem = result.spectra(("network",))["nd_network"]
    assert np.array_equal(back.omega, mem.omega) and np.array_equal(back.values, mem.values)
    assert meta["seed"] == 7 and meta["command"] == "nd"


def test_cli_errors_are_reported(tmp_path, caplog):
    assert cli.main(["nd", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 1
    assert "cannot read config" in caplog.text


def test_cli_rejects_bad_seed():
    with pytest.raises(SystemExit):
        cli.main(["nd", "--seed", "-3"])


def test_nd_result_flags_and_noise_relation(config):
    sc = scenario_from_config(load_config(config))
    res = run_nd(sc)
    assert res.noise is not None and len(res.noise_relation) == 1
    assert set(res.oscillators) == {0, 3}
    assert res.network.total_power() == pytest.approx(1.0, rel=1e-9)


def test_comparison_single_mode_uses_network_frequencies(config):
    sc = scenario_from_config(load_config(config))
    rep = run_comparison(sc)
    assert rep.imf.state.iter == 2
    assert set(rep.distances) == {"network", "osc0", "osc3"}
    assert all(np.isfinite(v) for v in rep.distances.values())


def test_order_sweep_small_examples():
    base = SimParams(n_osc=1000, mean_coupling=0.0, coupling_disorder=0.0, dt=0.05, window=200.0,
                     transient=10.0)
    sc = Scenario(base=base, sweep=("mean_coupling", [0.0, 5.0]), replicates=2, sample_every=10,
                  outputs=("order",))
    table = run_order_sweep(sc)
    (k0, r0, _, f0), (k5, r5, _, f5) = table.rows
    assert 0.5 / math.sqrt(1000) < r0 < 2.0 / math.sqrt(1000) and not f0
    assert r5 > 0.8 and f5


def test_kubo_and_surrogate_checks_small():
    p = SimParams(n_osc=1, coupling_disorder=0.0, freq_spread=0.0, noise_intensity=0.5, dt=1e-3,
                  window=100.0, transient=0.0)
    res = kubo_check(p, trials=64)
    assert res.stats["power"] == pytest.approx(1.0, rel=1e-9)
    assert res.stats["distance"] < 0.2
    chk = surrogate_check(Lorentzian(2.0, 20.0), 100.0, 1000, draws=300)
    assert chk.stats["max_abs_z"] < 5 and chk.stats["distance"] < 0.06


def test_shipped_configs_parse():
    from pathlib import Path
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert paths
    for path in paths:
        sc = scenario_from_config(load_config(path))
        assert scenario_from_config(sc.to_dict()).to_dict() == sc.to_dict()
