"""Shared fixtures; the acceptance verdict lines are printed at session end."""
import dataclasses

import pytest

from kuramoto_imf.experiments import Scenario, run_comparison, run_nd
from kuramoto_imf.imf import ImfParams
from kuramoto_imf.model import Integrator, SimParams

_VERDICTS = {}


class Verdict:
    """Collects sub-checks of one acceptance criterion and records the outcome."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, label, value, ok):
        self.checks.append((label, value, bool(ok)))
        return ok

    @property
    def passed(self):
        return bool(self.checks) and all(ok for _, _, ok in self.checks)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        detail = "; ".join(f"{label}={value:.4g}" if isinstance(value, float) else f"{label}={value}"
                           for label, value, _ in self.checks)
        return f"[{status}] criterion {self.number:>2}: {self.title} ({detail})"

    def finish(self):
        _VERDICTS[self.number] = self
        print("\n" + self.line())
        failed = [label for label, _, ok in self.checks if not ok]
        assert not failed, f"criterion {self.number} failed: {failed}\n{self.line()}"


@pytest.fixture
def criterion():
    return Verdict


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n].line())


# Desk-scale network shared by the noise-relation, IMF-vs-ND and
# single-oscillator comparisons: N = 1000, k = K = sigma = 1, T = 10^4,
# Euler steps of 0.01, pointers recorded every 0.25.
LARGE_ND = Scenario(
    name="large-network",
    base=SimParams(n_osc=1000, mean_coupling=1.0, coupling_disorder=1.0, freq_spread=1.0, dt=0.01,
                   window=10_000.0, transient=100.0, seed=11, integrator=Integrator.EULER_MARUYAMA),
    imf=ImfParams(n_freqs=1000, max_iters=20, conv_tol=1e-2),
    sample_every=25, noise_oscillators=250, oscillators=(0, 1, 2), single_trials=400,
    outputs=("network", "noise", "oscillators"),
)


@pytest.fixture(scope="session")
def large_nd():
    return run_nd(LARGE_ND)


@pytest.fixture(scope="session")
def large_comparison(large_nd):
    # the mean-field arm runs on a 10^3 window; smoothed grids coincide
    imf_scn = dataclasses.replace(LARGE_ND, base=LARGE_ND.base.replace(window=1000.0))
    return run_comparison(imf_scn, nd=large_nd)
