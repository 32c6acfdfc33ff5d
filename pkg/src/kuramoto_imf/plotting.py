"""Static SVG figures for CLI outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "svg.hashsalt": "kuramoto-imf",  # stable element ids
    "svg.fonttype": "none",
})

_DASHED = ("nd_", "kubo_analytic", "surrogate_target")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_spectra(spectra: dict, path, title: str = "", omega_max: float | None = 5.0,
                 log: bool = False) -> Path:
    """Overlay spectra; network-dynamics and reference curves are dashed."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for name, spec in spectra.items():
        style = "--" if name.startswith(_DASHED) else "-"
        ax.plot(spec.omega, spec.values, style, label=name)
    if omega_max is not None:
        ax.set_xlim(-omega_max, omega_max)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel(r"$\omega$")
    ax.set_ylabel(r"$S(\omega)$")
    if title:
        ax.set_title(title)
    if len(spectra) <= 12:
        ax.legend(fontsize=7)
    return _save(fig, Path(path))


def plot_history(rows, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.semilogy([r[0] for r in rows], [r[1] for r in rows], "o-", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("distance to previous iterate")
    return _save(fig, Path(path))


def plot_order(columns, rows, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    x = [r[0] for r in rows]
    ax.errorbar(x, [r[1] for r in rows], yerr=[r[2] for r in rows], fmt="o-", ms=3, capsize=2)
    ax.set_xlabel(columns[0])
    ax.set_ylabel(r"$\langle r \rangle$")
    if columns[0] == "n_osc":
        ax.set_xscale("log")
        ax.set_yscale("log")
    return _save(fig, Path(path))


def plot_result(result, spectra: dict, tables: dict, out_dir, command: str) -> list:
    out_dir = Path(out_dir)
    written = []
    curves = {k: v for k, v in spectra.items() if not k.startswith("imf_iter")}
    if curves:
        written.append(plot_spectra(curves, out_dir / "spectra.svg", title=command))
    iterates = {k: v for k, v in spectra.items() if k.startswith("imf_iter")}
    if iterates:
        written.append(plot_spectra(iterates, out_dir / "iterates.svg", title="noise spectrum iterates"))
    if "imf_history" in tables:
        written.append(plot_history(tables["imf_history"][1], out_dir / "history.svg"))
    if "order_sweep" in tables:
        cols, rows = tables["order_sweep"]
        written.append(plot_order(cols, rows, out_dir / "order_sweep.svg"))
    return written
