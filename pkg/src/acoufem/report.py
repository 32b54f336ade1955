"""Figure rendering for run outputs.

Probe traces, harmonic sweeps and eigenfrequency spectra are rendered
to PNG files next to the delimited output so a run leaves a
human-readable report behind.  Uses the Agg backend; safe headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def probe_history_figure(histories, path, xlabel: str = "t [s]") -> None:
    """Line plot of every probe trace against its abscissa."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, h in enumerate(histories):
        x, y, z = h.location
        ax.plot(h.abscissae, h.values, label=f"probe_{i} ({x:g}, {y:g}, {z:g})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("acouPressure [Pa]")
    ax.grid(True, linestyle=":", linewidth=0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def eigenfrequency_figure(frequencies, path) -> None:
    """Stem plot of the computed eigenfrequencies."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.stem([float(f) for f in frequencies])
    ax.set_xlabel("mode index")
    ax.set_ylabel("eigenfrequency [Hz]")
    ax.grid(True, linestyle=":", linewidth=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
