"""Figure output: PNG via matplotlib (Agg) plus a gnuplot script over the CSV data."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "plot_trajectory",
    "plot_region",
    "plot_locus",
    "trajectory_gnuplot",
    "region_gnuplot",
    "locus_gnuplot",
]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trajectory(trajectory, path) -> Path:
    """Positions, velocities and the disagreement norm against time."""
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    t = trajectory.times
    for i in range(trajectory.n):
        axes[0].plot(t, trajectory.positions[:, i], lw=0.8, label=f"x{i + 1}")
        axes[1].plot(t, trajectory.velocities[:, i], lw=0.8, label=f"v{i + 1}")
    axes[2].semilogy(t, np.maximum(trajectory.psi_norm, 1e-300), lw=0.8, color="k")
    axes[0].set_ylabel("position")
    axes[1].set_ylabel("velocity")
    axes[2].set_ylabel("|psi|")
    axes[2].set_xlabel("t (s)")
    axes[0].legend(ncol=min(trajectory.n, 5), fontsize="small")
    return _save(fig, path)


def _column(values):
    return np.array([np.nan if v is None or not np.isfinite(v) else v for v in values], dtype=float)


def plot_region(tau1_grid, nyquist=None, lmi=None, path="region.png") -> Path:
    """Stable-region boundaries ``tau2_max(tau1)`` for one or both methods."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    grid = np.asarray(tau1_grid, dtype=float)
    if nyquist is not None:
        ax.plot(grid, _column(nyquist), "o-", label="Nyquist")
    if lmi is not None:
        ax.plot(grid, _column(lmi), "s--", label="Lyapunov-Krasovskii")
    if len(grid):
        top = max(grid.max(), 0.1)
        ax.plot([0, top], [0, top], ":", color="grey", lw=0.8, label="tau1 = tau2")
    ax.set_xlabel("tau1 (s)")
    ax.set_ylabel("max tau2 (s)")
    ax.legend()
    return _save(fig, path)


def plot_locus(omega, response, path) -> Path:
    """Nyquist locus with the critical point marked."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    response = np.asarray(response)
    ax.plot(response.real, response.imag, lw=1.0)
    ax.plot([-1], [0], "r+", ms=12)
    ax.axhline(0, color="grey", lw=0.5)
    ax.axvline(0, color="grey", lw=0.5)
    ax.set_xlabel("Re G")
    ax.set_ylabel("Im G")
    ax.set_title(f"omega in [{np.min(omega):.3g}, {np.max(omega):.3g}] rad/s", fontsize="small")
    return _save(fig, path)


def _write(path, lines) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def trajectory_gnuplot(csv_name: str, n: int, path, png_name: str = "trajectory_gp.png") -> Path:
    plots = ", ".join(f"'{csv_name}' using 1:{i + 2} with lines title 'x{i + 1}'" for i in range(n))
    return _write(path, [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{png_name}'",
        "set xlabel 't (s)'",
        "set ylabel 'position'",
        f"plot {plots}",
    ])


def region_gnuplot(csv_names: dict, path, png_name: str = "region_gp.png") -> Path:
    """``csv_names`` maps a legend label to a ``tau1,tau2_max[,status]`` file."""
    plots = ", ".join(f"'{name}' using 1:2 with linespoints title '{label}'"
                      for label, name in csv_names.items())
    return _write(path, [
        "set datafile separator ','",
        "set datafile missing 'none'",
        "set terminal pngcairo size 700,560",
        f"set output '{png_name}'",
        "set xlabel 'tau1 (s)'",
        "set ylabel 'max tau2 (s)'",
        f"plot {plots}" if plots else "# no data",
    ])


def locus_gnuplot(csv_name: str, path, png_name: str = "locus_gp.png") -> Path:
    return _write(path, [
        "set datafile separator ','",
        "set terminal pngcairo size 700,640",
        f"set output '{png_name}'",
        "set xlabel 'Re G'",
        "set ylabel 'Im G'",
        "set object circle at -1,0 size 0.02",
        f"plot '{csv_name}' using 2:3 every ::1 with lines title 'G(jw)'",
    ])
