"""Static report figures (matplotlib, file output only)."""
from __future__ import annotations

from pathlib import Path
from typing import Callable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import GridSpec  # noqa: E402
from .jko import RunManifest, Snapshot  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_profiles(path, grid: GridSpec, snaps: Sequence[Snapshot],
                  exact: Callable[[float], np.ndarray] | None = None, title: str = "") -> Path:
    """Density snapshots (1D), optionally with the exact profile dashed on top."""
    x = grid.axes[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = plt.cm.viridis(np.linspace(0, 0.9, len(snaps)))
    for s, c in zip(snaps, colors):
        ax.plot(x, np.asarray(s.rho).ravel(), color=c, lw=1.4, label=f"t = {s.time:.4g}")
        if exact is not None:
            ax.plot(x, exact(s.time), color="k", lw=0.8, ls="--")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_iterations(path, runs: Mapping[str, RunManifest], title: str = "") -> Path:
    """Primal-dual iterations per implicit step for one or more runs."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, man in runs.items():
        ax.plot(man.times[1:], man.iterations, marker=".", lw=1, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("iterations per step")
    ax.set_title(title)
    if len(runs) > 1:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_entropy(path, runs: Mapping[str, RunManifest], title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, man in runs.items():
        ax.plot(man.times, man.entropies, marker=".", lw=1, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("discrete energy")
    ax.set_title(title)
    if len(runs) > 1:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_convergence(path, dts: Sequence[float], errors: Sequence[float], slope: float,
                     title: str = "") -> Path:
    dts, errors = np.asarray(dts, dtype=float), np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.loglog(dts, errors, "o-", label=f"fitted slope {slope:.3f}")
    ref = errors[-1] * dts / dts[-1]
    ax.loglog(dts, ref, "k--", lw=0.8, label="slope 1")
    ax.set_xlabel("dt")
    ax.set_ylabel("relative L1 error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_fronts(path, times: Sequence[float], positions: Sequence[float], speed: float,
                title: str = "") -> Path:
    t, xs = np.asarray(times, dtype=float), np.asarray(positions, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(t, xs, "o", label="front")
    coef = np.polyfit(t, xs, 1)
    ax.plot(t, np.polyval(coef, t), "k--", lw=0.8, label=f"speed {speed:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("front position")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)
