"""Optional PNG figures for scenario runs (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def space_time(snapshots, path) -> None:
    plt = _pyplot()
    data = np.array([s.profile.values for s in snapshots])
    t = [s.t for s in snapshots]
    L = snapshots[0].profile.L
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(data, aspect="auto", origin="lower", extent=(0, L, t[0], t[-1]),
                   cmap="RdBu_r")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.colorbar(im, ax=ax)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def phase_vs_integral(check, path) -> None:
    """c(t) next to c(t0) + integral of G (trapezoid)."""
    plt = _pyplot()
    t, G = check.times, check.G
    integral = check.c_lifted[0] + np.concatenate(([0.0], np.cumsum(0.5 * (G[1:] + G[:-1])
                                                                     * np.diff(t))))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, check.c_lifted, label="c(t)")
    ax.plot(t, integral, "--", label="c(0) + int G")
    ax.set_xlabel("t")
    ax.legend()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def iterate_histograms(iterates: dict, path) -> None:
    """One histogram of the Poincare iterates mod 1 per torus case."""
    plt = _pyplot()
    fig, axes = plt.subplots(len(iterates), 1, figsize=(6, 1.6 * len(iterates)), sharex=True)
    for ax, (name, pts) in zip(np.atleast_1d(axes), iterates.items()):
        ax.hist(pts, bins=200, range=(0.0, 1.0))
        ax.set_ylabel(name, rotation=0, ha="right")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_result(result, out) -> None:
    out = Path(out)
    if "profiles" in result.info:
        space_time(result.info["profiles"], out / "space_time.png")
    if "finest" in result.info:
        phase_vs_integral(result.info["finest"], out / "phase.png")
    if "iterates" in result.info:
        iterate_histograms(result.info["iterates"], out / "iterates.png")
