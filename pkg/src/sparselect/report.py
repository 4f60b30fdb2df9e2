"""Figure rendering for experiment outputs (PNG files next to the CSVs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIGSIZE = (6.4, 4.0)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def signal_pair_figure(t, original, noisy, path, labels=("original", "noisy")):
    fig, axes = plt.subplots(1, 2, figsize=(2 * _FIGSIZE[0] / 1.6, _FIGSIZE[1] / 1.2))
    for ax, series, label in zip(axes, (original, noisy), labels):
        ax.plot(t, series, lw=0.8)
        ax.set_title(label)
        ax.set_xlabel("t")
    _save(fig, path)


def overlay_figure(t, original, estimate, path, labels=("original", "denoised")):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(t, original, lw=0.8, label=labels[0])
    ax.plot(t, estimate, lw=0.8, label=labels[1])
    ax.set_xlabel("t")
    ax.legend()
    _save(fig, path)


def lambda_trace_figure(selres, path):
    records = [rec for rec in selres.trace]
    iters = np.arange(len(records))
    lams = np.array([rec.lambdas for rec in records])
    levels = np.array([rec.levels for rec in records])
    d = lams.shape[1]
    fig, axes = plt.subplots(1, 2, figsize=(2 * _FIGSIZE[0] / 1.6, _FIGSIZE[1] / 1.2))
    for j in range(d):
        axes[0].plot(iters, lams[:, j], marker="o", ms=3, label=f"block {j}")
        axes[1].plot(iters, levels[:, j], marker="o", ms=3, label=f"block {j}")
    axes[0].set_ylabel("penalty")
    axes[1].set_ylabel("sparsity level")
    for ax in axes:
        ax.set_xlabel("solve")
        ax.legend(fontsize=8)
    _save(fig, path)


def weights_figure(t, weights, path):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.stem(t, weights, markerfmt=".", basefmt="gray")
    ax.set_xlabel("feature")
    ax.set_ylabel("weight")
    _save(fig, path)


def render_experiment_figures(outcome, cfg, out_dir):
    out_dir = Path(out_dir)
    arrays = outcome.arrays
    if cfg.experiment in ("doppler_block_separable", "doppler_nonseparable"):
        signal_pair_figure(arrays["t"], arrays["original"], arrays["noisy"],
                           out_dir / "original_vs_noisy.png")
        overlay_figure(arrays["t"], arrays["original"], arrays["denoised"],
                       out_dir / "original_vs_denoised.png")
    elif cfg.experiment == "csd":
        clean = arrays["lowpass"] + arrays["steps"]
        signal_pair_figure(arrays["t"], clean, arrays["noisy"],
                           out_dir / "original_vs_noisy.png")
        overlay_figure(arrays["t"], arrays["steps"], arrays["denoised_steps"],
                       out_dir / "steps_vs_estimate.png",
                       labels=("true steps", "estimate"))
        mask = ~np.isnan(arrays["denoised_lowpass"])
        overlay_figure(arrays["t"][mask], arrays["lowpass"][mask],
                       arrays["denoised_lowpass"][mask],
                       out_dir / "lowpass_vs_estimate.png",
                       labels=("true low-pass", "estimate"))
    elif cfg.experiment == "fused_svm":
        weights_figure(arrays["t"], arrays["weights"], out_dir / "weights.png")
    if outcome.selection is not None:
        lambda_trace_figure(outcome.selection, out_dir / "selection_trace.png")


def render_sweep_figure(key, rows, out_dir):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    nums = [row["num"] for row in rows]
    ax.plot(range(len(rows)), nums, marker="o")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([str(row[key]) for row in rows], rotation=20, fontsize=8)
    ax.set_xlabel(key)
    ax.set_ylabel("outer iterations")
    _save(fig, Path(out_dir) / "sweep.png")
