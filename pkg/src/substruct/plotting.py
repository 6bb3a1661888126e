"""Figures written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reporting import save_figure  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}
COLORS = {"CB": "#1f77b4", "DCB": "#d62728"}


def fidelity_figure(modes, eig_err, mac_diag, path):
    """Per-mode eigenvalue error (log scale) and MAC diagonal, one series per method.

    ``eig_err`` and ``mac_diag`` map method name -> array over ``modes``.
    """
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
        width = 0.38
        for k, method in enumerate(sorted(eig_err)):
            offset = (k - 0.5 * (len(eig_err) - 1)) * width
            ax1.bar(np.asarray(modes) + offset, np.maximum(eig_err[method], 1e-16), width,
                    label=method, color=COLORS.get(method))
            ax2.plot(modes, mac_diag[method], "o-", ms=4, label=method, color=COLORS.get(method))
        ax1.set_yscale("log")
        ax1.set_xlabel("mode")
        ax1.set_ylabel("relative eigenvalue error")
        ax1.set_xticks(modes)
        ax2.set_xlabel("mode")
        ax2.set_ylabel("MAC diagonal")
        ax2.set_xticks(modes)
        ax2.legend()
        fig.tight_layout()
        save_figure(fig, path)
        plt.close(fig)


def stage_figure(result, truth, path, stages=(1, 3, 5)):
    """Scatter of the particle clouds at the requested TMCMC stages."""
    available = [s for s in stages if s < len(result.stages)] or [len(result.stages) - 1]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(available), figsize=(3.2 * len(available), 3), squeeze=False)
        final = result.final.theta
        lo = np.minimum(final.min(axis=0), truth) - 0.05
        hi = np.maximum(final.max(axis=0), truth) + 0.05
        for ax, idx in zip(axes[0], available):
            stage = result.stages[idx]
            ax.scatter(stage.theta[:, 0], stage.theta[:, 1], s=3, alpha=0.4, color="0.3", lw=0)
            ax.plot(truth[0], truth[1], "x", color="#d62728", ms=8, mew=1.5)
            ax.set_title(f"stage {idx} (p = {stage.exponent:.3g})")
            ax.set_xlabel(r"$\theta_1$")
            ax.set_ylabel(r"$\theta_2$")
            if idx == available[-1]:
                ax.set_xlim(lo[0], hi[0])
                ax.set_ylim(lo[1], hi[1])
        fig.tight_layout()
        save_figure(fig, path)
        plt.close(fig)
