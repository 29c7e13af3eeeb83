"""Benchmark figure rendering: precision and success plots as PNG files,
written alongside the delimited curve data."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_report_figures(reports, out_dir: str | Path) -> list[Path]:
    """One precision plot and one success plot covering all reports.

    Legends carry the ranking score of each curve, highest first, in the
    usual benchmark-plot style.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    specs = [
        ("precision_plot.png", "Precision plot", "Location error threshold (px)",
         "Precision", lambda r: (r.mean_precision, r.precision_at_20),
         "[{score:.3f}] {label}"),
        ("success_plot.png", "Success plot", "Overlap threshold",
         "Success rate", lambda r: (r.mean_success, r.auc),
         "[{score:.3f}] {label}"),
    ]
    for filename, title, xlabel, ylabel, pick, fmt in specs:
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        for report in sorted(reports, key=lambda r: pick(r)[1], reverse=True):
            curve, score = pick(report)
            ax.plot(curve.thresholds, curve.values,
                    label=fmt.format(score=score, label=report.label), linewidth=1.8)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_ylim(0.0, 1.02)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
