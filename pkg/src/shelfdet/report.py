"""Rendering of evaluation reports: console table, CSV, JSON, PR figures."""

from __future__ import annotations

import csv
import io
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport  # noqa: E402


def format_report_table(report: EvalReport) -> str:
    lines = ["IoU threshold    AP", "-" * 23]
    for t in sorted(report.ap_per_threshold):
        lines.append(f"{t:>13.2f}    {report.ap_per_threshold[t]:.4f}")
    lines.append("-" * 23)
    lines.append(f"mAP {report.map:.4f}")
    lines.append(
        f"ground truth: {report.counts.total_gt}, "
        f"detections evaluated: {report.counts.total_detections}"
    )
    return "\n".join(lines)


def report_csv_bytes(report: EvalReport) -> bytes:
    """Delimited per-threshold summary; the last row is the aggregate mAP."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["iou_threshold", "average_precision", "matched"])
    for t in sorted(report.ap_per_threshold):
        w.writerow(
            [
                f"{t:.2f}",
                repr(report.ap_per_threshold[t]),
                report.counts.matched_per_threshold[t],
            ]
        )
    w.writerow(["mAP", repr(report.map), ""])
    return buf.getvalue().encode("utf-8")


def report_json_bytes(report: EvalReport) -> bytes:
    return json.dumps(report.to_dict(), indent=2).encode("utf-8")


def render_pr_curves(report: EvalReport, path) -> None:
    """One figure, one interpolated precision-recall curve per IoU threshold.

    `path` may be a filesystem path or a binary file-like object (PNG).
    """
    fig, ax = plt.subplots(figsize=(6, 4.5))
    cmap = plt.get_cmap("viridis")
    thresholds = sorted(report.precision_recall_curves)
    for k, t in enumerate(thresholds):
        ax.plot(
            report.recall_grid,
            report.precision_recall_curves[t],
            color=cmap(k / max(1, len(thresholds) - 1)),
            label=f"IoU {t:.2f}",
        )
    ax.set_xlabel("recall")
    ax.set_ylabel("interpolated precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.set_title(f"mAP {report.map:.4f}")
    ax.legend(fontsize=7, ncol=2, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120, format="png" if hasattr(path, "write") else None)
    plt.close(fig)
