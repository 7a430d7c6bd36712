"""Evaluation outputs: human-readable report, flat key-value summary,
per-band PR-curve CSVs, and rendered PR-curve figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import EvalReport

BAND_TITLES = {
    "overall": "Overall",
    "range_00_20": "0-20 m",
    "range_20_40": "20-40 m",
    "range_40_60": "40-60 m",
    "az_00_15": "Center (0-15 deg)",
    "az_15_32": "Edges (15-32 deg)",
}


def format_report(report: EvalReport, title: str = "BEV occupancy evaluation") -> str:
    lines = [
        title,
        "=" * len(title),
        "Metrics are pooled over cells across all evaluated frames (not per-frame averages).",
        "",
        f"AP (AUPRC)        : {report.ap:.4f}",
        f"IoU occupied      : {report.iou:.4f}",
        f"UHR               : {report.uhr:.4f}",
        f"global threshold  : {report.threshold:.6g}",
        f"pos_frac          : {report.pos_frac:.4f}",
        f"cells / positives : {report.n_cells} / {report.n_pos}",
        "",
        f"{'band':<20} {'AP':>8} {'IoU':>8} {'pos_frac':>9} {'cells':>9}",
    ]
    for name, b in report.bands.items():
        ap_txt = "absent" if b.ap is None else f"{b.ap:.4f}"
        lines.append(
            f"{BAND_TITLES.get(name, name):<20} {ap_txt:>8} {b.iou:>8.4f} "
            f"{b.pos_frac:>9.4f} {b.n_cells:>9}"
        )
    return "\n".join(lines) + "\n"


def write_summary(report: EvalReport, path: Path) -> None:
    lines = [f"{k} = {v}" for k, v in report.summary_items()]
    path.write_text("\n".join(lines) + "\n")


def write_pr_csvs(report: EvalReport, out_dir: Path) -> list[Path]:
    paths = []
    for name, curve in report.pr_curves.items():
        path = out_dir / f"pr_{name}.csv"
        rows = ["threshold,precision,recall"]
        rows.extend(f"{t:.9g},{p:.9g},{r:.9g}" for t, p, r in curve)
        path.write_text("\n".join(rows) + "\n")
        paths.append(path)
    return paths


def render_pr_figure(report: EvalReport, path: Path) -> None:
    """One panel of PR curves per band family plus the overall curve."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=True)
    families = (
        ("Range bands", ["overall", "range_00_20", "range_20_40", "range_40_60"]),
        ("Azimuth bands", ["overall", "az_00_15", "az_15_32"]),
    )
    for ax, (title, names) in zip(axes, families):
        for name in names:
            curve = report.pr_curves.get(name)
            if curve is None:
                continue
            b = report.bands.get(name)
            ap = report.ap if name == "overall" else (b.ap if b else None)
            label = BAND_TITLES.get(name, name)
            if ap is not None:
                label += f" (AP {ap:.3f})"
            style = {"lw": 2.2, "color": "k"} if name == "overall" else {"lw": 1.6}
            ax.plot(curve[:, 2], curve[:, 1], label=label, **style)
        ax.set_xlabel("Recall")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        ax.set_title(title)
        ax.legend(fontsize=8, loc="upper right")
    axes[0].set_ylabel("Precision")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_outputs(report: EvalReport, out_dir: str | Path, title: str) -> dict[str, object]:
    """Write report.txt, summary.txt, pr_*.csv, and pr_curves.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(format_report(report, title))
    write_summary(report, out_dir / "summary.txt")
    csvs = write_pr_csvs(report, out_dir)
    render_pr_figure(report, out_dir / "pr_curves.png")
    return {
        "report": out_dir / "report.txt",
        "summary": out_dir / "summary.txt",
        "csvs": csvs,
        "figure": out_dir / "pr_curves.png",
    }
