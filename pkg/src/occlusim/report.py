"""Validation report rendering: one CSV per run plus matplotlib figures.

A report collects rows from whichever checks ran (SSIM summaries, retention
checks, noise checks) and renders them to ``report.csv`` and a small set of
PNG figures in the chosen output directory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .validation import NoiseCheck, RetentionCheck, SsimSummary  # noqa: E402


@dataclass(frozen=True)
class RetentionRow:
    label: str
    relpath: str
    drop_percent: float
    check: RetentionCheck


@dataclass(frozen=True)
class NoiseRow:
    label: str
    relpath: str
    check: NoiseCheck


@dataclass
class DegradationReport:
    """Everything one validate run measured, ready for rendering."""

    ssim_summaries: list[SsimSummary] = field(default_factory=list)
    retention_rows: list[RetentionRow] = field(default_factory=list)
    noise_rows: list[NoiseRow] = field(default_factory=list)
    sweep_ordering_ok: bool | None = None

    @property
    def all_passed(self) -> bool:
        checks_ok = all(r.check.passed for r in self.retention_rows) and all(
            r.check.passed for r in self.noise_rows
        )
        ordering_ok = self.sweep_ordering_ok is not False
        return checks_ok and ordering_ok


def check_sweep_ordering(summaries: list[SsimSummary]) -> bool | None:
    """Non-decreasing mean drop across same-kind sweeps with ordered parameters.

    Labels look like ``dirt_0.1``; groups of two or more labels sharing the
    prefix are ordered by their numeric suffix. Returns None when no group is
    large enough to order.
    """
    groups: dict[str, list[tuple[float, float]]] = {}
    for summary in summaries:
        prefix, _, suffix = summary.label.rpartition("_")
        try:
            level = float(suffix)
        except ValueError:
            continue
        groups.setdefault(prefix, []).append((level, summary.mean_drop))
    checked = False
    for levels in groups.values():
        if len(levels) < 2:
            continue
        checked = True
        levels.sort()
        drops = [d for _, d in levels]
        if any(b < a - 1e-9 for a, b in zip(drops, drops[1:])):
            return False
    return True if checked else None


def write_csv(report: DegradationReport, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["section", "label", "channel_or_relpath", "samples", "mean_ssim",
             "mean_drop", "expected", "actual", "sigma", "std_x", "std_y", "std_z", "passed"]
        )
        for summary in report.ssim_summaries:
            for ch in summary.channels:
                writer.writerow(
                    ["ssim", summary.label, ch.channel, ch.used,
                     f"{ch.mean_ssim:.6f}", f"{ch.mean_drop:.6f}", "", "", "", "", "", "", ""]
                )
            writer.writerow(
                ["ssim_summary", summary.label, "ALL", summary.pair_count,
                 f"{summary.mean_ssim:.6f}", f"{summary.mean_drop:.6f}", "", "", "", "", "", "", ""]
            )
        for row in report.retention_rows:
            writer.writerow(
                ["retention", row.label, row.relpath, "", "", "",
                 row.check.expected, row.check.actual, "", "", "", "", row.check.passed]
            )
        for row in report.noise_rows:
            writer.writerow(
                ["noise", row.label, row.relpath, "", "", "", "", "",
                 row.check.sigma, f"{row.check.std[0]:.6f}", f"{row.check.std[1]:.6f}",
                 f"{row.check.std[2]:.6f}", row.check.passed]
            )
        if report.sweep_ordering_ok is not None:
            writer.writerow(
                ["sweep_ordering", "", "", "", "", "", "", "", "", "", "", "",
                 report.sweep_ordering_ok]
            )


def _figure_ssim_drop(summaries: list[SsimSummary], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [s.label or "(run)" for s in summaries]
    drops = [s.mean_drop for s in summaries]
    ax.bar(labels, drops, color="#4878d0")
    ax.set_ylabel("mean SSIM drop")
    ax.set_title("Structural degradation by occlusion setting")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_ssim_per_camera(summaries: list[SsimSummary], path: Path) -> None:
    channels = sorted({ch.channel for s in summaries for ch in s.channels})
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(1, len(summaries))
    for i, summary in enumerate(summaries):
        by_channel = {ch.channel: ch.mean_drop for ch in summary.channels}
        xs = [j + i * width for j in range(len(channels))]
        ax.bar(xs, [by_channel.get(c, 0.0) for c in channels], width=width,
               label=summary.label or "(run)")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(channels))])
    ax.set_xticklabels(channels, rotation=30, ha="right")
    ax.set_ylabel("mean SSIM drop")
    ax.set_title("Per-camera degradation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_retention(rows: list[RetentionRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [r.drop_percent for r in rows]
    ys = [r.check.actual / r.check.expected if r.check.expected else 1.0 for r in rows]
    colors = ["#55a868" if r.check.passed else "#c44e52" for r in rows]
    ax.scatter(xs, ys, c=colors, s=24)
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("drop percent")
    ax.set_ylabel("actual / expected retained")
    ax.set_title("Point retention vs declared dropout")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_noise(rows: list[NoiseRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    sigmas = [r.check.sigma for r in rows]
    for axis, marker in zip(range(3), "ovs"):
        ax.scatter(sigmas, [r.check.std[axis] for r in rows], marker=marker, s=22,
                   label=f"std {'xyz'[axis]}")
    lim = max(sigmas + [0.1])
    ax.plot([0, lim], [0, lim], color="gray", lw=0.8, ls="--")
    ax.set_xlabel("declared sigma (m)")
    ax.set_ylabel("measured displacement std (m)")
    ax.set_title("Noise dispersion vs declared level")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report: DegradationReport, out_dir: Path | str) -> list[Path]:
    """Write report.csv plus figures for every populated section; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / "report.csv"
    write_csv(report, csv_path)
    written.append(csv_path)
    if report.ssim_summaries:
        p = out_dir / "ssim_drop.png"
        _figure_ssim_drop(report.ssim_summaries, p)
        written.append(p)
        p = out_dir / "ssim_per_camera.png"
        _figure_ssim_per_camera(report.ssim_summaries, p)
        written.append(p)
    if report.retention_rows:
        p = out_dir / "retention.png"
        _figure_retention(report.retention_rows, p)
        written.append(p)
    if report.noise_rows:
        p = out_dir / "noise_dispersion.png"
        _figure_noise(report.noise_rows, p)
        written.append(p)
    return written
