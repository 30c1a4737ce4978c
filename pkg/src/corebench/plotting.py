"""PNG figures for the report bundle. Each figure mirrors one CSV beside it."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}
KIND_COLORS = {"None": "0.55", "CPU": "tab:red", "Memory": "tab:blue", "CpuMemory": "tab:purple"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _boxplot(path: Path, groups: Mapping[str, list[float]], xlabel: str, title: str) -> Path | None:
    names = [k for k, v in groups.items() if v]
    if not names:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(names) + 2), 3.4))
        ax.boxplot([groups[n] for n in names], showfliers=True, flierprops={"markersize": 2})
        ax.set_xticks(range(1, len(names) + 1), names, rotation=30 if len(names) > 5 else 0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("registration + PDU latency (ms)")
        ax.set_title(title)
        return _save(fig, path)


def interaction_plot(path: Path, inter: Sequence[Mapping]) -> Path | None:
    cells = [r for r in inter if r["mean_ms"] != ""]
    if not cells:
        return None
    nfs = list(dict.fromkeys(r["nf"] for r in inter))
    kinds = list(dict.fromkeys(r["kind"] for r in inter))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(nfs) + 2), 3.4))
        for k in kinds:
            pts = [(nfs.index(r["nf"]), float(r["mean_ms"])) for r in cells if r["kind"] == k]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker="o", ms=4, label=k, color=KIND_COLORS.get(k))
        ax.set_xticks(range(len(nfs)), nfs)
        ax.set_xlabel("stressed NF")
        ax.set_ylabel("mean latency (ms)")
        ax.set_title("NF x stress interaction")
        ax.legend(frameon=False, fontsize=8)
        return _save(fig, path)


def capture_plot(path: Path, cap_rows: Sequence[Mapping]) -> Path | None:
    if not cap_rows:
        return None
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(6.4, 3.0))
        names = [r["backend"] for r in cap_rows]
        a1.bar(names, [float(r["median_cpu_pct"]) for r in cap_rows], color=["tab:green", "tab:orange"][:len(names)])
        a1.set_ylabel("median capture CPU (% of one core)")
        a2.bar(names, [float(r["median_mem_bytes"]) for r in cap_rows], color=["tab:green", "tab:orange"][:len(names)])
        a2.set_ylabel("median capture backlog (bytes)")
        return _save(fig, path)


def render_all(rep: Path, rows: Sequence[Mapping], inter: Sequence[Mapping], cap_rows: Sequence[Mapping]) -> list[Path]:
    by_nf: dict[str, list[float]] = {}
    by_kind: dict[str, list[float]] = {k: [] for k in KIND_COLORS}
    for r in rows:
        by_nf.setdefault(r["nf"], []).append(float(r["total_ms"]))
        by_kind.setdefault(r["kind"], []).append(float(r["total_ms"]))
    made = [
        _boxplot(rep / "nf_latency.png", dict(sorted(by_nf.items())), "NF", "Latency by NF"),
        _boxplot(rep / "kind_latency.png", by_kind, "stress kind", "Latency by stress kind"),
        interaction_plot(rep / "interaction.png", inter),
        capture_plot(rep / "capture_overhead.png", cap_rows),
    ]
    return [p for p in made if p is not None]
