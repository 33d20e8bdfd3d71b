"""Pareto CSV and SVG output."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Sequence

from ..cost import ParetoPoint, as_point, pareto_frontier


def report_points(reports: Sequence[Any]) -> list[ParetoPoint]:
    return [ParetoPoint(r.label, float(r.accuracy or 0.0), float(r.mean_cost_per_query))
            for r in reports]


def emit_pareto(points: Sequence[Any], out_dir: str | Path, name: str = "pareto",
                title: str = "score vs cost") -> list[str]:
    """Write ``<name>.csv`` and ``<name>.svg``; return the frontier labels."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pts = [as_point(p) for p in points]
    if not pts:
        raise ValueError("need at least one point")
    frontier = pareto_frontier(pts)
    on = set(frontier)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "score", "cost", "on_frontier"])
        for p in sorted(pts, key=lambda p: (p.cost, -p.score, p.label)):
            w.writerow([p.label, p.score, p.cost, int(p.label in on)])

    by_label = {p.label: p for p in pts}
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter([p.cost for p in pts], [p.score for p in pts], color="#9ab", zorder=2)
    fx = [by_label[label].cost for label in frontier]
    fy = [by_label[label].score for label in frontier]
    ax.plot(fx, fy, "-o", color="#c33", zorder=3, label="frontier")
    for p in pts:
        ax.annotate(p.label, (p.cost, p.score), xytext=(4, 4), textcoords="offset points",
                    fontsize=8)
    ax.set_xlabel("cost per query")
    ax.set_ylabel("score")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{name}.svg", format="svg", metadata={"Date": None})
    plt.close(fig)
    return frontier
