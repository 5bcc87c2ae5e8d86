"""SVG plots of benchmark results."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ..models import RunMetrics  # noqa: E402

# Byte-identical SVG for identical data
plt.rcParams["svg.hashsalt"] = "gridgraph"
SVG_METADATA = {"Date": None}


def _groups(rows: list[RunMetrics], value) -> tuple[list[str], list[list[float]]]:
    keys = sorted({(r.scenario, r.method) for r in rows})
    labels = [f"{s}\n{m}" for s, m in keys]
    data = [[value(r) for r in rows if (r.scenario, r.method) == key and not r.failed] for key in keys]
    return labels, data


def _box(path: Path, labels: list[str], data: list[list[float]], ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 4.0))
    if labels:
        ax.boxplot(data)
        ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def plot_rmse_boxes(rows: list[RunMetrics], path: str | Path) -> None:
    """Translational RMSE per scenario and method, failed runs left out."""
    labels, data = _groups(rows, lambda r: r.trans_rmse_cm)
    _box(Path(path), labels, data, "translational RMSE [cm]", "Tracking error")


def plot_convergence(rows: list[RunMetrics], path: str | Path) -> None:
    """Convergence time per scenario and method, failed runs left out."""
    labels, data = _groups(rows, lambda r: r.convergence_time)
    _box(Path(path), labels, data, "convergence time [s]", "Convergence")
