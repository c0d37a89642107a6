"""SVG figures: per-arm IoU distributions and domain scatter plots."""
import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.config import DOMAIN_COLORS, LOGGER_NAME  # noqa: E402
from src.errors import DataError  # noqa: E402
from src.schemas import ArmReport, EmbeddingDocument  # noqa: E402

logger = logging.getLogger(LOGGER_NAME)

HIGHLIGHT_COLOR = "red"


def plot_iou_distributions(
    reports: Sequence[ArmReport],
    out: Path,
    track: str = "ema",
    labels: Optional[Sequence[str]] = None,
    title: Optional[str] = None,
    seed: int = 0
) -> Path:
    """One box per arm with the last-K epochs overlaid as jittered points.

    Args:
        reports: Arm reports, drawn left to right
        out: Output figure path (format from the suffix)
        track: "ema" or "raw"
        labels: Tick labels (default: arm names)
        title: Figure title
        seed: Jitter seed

    Returns:
        Path to the written figure

    Raises:
        DataError: No reports
    """
    if not reports:
        raise DataError("Nothing to plot: no reports given")
    series = [r.distribution.ema_series if track == "ema" else r.distribution.raw_series for r in reports]
    labels = list(labels) if labels is not None else [r.arm for r in reports]

    rng = np.random.default_rng(seed)
    fig, ax = plt.subplots(figsize=(1.6 * len(reports) + 2, 4))
    ax.boxplot(series, showfliers=False)
    for i, values in enumerate(series, start=1):
        ax.scatter(i + rng.uniform(-0.15, 0.15, size=len(values)), values, s=8, alpha=0.5, color="black")
    ax.set_xticks(range(1, len(reports) + 1))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylabel(f"mIoU ({track}, last {reports[0].distribution.k} epochs)")
    if title:
        ax.set_title(title)
    fig.tight_layout()

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    logger.info(f"Saved distribution plot with {len(reports)} arms to {out}")
    return out


def plot_embedding(doc: EmbeddingDocument, out: Path, highlight_id: Optional[str] = None) -> Path:
    """Scatter the embedded triples by domain; optionally connect one triple."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for domain, color in DOMAIN_COLORS.items():
        pts = [(p.x, p.y) for p in doc.points if p.domain.value == domain]
        if pts:
            xy = np.asarray(pts)
            ax.scatter(xy[:, 0], xy[:, 1], s=12, color=color, label=domain, alpha=0.8)

    if highlight_id is not None:
        order = {d: i for i, d in enumerate(DOMAIN_COLORS)}
        triple = sorted((p for p in doc.points if p.id == highlight_id), key=lambda p: order[p.domain.value])
        if len(triple) > 1:
            ax.plot([p.x for p in triple], [p.y for p in triple], color=HIGHLIGHT_COLOR, linewidth=1.5)

    ax.set_title(f"layer {doc.layer_id}")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    logger.info(f"Saved embedding scatter ({len(doc.points)} points) to {out}")
    return out
