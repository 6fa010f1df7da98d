"""Difference heat images and plain-text report tables."""

import logging
from typing import List, Optional, Sequence

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import Normalize

from ..common.errors import DomainError
from ..evaluation.compare import ComparisonTable
from ..evaluation.diff import DiffReport
from ..evaluation.metrics import EvalReport
from ..imaging.buffer import ImageBuffer

logger = logging.getLogger(__name__)

DEFAULT_COLORMAP = "inferno"


def difference_magnitude(x: ImageBuffer, x_adv: ImageBuffer) -> np.ndarray:
    """Per-pixel L2 norm of ``X_adv - X`` over channels, shaped ``(h, w)``."""
    if not x.same_dims(x_adv):
        raise DomainError(f"Image dims differ: {x.dims} vs {x_adv.dims}")
    return np.linalg.norm(x_adv.data - x.data, axis=2)


def render_difference_heat(
    x: ImageBuffer, x_adv: ImageBuffer, colormap: str = DEFAULT_COLORMAP
) -> ImageBuffer:
    """RGB heat image of the perturbation magnitude, scaled to its maximum."""
    try:
        cmap = colormaps[colormap]
    except KeyError as e:
        raise DomainError(f"Unknown colormap: {colormap}") from e
    magnitude = difference_magnitude(x, x_adv)
    peak = float(magnitude.max(initial=0.0))
    norm = Normalize(vmin=0.0, vmax=peak if peak > 0 else 1.0)
    rgba = cmap(norm(magnitude))
    logger.debug(f"Rendered difference heat image, peak magnitude {peak:.4f}")
    return ImageBuffer.from_array(rgba[:, :, :3])


def _cell(value: object) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Column-aligned text table; the first column is left-aligned, the rest right-aligned."""
    cells = [[str(h) for h in headers]] + [[_cell(v) for v in row] for row in rows]
    if any(len(row) != len(headers) for row in cells):
        raise DomainError("Every table row must have one cell per header")
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]

    def line(row: List[str]) -> str:
        parts = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(cells[0]), rule] + [line(row) for row in cells[1:]]) + "\n"


def render_diff_table(report: DiffReport, name: str = "adversarial") -> str:
    """Box counts and label churn in the layout of the bounding-box/label tables."""
    headers = ["dump", "boxes", "new labels", "disappeared labels"]
    rows = [
        ["origin", report.bbox_count_origin, None, None],
        [name, report.bbox_count_adv, report.new_labels, report.disappeared_labels],
    ]
    return format_table(headers, rows)


_METRIC_COLUMNS = ("map", "ap50", "ap75", "ap_small", "ap_medium", "ap_large", "ar", "ar_medium")
_METRIC_HEADERS = ("mAP", "AP50", "AP75", "AP_S", "AP_M", "AP_L", "AR", "AR_M")


def _metric_row(name: str, report: EvalReport) -> List[object]:
    return [name] + [getattr(report, key) for key in _METRIC_COLUMNS]


def render_eval_table(reports: Sequence[EvalReport], names: Optional[Sequence[str]] = None) -> str:
    names = list(names) if names is not None else [f"run {i}" for i in range(len(reports))]
    if len(names) != len(reports):
        raise DomainError("One name per report is required")
    return format_table(["dump", *_METRIC_HEADERS], [_metric_row(n, r) for n, r in zip(names, reports)])


def render_comparison_table(table: ComparisonTable) -> str:
    """Two tables: label churn per attack, then the metric family with mAP drop."""
    churn = format_table(
        ["dump", "boxes", "new labels", "disappeared labels"],
        [["origin", table.origin_bbox_count, None, None]]
        + [[a.name, a.bbox_count, a.diff.new_labels, a.diff.disappeared_labels] for a in table.attacks],
    )
    metrics = format_table(
        ["dump", *_METRIC_HEADERS, "mAP drop %"],
        [_metric_row("origin", table.origin_metrics) + [None]]
        + [_metric_row(a.name, a.metrics) + [a.drops.get("map")] for a in table.attacks],
    )
    return f"score threshold {table.threshold}\n\n{churn}\n{metrics}"
