"""Heat images, report tables and artifact export."""

from .exporters import ArtifactExporter
from .renderers import (
    DEFAULT_COLORMAP,
    difference_magnitude,
    format_table,
    render_comparison_table,
    render_diff_table,
    render_difference_heat,
    render_eval_table,
)

__all__ = [
    "ArtifactExporter",
    "DEFAULT_COLORMAP",
    "difference_magnitude",
    "format_table",
    "render_comparison_table",
    "render_diff_table",
    "render_difference_heat",
    "render_eval_table",
]
