"""Figure rendering for acx study CSV outputs."""

from .render import (
    BUILDERS,
    FigureJob,
    SchemaError,
    build_hist_density,
    build_selection_curves,
    build_summary_table,
    gaussian_kde,
    read_rows,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "BUILDERS",
    "FigureJob",
    "SchemaError",
    "build_hist_density",
    "build_selection_curves",
    "build_summary_table",
    "gaussian_kde",
    "read_rows",
    "render",
]
