"""Publication-style figures from nhprk CSV output.

Four figure kinds cover the study types the integrator suite emits:
log-log order plots with slope guides, energy time series, ensemble
energy-spread curves and first-integral error evolution.  Plots never
recompute physics; every quantity comes from CSV columns.
"""

from .reader import PlotDataError, read_csv
from .render import PlotSpec, render

__all__ = ["PlotDataError", "PlotSpec", "read_csv", "render"]
__version__ = "0.1.0"
