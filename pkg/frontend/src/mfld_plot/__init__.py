"""Post-hoc figure rendering from experiment run artifacts.

Consumes only the documented on-disk layout a run leaves behind: the fixed
records.csv diagnostics table, flat meta.json, and fig1_iter*.csv density
snapshots. Nothing here imports the simulator.
"""

from .artifacts import (
    DensitySnapshot,
    PlotError,
    RunArtifacts,
    find_snapshots,
    load_records,
    load_snapshot,
)
from .render import plot_density_1d, plot_gap

__all__ = [
    "DensitySnapshot",
    "PlotError",
    "RunArtifacts",
    "find_snapshots",
    "load_records",
    "load_snapshot",
    "plot_density_1d",
    "plot_gap",
]
