"""Loaders and schema checks for run artifacts.

A run directory contains records.csv with the fixed diagnostics header,
a flat meta.json, and optionally fig1_iter<NNNNNN>.csv density tables with
columns theta, q_density, pq_density and an optional qstar_density. These
loaders validate against that layout and nothing else.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

RECORD_HEADER = (
    "iter", "sim_time", "risk", "moment", "entropy_est", "primal_L", "dual_D",
    "gap", "kl_q_pq", "kl_indep", "second_moment", "moment_bound_ok",
    "se_primal", "se_dual", "se_gap", "wallclock_ms",
)

GAP_COLUMNS = ("iter", "primal_L", "dual_D", "gap")

SNAPSHOT_COLUMNS = ("theta", "q_density", "pq_density")

_SNAPSHOT_RE = re.compile(r"^fig1_iter(\d{6})\.csv$")


class PlotError(Exception):
    """Missing, malformed, or colliding artifact paths."""


def _read_table(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    try:
        lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    except OSError as e:
        raise PlotError(f"cannot read {path}: {e}") from None
    if not lines:
        raise PlotError(f"{path} is empty")
    header = lines[0].split(",")
    for col in required:
        if col not in header:
            raise PlotError(f"{path} is missing column {col!r}")
    if len(lines) == 1:
        raise PlotError(f"{path} has a header but no data rows")
    try:
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    except ValueError as e:
        raise PlotError(f"could not parse {path}: {e}") from None
    if data.shape[1] != len(header):
        raise PlotError(
            f"{path}: rows have {data.shape[1]} fields but the header names {len(header)}"
        )
    return {name: data[:, j] for j, name in enumerate(header)}


def load_records(path) -> dict[str, np.ndarray]:
    """Column arrays from a records.csv; requires the gap-plot columns."""
    return _read_table(Path(path), GAP_COLUMNS)


@dataclass(frozen=True)
class DensitySnapshot:
    iteration: int
    theta: np.ndarray
    q_density: np.ndarray
    pq_density: np.ndarray
    qstar_density: Optional[np.ndarray]


def load_snapshot(path, iteration: int) -> DensitySnapshot:
    cols = _read_table(Path(path), SNAPSHOT_COLUMNS)
    return DensitySnapshot(
        iteration=iteration,
        theta=cols["theta"],
        q_density=cols["q_density"],
        pq_density=cols["pq_density"],
        qstar_density=cols.get("qstar_density"),
    )


def find_snapshots(run_dir) -> list[DensitySnapshot]:
    """All fig1_iter*.csv tables in a directory, sorted by iteration."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise PlotError(f"{run_dir} is not a directory")
    found = []
    for p in run_dir.iterdir():
        m = _SNAPSHOT_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise PlotError(f"no density snapshots (fig1_iter*.csv) in {run_dir}")
    return [load_snapshot(p, k) for k, p in sorted(found)]


@dataclass(frozen=True)
class RunArtifacts:
    """Validated paths of one run directory."""

    records: Path
    meta: Optional[Path]
    snapshots: tuple[Path, ...]

    @classmethod
    def from_dir(cls, run_dir) -> "RunArtifacts":
        run_dir = Path(run_dir)
        records = run_dir / "records.csv"
        if not records.is_file():
            raise PlotError(f"no records.csv in {run_dir}")
        try:
            header = records.read_text(encoding="utf-8").splitlines()[0].split(",")
        except (OSError, IndexError) as e:
            raise PlotError(f"cannot read header of {records}: {e}") from None
        if tuple(header) != RECORD_HEADER:
            raise PlotError(f"{records} header does not match the diagnostics schema")
        meta = run_dir / "meta.json"
        if meta.is_file():
            try:
                parsed = json.loads(meta.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise PlotError(f"cannot parse {meta}: {e}") from None
            if not isinstance(parsed, dict):
                raise PlotError(f"{meta} is not a flat JSON object")
        else:
            meta = None
        numbered = []
        for p in run_dir.iterdir():
            m = _SNAPSHOT_RE.match(p.name)
            if m:
                numbered.append((int(m.group(1)), p))
        snaps = tuple(p for _, p in sorted(numbered))
        return cls(records=records, meta=meta, snapshots=snaps)
