"""
Run output files: CSV tables, gnuplot scripts and the JSON run manifest.
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..models.manifest import GridSummary, NewtonSummary, RunManifest
from ..settings import settings
from .petrophysics import RockRegion

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def gnuplot_script(
    csv_name: str,
    x: str,
    ys: Sequence[str],
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    title: Optional[str] = None,
) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logx:
        lines.append("set logscale x")
    if title:
        lines.append(f"set title '{title}'")
    plots = [f"'{csv_name}' using (column('{x}')):(column('{y}')) with lines title '{y}'" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def surface_script(csv_name: str, x: str, y: str, z: str) -> str:
    """Colour map of ``z`` over the (x, y) sample grid."""
    return "\n".join(
        [
            "set datafile separator ','",
            f"set xlabel '{x}'",
            f"set ylabel '{y}'",
            "set view map",
            "set dgrid3d",
            f"splot '{csv_name}' using (column('{x}')):(column('{y}')):(column('{z}')) with pm3d notitle",
        ]
    ) + "\n"


class ReportWriter:
    """
    Writes the files of one run directory and keeps their inventory.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.outputs: List[str] = []

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.directory / name
        try:
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            raise
        self.outputs.append(name)
        logger.debug(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.directory / name
        path.write_text(text)
        self.outputs.append(name)
        return path

    def write_manifest(self, manifest: RunManifest, name: str = "manifest.json") -> Path:
        """Write the manifest through a temporary file so readers never see a partial one."""
        path = self.directory / name
        manifest.outputs = sorted(set(self.outputs + [name]))
        payload = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True, default=float)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".manifest-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as handle:
                handle.write(payload)
            os.replace(tmp, path)
        except OSError as e:
            logger.error(f"Error writing manifest {path}: {e}")
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path


def run_directory(name: str, configured: Optional[str] = None, override: Optional[str] = None) -> Path:
    """Explicit override, then the config's directory, then OUTPUT_ROOT/<scenario name>."""
    if override:
        return Path(override)
    if configured:
        return Path(configured)
    return Path(settings.OUTPUT_ROOT) / name


def write_run_outputs(result, directory: Union[str, Path], gnuplot: bool = False) -> RunManifest:
    """
    Write every table of a finished (or aborted) scenario run plus its manifest.

    Args:
        result: ScenarioResult, or a partial one rebuilt from an aborted record
        directory: Run directory
        gnuplot: Also emit plotting scripts

    Returns:
        The manifest as written
    """
    writer = ReportWriter(directory)
    record = result.record
    time_unit = result.time_unit

    grid_frame = result.grid.to_frame()
    writer.write_frame("grid.csv", grid_frame)

    series = record.series_frame()
    if not series.empty:
        series.insert(1, "time_unit", series["time_s"] / time_unit)
    writer.write_frame("series.csv", series)

    profiles = record.profiles_frame()
    if not profiles.empty:
        profiles.insert(1, "time_unit", profiles["time_s"] / time_unit)
        profiles.insert(4, "x_d", profiles["x_m"] / result.grid.length)
    writer.write_frame("profiles.csv", profiles)
    writer.write_frame("interfaces.csv", record.interfaces_frame())

    if result.recovery is not None:
        writer.write_frame("recovery.csv", result.recovery.to_frame())
        if gnuplot:
            writer.write_text(
                "recovery.gp",
                gnuplot_script("recovery.csv", "t_d", ["recovery_pct"], "t_D", "recovery [%]", logx=True),
            )
    if result.production is not None:
        writer.write_frame("production.csv", result.production)
        if gnuplot:
            writer.write_text(
                "production.gp",
                gnuplot_script("production.csv", "pvi", ["avg_matrix_sn"], "PVI", "average matrix S_n"),
            )
    if gnuplot:
        writer.write_text("profiles.gp", gnuplot_script("profiles.csv", "x_d", ["s_n"], "x_D", "S_n"))

    manifest = build_manifest(result)
    writer.write_manifest(manifest)
    logger.info(f"Wrote {len(writer.outputs)} files to {writer.directory}")
    return manifest


def build_manifest(result) -> RunManifest:
    record = result.record
    grid = result.grid
    counts: Dict[str, int] = {}
    for region in grid.cell_region:
        counts[region.value] = counts.get(region.value, 0) + 1
    steps = record.steps
    return RunManifest(
        app=settings.APP_NAME,
        version=settings.APP_VERSION,
        status=record.status,
        failure=record.failure,
        scheme=result.config.scenario.scheme.value,
        config=result.config.model_dump(mode="json"),
        grid=GridSummary(
            n_cells=grid.n_cells,
            length_m=grid.length,
            regions=counts,
            region_boundaries=[face.index for face in grid.region_boundaries],
        ),
        newton=NewtonSummary(
            steps=len(steps),
            total_iterations=record.total_newton_iterations,
            total_cuts=record.total_cuts,
            max_interface_iterations=int(max((row["interface_iterations"] for row in steps), default=0)),
            interface_clamps=int(sum(row["interface_clamps"] for row in steps)),
        ),
        metadata={k: v for k, v in record.metadata.items() if isinstance(v, (int, float, str, bool))},
        wall_time_s=result.wall_time_s,
    )


def read_manifest(directory: Union[str, Path]) -> dict:
    path = Path(directory) / "manifest.json"
    with open(path) as handle:
        return json.load(handle)


def curve_table(region: RockRegion, points: int) -> pd.DataFrame:
    """Tabulate kr_w, kr_n, Pc and D of one region on ``points`` saturations."""
    s = np.linspace(0.0, 1.0, points)
    mob = [region.mobilities(float(v)) for v in s]
    fluids = region.fluids
    return pd.DataFrame(
        {
            "s_w": s,
            "kr_w": [m[0] * fluids.viscosity_w for m in mob],
            "kr_n": [m[2] * fluids.viscosity_n for m in mob],
            "pc": [region.capillary_pressure(float(v))[0] for v in s],
            "d": [region.capillary_diffusion(float(v))[0] for v in s],
            "region": region.region_id.value,
        }
    )
