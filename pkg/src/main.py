"""
Command-line entry point: ``python -m src.main <subcommand>``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 analysis error.
"""
import argparse
import logging
import logging.config
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
import sentry_sdk
import yaml

from .exceptions import AnalysisError, CapfluxError, ConfigurationError, SimulationAborted, SolverError
from .models.scenario import RegionKind, RelPermSet, ScenarioConfig, ScenarioKind, Scheme
from .modules.analysis import flux_surface, truncation_terms
from .modules.reporting import (
    ReportWriter,
    curve_table,
    gnuplot_script,
    read_manifest,
    run_directory,
    surface_script,
    write_run_outputs,
)
from .modules.scenarios import (
    SECONDS_PER_DAY,
    aborted_result,
    build_grid,
    build_plot_region,
    build_regions,
    load_config,
    override_config,
    parse_config,
    refinement_sweep,
    run_members_locally,
    run_scenario,
)
from .settings import settings
from .workers.sweep_worker import run_members_with_celery

logger = logging.getLogger("src")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ANALYSIS = 4


def setup_logging(verbose: bool = False) -> None:
    """Configure logging from the YAML dictConfig, falling back to basicConfig."""
    log_dir = Path(settings.LOG_DIR)
    path = Path(settings.LOGGING_CONFIG)
    if path.is_file():
        with open(path) as handle:
            config = yaml.safe_load(handle)
        log_dir.mkdir(parents=True, exist_ok=True)
        for handler in config.get("handlers", {}).values():
            if "filename" in handler:
                handler["filename"] = str(log_dir / Path(handler["filename"]).name)
        logging.config.dictConfig(config)
    else:
        logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    if verbose or settings.DEBUG:
        for name in ("src", "src.modules.solver"):
            logging.getLogger(name).setLevel(logging.DEBUG)
        for handler in logging.getLogger("src").handlers:
            handler.setLevel(logging.DEBUG)

    if settings.SENTRY_DSN:
        sentry_sdk.init(dsn=settings.SENTRY_DSN, release=f"{settings.APP_NAME}@{settings.APP_VERSION}")


def _csv_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_enum(enum_cls, values: Sequence[str]):
    try:
        return [enum_cls(v) for v in values]
    except ValueError as e:
        allowed = ", ".join(m.value for m in enum_cls)
        raise ConfigurationError(f"{e}; expected one of {{{allowed}}}") from e


def _with_relperm(config: ScenarioConfig, relperm: Optional[str]) -> ScenarioConfig:
    if relperm is None:
        return config
    return override_config(config, "--relperm", rock={"matrix": {"relperm": relperm}})


def _base_config(path: Optional[str]) -> ScenarioConfig:
    """Named config, else the default config file if present, else built-in defaults."""
    if path:
        return load_config(path)
    if Path(settings.DEFAULT_CONFIG).is_file():
        return load_config(settings.DEFAULT_CONFIG)
    return ScenarioConfig()


def _emit(frame: pd.DataFrame, output: Optional[str], script: Optional[str] = None) -> None:
    """Write a table to ``output`` (plus an optional gnuplot script beside it) or to stdout."""
    if output is None:
        frame.to_csv(sys.stdout, index=False, float_format="%.17g")
        return
    target = Path(output)
    writer = ReportWriter(target.parent)
    writer.write_frame(target.name, frame)
    if script is not None:
        writer.write_text(target.with_suffix(".gp").name, script)
    logger.info(f"Wrote {len(frame)} rows to {target}")


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides: Dict[str, Dict] = {}
    if args.scheme:
        overrides["scenario"] = {"scheme": args.scheme}
    if args.n_matrix:
        overrides["grid"] = {"n_matrix": args.n_matrix, "n_fracture": None}
    if overrides:
        config = override_config(config, "command line overrides", **overrides)

    directory = run_directory(config.scenario.name, config.output.directory, args.output)
    try:
        result = run_scenario(config)
    except SimulationAborted as e:
        if e.record is not None:
            write_run_outputs(aborted_result(config, e.record), directory, config.output.gnuplot)
            logger.error(f"Run aborted; partial outputs written to {directory}")
        raise

    write_run_outputs(result, directory, config.output.gnuplot)
    if config.scenario.kind is ScenarioKind.SPONTANEOUS and result.recovery is None:
        raise AnalysisError("no recovery curve: steady state was not reached")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_config(args.config)
    directory = run_directory(f"{base.scenario.name}-sweep", None, args.output)
    base = override_config(base, args.config, output={"directory": str(directory)})

    try:
        n_list = [int(n) for n in _csv_list(args.n_list)]
    except ValueError as e:
        raise ConfigurationError(f"--n-list must be comma-separated integers: {e}") from e
    schemes = _parse_enum(Scheme, _csv_list(args.schemes))
    relperms = _parse_enum(RelPermSet, _csv_list(args.relperms)) if args.relperms else None
    runner: Callable = run_members_locally if args.local else run_members_with_celery

    table = refinement_sweep(base, n_list, schemes, relperms, reference_n=args.reference_n, runner=runner)
    writer = ReportWriter(directory)
    writer.write_frame("sweep.csv", table)
    if base.output.gnuplot:
        writer.write_text(
            "sweep.gp",
            gnuplot_script("sweep.csv", "n_matrix", ["e2"], "N", "E2 [%]", logx=True),
        )
    failed = int((table["status"] != "completed").sum()) if not table.empty else 0
    logger.info(f"Sweep finished: {len(table)} members, {failed} failed; table in {directory / 'sweep.csv'}")
    return EXIT_OK


def cmd_flux_surface(args: argparse.Namespace) -> int:
    config = _with_relperm(_base_config(args.config), args.relperm)
    region = build_plot_region(config, RegionKind.MATRIX)
    frame = flux_surface(Scheme(args.scheme), args.total_flux, args.transmissibility, region, args.resolution)
    script = surface_script(Path(args.output).name, "s_left", "s_right", "f_w") if args.output else None
    _emit(frame, args.output, script)
    return EXIT_OK


def cmd_truncation(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    try:
        manifest = read_manifest(run_dir)
        profiles = pd.read_csv(run_dir / "profiles.csv")
    except FileNotFoundError as e:
        raise ConfigurationError(f"not a run directory: {run_dir} ({e})") from e
    config = parse_config(manifest["config"], source=str(run_dir / "manifest.json"))
    if profiles.empty:
        raise AnalysisError(f"{run_dir} holds no saturation profiles")

    last = profiles[profiles["time_s"] == profiles["time_s"].max()]
    segment = last[(last["region"] == RegionKind.MATRIX.value) & last["x_d"].between(args.x_min, args.x_max)]
    grid = build_grid(config)
    matrix_cells = grid.cells_in(RegionKind.MATRIX)
    if not len(matrix_cells):
        raise AnalysisError("run has no matrix cells")
    u_t = 0.0
    if config.scenario.kind is ScenarioKind.FORCED:
        u_t = config.wells.injection_rate_m3_day / SECONDS_PER_DAY / grid.area
    region = build_regions(config)[RegionKind.MATRIX]

    frame = truncation_terms(
        segment["x_m"].to_numpy(),
        segment["s_w"].to_numpy(),
        u_t,
        region,
        float(grid.cell_width[matrix_cells[0]]),
    )
    script = None
    if args.output:
        script = gnuplot_script(
            Path(args.output).name, "x_m", ["e_vc_ihu", "e_vc_ppu"], "x [m]", "leading truncation error"
        )
    _emit(frame, args.output, script)
    return EXIT_OK


def cmd_curves(args: argparse.Namespace) -> int:
    config = _with_relperm(_base_config(args.config), args.relperm)
    frame = curve_table(build_plot_region(config, RegionKind(args.region)), args.points)
    script = None
    if args.output:
        script = gnuplot_script(Path(args.output).name, "s_w", ["pc"], "S_w", "P_c [psi]")
    _emit(frame, args.output, script)
    return EXIT_OK


def cmd_grid_dump(args: argparse.Namespace) -> int:
    _emit(build_grid(load_config(args.config)).to_frame(), args.output)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    grid = build_grid(config)
    regions = build_regions(config)
    logger.info(
        f"{args.config}: {config.scenario.kind.value} scenario '{config.scenario.name}', "
        f"scheme {config.scenario.scheme.value}, {grid.n_cells} cells, "
        f"matrix D_max={regions[RegionKind.MATRIX].d_max:.4g}"
    )
    print(f"{args.config}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capflux", description="1D fractured-media two-phase flow simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging for the simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    schemes = [s.value for s in Scheme]
    relperms = [r.value for r in RelPermSet]

    p = sub.add_parser("run", help="run one scenario and write its outputs")
    p.add_argument("config")
    p.add_argument("--output", help="run directory (default: $OUTPUT_ROOT/<scenario name>)")
    p.add_argument("--scheme", choices=schemes)
    p.add_argument("--n-matrix", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid-refinement sweep with error norms against a reference run")
    p.add_argument("config")
    p.add_argument("--n-list", default="1,2,4,8,16,32,64")
    p.add_argument("--schemes", default=",".join(schemes))
    p.add_argument("--relperms", help=f"comma-separated subset of {','.join(relperms)}")
    p.add_argument("--reference-n", type=int, default=128)
    p.add_argument("--output")
    p.add_argument("--local", action="store_true", help="run members in-process instead of as Celery tasks")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("flux-surface", help="wetting flux over (S_L, S_R) at fixed total flux")
    p.add_argument("--config")
    p.add_argument("--scheme", choices=schemes, default=Scheme.IHU_C.value)
    p.add_argument("--total-flux", type=float, default=0.5)
    p.add_argument("--transmissibility", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--relperm", choices=relperms)
    p.add_argument("--output")
    p.set_defaults(func=cmd_flux_surface)

    p = sub.add_parser("truncation", help="leading truncation-error terms on the last profile of a run")
    p.add_argument("run_dir")
    p.add_argument("--x-min", type=float, default=0.55)
    p.add_argument("--x-max", type=float, default=0.75)
    p.add_argument("--output")
    p.set_defaults(func=cmd_truncation)

    p = sub.add_parser("curves", help="tabulate kr, Pc and D of one region")
    p.add_argument("region", choices=[r.value for r in RegionKind])
    p.add_argument("--config")
    p.add_argument("--relperm", choices=relperms)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--output")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("grid-dump", help="write the cell table of a scenario grid")
    p.add_argument("config")
    p.add_argument("--output")
    p.set_defaults(func=cmd_grid_dump)

    p = sub.add_parser("validate", help="parse and validate a scenario config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        logger.error(f"Solver failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except AnalysisError as e:
        logger.error(f"Analysis error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    except CapfluxError as e:
        logger.error(f"Error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
