"""Command-line interface for gridgraph."""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .libs.config import GridGraphSettings, load_settings
from .libs.coverage import coverage_check, wavefront_plan, write_waypoints_csv
from .libs.exceptions import (BuildingModelError, ConfigError, GridGraphError,
                              MapFormatError, PoseGraphFormatError,
                              PoseGraphSchemaError, SequenceFormatError)
from .libs.gbl import DIAGNOSTIC_FIELDS as GBL_FIELDS
from .libs.gbl import track
from .libs.geometry import Pose2
from .libs.mapio import (classify_regions, merge_stories, read_map,
                         write_map)
from .libs.mcl import run_mcl, write_diagnostics_csv
from .libs.mcl.runner import DIAGNOSTIC_FIELDS as MCL_FIELDS
from .libs.models import ScanSpec
from .libs.orchestrator import (evaluate, hybrid_localize, make_scenario,
                                run_benchmark, write_report)
from .libs.posegraph import (Lattice, build_from_sequence, observed_mask,
                             occupied_iou, rasterize_global, read_pgbm,
                             write_pgbm)
from .libs.simulator import simulate_sequence, simulate_waypoint_scans
from .libs.skeleton import dilate, skeleton_overlay, skeletonize
from .libs.slicer import add_reference_frame, load_building_model, slice_model
from .libs.trajectory import read_sequence_jsonl, read_tum, write_sequence_jsonl, write_tum

logger = logging.getLogger(__name__)

METHODS = ["mcl", "mcl-uniform", "mcl-ser", "gbl", "hybrid"]

# Errors caused by unreadable or malformed input files
INPUT_ERRORS = (
    OSError,
    MapFormatError,
    BuildingModelError,
    PoseGraphFormatError,
    PoseGraphSchemaError,
    SequenceFormatError,
)


def _settings(args: argparse.Namespace) -> GridGraphSettings:
    """Resolve settings and configure logging."""
    settings = load_settings(args.config)
    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    return settings


def _parse_pose(text: str) -> Pose2:
    try:
        x, y, theta = (float(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"Expected 'x,y,theta', got '{text}'") from e
    return Pose2(x, y, theta)


# ========== Map commands ==========


def cmd_slice(args: argparse.Namespace) -> int:
    """Slice a building model into structural and full grids per cut height."""
    settings = _settings(args)
    resolution = args.resolution or settings.slicer.resolution
    heights = args.height or settings.slicer.cut_heights
    model = load_building_model(args.model)
    if args.reference_frame:
        model = add_reference_frame(model, settings.slicer.post_size or resolution)

    out = Path(args.out)
    for i, h in enumerate(heights):
        result = slice_model(model, h, resolution)
        suffix = "" if len(heights) == 1 else f"_{i}"
        write_map(result.structural, out / f"structural{suffix}.yaml")
        write_map(result.full, out / f"full{suffix}.yaml")
        print(
            f"Cut {h:.2f} m: {result.structural.width}x{result.structural.height} cells, "
            f"{len(result.sliced_ids)} elements{' (empty)' if result.empty else ''}"
        )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    """Mark indoor cells Free and outdoor cells Unknown."""
    _settings(args)
    grid = classify_regions(read_map(args.structural), read_map(args.full))
    write_map(grid, args.out)
    print(f"Wrote {args.out}: {int(grid.free.sum())} free, {int(grid.unknown.sum())} unknown cells")
    return 0


def cmd_merge(args: argparse.Namespace) -> int:
    """Merge classified story grids."""
    _settings(args)
    grid = merge_stories([read_map(p) for p in args.maps])
    write_map(grid, args.out)
    print(f"Merged {len(args.maps)} grids into {args.out}")
    return 0


def cmd_ogm2pgbm(args: argparse.Namespace) -> int:
    """Convert an occupancy grid into a pose-graph map."""
    settings = _settings(args)
    grid = read_map(args.map)
    skeleton = skeletonize(grid, settings.skeleton.max_iterations)
    region = dilate(skeleton, settings.skeleton.dilation_radius)
    path = wavefront_plan(grid, region, stride=args.stride or settings.coverage.stride)
    spec = ScanSpec.from_settings(settings.simulator, noise_sigma=settings.posegraph.scan_noise_sigma)
    seq = simulate_waypoint_scans(grid, path, spec, args.seed)
    pgbm = build_from_sequence(seq, Lattice.from_grid(grid), settings.posegraph, settings.config_hash())
    write_pgbm(args.out, pgbm)

    if args.waypoints:
        write_waypoints_csv(args.waypoints, path)
    if args.overlay:
        Path(args.overlay).write_bytes(skeleton_overlay(grid, skeleton))
    print(f"Wrote {args.out}: {len(pgbm.nodes)} nodes, {len(pgbm.submaps)} submaps, {len(pgbm.constraints)} constraints")
    if args.check:
        raster = rasterize_global(pgbm, frame=grid)
        iou = occupied_iou(raster, grid, observed_mask(pgbm, grid))
        print(f"Coverage {coverage_check(grid, path, spec):.4f}, occupied IoU {iou:.4f}")
    return 0


# ========== Simulation ==========


def cmd_simulate(args: argparse.Namespace) -> int:
    """Build a scenario world from a base map and record a sequence in it."""
    settings = _settings(args)
    sim = settings.simulator
    base = read_map(args.map)
    scenario = make_scenario(base, args.scenario, settings.scenarios, args.seed, settings.skeleton)
    spec = ScanSpec.from_settings(sim)
    seq = simulate_sequence(
        scenario.world_grid,
        scenario.trajectory,
        spec,
        odom_noise=sim.odom_alphas,
        agents=scenario.agents,
        rng_seed=args.seed,
        linear_velocity=sim.linear_velocity,
        angular_velocity=math.radians(sim.angular_velocity_deg),
        initial_offset=Pose2.from_array(sim.odom_initial_offset),
    )
    seq.meta.update(scenario=scenario.name)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = settings.config_hash()
    write_map(scenario.world_grid, out / "world.yaml")
    write_sequence_jsonl(out / "sequence.jsonl", seq, config_hash)
    write_tum(out / "truth.tum", seq.ground_truth, [f"scenario {scenario.name}", f"config_hash {config_hash}"])
    write_waypoints_csv(out / "waypoints.csv", scenario.trajectory)
    record = {
        "name": scenario.name,
        "meta": scenario.meta,
        "agents": [a.model_dump() for a in scenario.agents],
        "removed_cells": [list(c) for c in scenario.removed_cells],
    }
    (out / "scenario.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"Scenario {scenario.name}: {len(seq)} scans over {seq.duration:.1f} s written to {out}")
    return 0


# ========== Localization ==========


def cmd_localize(args: argparse.Namespace) -> int:
    """Localize a recorded sequence and write the estimate as a TUM trajectory."""
    settings = _settings(args)
    method = args.method
    if method != "gbl" and not args.map:
        raise ConfigError(f"--map is required for method {method}")
    if method in ("gbl", "hybrid") and not args.pgbm:
        raise ConfigError(f"--pgbm is required for method {method}")

    seq = read_sequence_jsonl(args.seq)
    grid = read_map(args.map) if args.map else None
    pgbm = read_pgbm(args.pgbm) if args.pgbm else None
    init_global = args.init == "global"
    init_pose = None if init_global or args.init is None else _parse_pose(args.init)
    if init_pose is None and seq.ground_truth:
        init_pose = seq.ground_truth[0].pose
    if init_pose is None and not init_global and method in ("mcl", "gbl"):
        raise ConfigError("No initial pose: pass --init x,y,theta or record ground truth")

    diagnostics: list[dict] = []
    fields: list[str] = []
    summary = ""
    if method == "gbl":
        if init_global:
            raise ConfigError("gbl tracks from a known pose; use --method hybrid for global localization")
        result = track(pgbm, seq, init_pose, settings.gbl)
        estimates, diagnostics, fields = result.estimates, result.diagnostics, GBL_FIELDS
        summary = " (diverged)" if result.diverged else ""
    elif method == "hybrid":
        result = hybrid_localize(grid, pgbm, seq, settings.mcl, settings.gbl, args.seed)
        estimates = result.estimates
        summary = " (no handover)" if result.failed else f" (handover at {result.handover_time:.2f} s)"
        for phase, run in (("mcl", result.mcl), ("gbl", result.gbl)):
            if run is not None:
                diagnostics.extend({"phase": phase, **row} for row in run.diagnostics)
        fields = ["phase"] + MCL_FIELDS + [f for f in GBL_FIELDS if f not in MCL_FIELDS]
    else:
        init = {"mcl": "ser" if init_global else "tracking", "mcl-uniform": "uniform", "mcl-ser": "ser"}[method]
        result = run_mcl(grid, seq, settings.mcl, init=init, seed=args.seed, init_pose=init_pose)
        estimates, diagnostics, fields = result.estimates, result.diagnostics, MCL_FIELDS
        summary = f" ({result.divergences} divergences)" if result.divergences else ""

    write_tum(
        args.out,
        estimates,
        [f"method {method}", f"seed {args.seed}", f"config_hash {settings.config_hash()}"],
    )
    if args.diagnostics:
        write_diagnostics_csv(args.diagnostics, diagnostics, fields)
    print(f"Wrote {len(estimates)} estimates to {args.out}{summary}")
    if seq.ground_truth and estimates:
        metrics = evaluate(estimates, seq.ground_truth, settings.evaluation, method=method, seed=args.seed)
        print(json.dumps(metrics.model_dump(), sort_keys=True))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Compare an estimated TUM trajectory with ground truth."""
    settings = _settings(args)
    metrics = evaluate(read_tum(args.estimate), read_tum(args.truth), settings.evaluation)
    if args.json:
        print(json.dumps(metrics.model_dump(), sort_keys=True))
    elif metrics.failed:
        print("Failed: no convergence")
    else:
        print(f"Converged at {metrics.convergence_time:.2f} s")
        print(f"Translational RMSE: {metrics.trans_rmse_cm:.2f} cm")
        print(f"Rotational RMSE:    {metrics.rot_rmse_deg:.2f} deg")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """Run the benchmark matrix and write metrics tables and plots."""
    args.config = args.matrix
    settings = _settings(args)
    if args.threads:
        settings = settings.model_copy(update={"threads": args.threads})
    repeats = args.repeats or settings.bench.repeats
    report = run_benchmark(settings, Path(args.matrix).parent, repeats)
    runs = write_report(report, args.out, settings, repeats)
    print(f"{len(report.rows)} runs written to {runs}")
    for skip in report.skipped:
        print(f"Skipped {skip['scenario']}/{skip['method']}: {skip['reason']}")
    return 0


# ========== Entry point ==========


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="TOML settings file (default: ./gridgraph.toml when present)")
    common.add_argument("--verbose", "-v", action="store_true", help="Log debug output")

    parser = argparse.ArgumentParser(
        prog="gridgraph",
        description="Occupancy grids from building models, pose-graph maps and 2D-LiDAR localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("slice", parents=[common], help="Slice a building model into grids")
    p.add_argument("model", help="Building model JSON")
    p.add_argument("--out", "-o", required=True, help="Output directory")
    p.add_argument("--height", type=float, action="append", help="Cut height in meters (repeatable)")
    p.add_argument("--resolution", type=float, help="Cell size in meters")
    p.add_argument("--reference-frame", action="store_true", help="Add corner posts")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("classify", parents=[common], help="Classify indoor and outdoor cells")
    p.add_argument("--structural", required=True, help="Structural map YAML")
    p.add_argument("--full", required=True, help="Full map YAML")
    p.add_argument("--out", "-o", required=True, help="Output map YAML")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("merge", parents=[common], help="Merge story grids")
    p.add_argument("maps", nargs="+", help="Classified map YAML files")
    p.add_argument("--out", "-o", required=True, help="Output map YAML")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("ogm2pgbm", parents=[common], help="Convert an occupancy grid into a pose-graph map")
    p.add_argument("map", help="Map YAML")
    p.add_argument("--out", "-o", required=True, help="Output .pgbm.json")
    p.add_argument("--stride", type=int, help="Coverage waypoint stride")
    p.add_argument("--seed", type=int, default=0, help="Scan noise seed")
    p.add_argument("--waypoints", help="Also write the coverage waypoints CSV")
    p.add_argument("--overlay", help="Also write a skeleton overlay PGM")
    p.add_argument("--check", action="store_true", help="Report coverage and occupied IoU")
    p.set_defaults(func=cmd_ogm2pgbm)

    p = sub.add_parser("simulate", parents=[common], help="Record a sequence in a scenario world")
    p.add_argument("map", help="Base map YAML")
    p.add_argument("--scenario", default="1-static", help="<1|2|3>-<static|agents>")
    p.add_argument("--seed", type=int, default=0, help="Scenario and noise seed")
    p.add_argument("--out", "-o", required=True, help="Output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", parents=[common], help="Localize a recorded sequence")
    p.add_argument("--method", choices=METHODS, default="mcl")
    p.add_argument("--map", help="Base map YAML")
    p.add_argument("--pgbm", help="Pose-graph map")
    p.add_argument("--seq", required=True, help="Sequence JSONL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", help="'x,y,theta' or 'global' (default: first ground-truth pose)")
    p.add_argument("--out", "-o", required=True, help="Estimated trajectory (TUM)")
    p.add_argument("--diagnostics", help="Per-step diagnostics CSV")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("bench", parents=[common], help="Run the benchmark matrix")
    p.add_argument("--matrix", required=True, help="TOML settings file with a [bench] matrix")
    p.add_argument("--repeats", type=int, help="Runs per stochastic method")
    p.add_argument("--threads", type=int, help="Worker threads")
    p.add_argument("--out", "-o", required=True, help="Output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", parents=[common], help="Evaluate a TUM trajectory against ground truth")
    p.add_argument("estimate", help="Estimated trajectory (TUM)")
    p.add_argument("truth", help="Ground-truth trajectory (TUM)")
    p.add_argument("--json", "-j", action="store_true", help="Output as JSON")
    p.set_defaults(func=cmd_eval)
    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse arguments, run the command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as e:
        print(f"Input error: {e}", file=sys.stderr)
        return 3
    except GridGraphError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    """Main entry point for the CLI."""
    sys.exit(run())


if __name__ == "__main__":
    main()
