"""Command-line driver: check, ik, slice, workspace, validate.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation failure,
3 kinematic no-solution / inadmissible point.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .constraints import admissible, interference_box
from .errors import AmbiguityError, ConfigError, NoSolutionError, ParmodError, ValidationError
from .export import MeshParams, build_boundary_mesh, write_ply, write_point_cloud, write_slice_svg
from .geometry import geometry_hash, load_machine_file
from .kinematics import inverse_kinematics, max_tilt
from .sweep import (
    PointCloud,
    SweepParams,
    classify_z,
    estimate_volume,
    slice_at,
    sweep,
    validate_against_oracle,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_KINEMATIC = 3


@dataclass
class RunManifest:
    command: list[str]
    geometry_hash: str
    params: dict
    outputs: list[str]
    duration_s: float
    counts: dict

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="machine configuration file")


def _add_sweep_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha-steps", type=int, default=SweepParams.alpha_steps)
    parser.add_argument("--arc-samples", type=int, default=SweepParams.arc_samples)
    parser.add_argument("--z-steps", type=int, default=SweepParams.z_steps)
    parser.add_argument("--tool", type=float, default=0.0,
                        help="tool length beyond the tool mount [m]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parmod",
        description="Constant-orientation workspace tools for the parallel module")
    parser.add_argument("--version", action="version", version=f"parmod {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("check", help="validate a configuration and print derived bounds")
    _add_common(p)

    p = sub.add_parser("ik", help="inverse kinematics and constraint report at a point")
    _add_common(p)
    p.add_argument("x", type=float)
    p.add_argument("y", type=float)
    p.add_argument("z", type=float)
    p.add_argument("--tool", type=float, default=0.0)

    p = sub.add_parser("slice", help="compute one workspace slice (SVG + CSV)")
    _add_common(p)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--out", required=True, help="output prefix")
    _add_sweep_flags(p)

    p = sub.add_parser("workspace", help="full sweep: CSV cloud, PLY mesh, volume")
    _add_common(p)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--resolution", type=int, default=64, help="area raster resolution")
    p.add_argument("--slice-svgs", action="store_true", help="also write per-slice SVGs")
    _add_sweep_flags(p)

    p = sub.add_parser("validate", help="sweep vs. brute-force oracle agreement")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=64, help="x/y grid points")
    p.add_argument("--z-steps", type=int, default=32)
    p.add_argument("--alpha-steps", type=int, default=SweepParams.alpha_steps)
    p.add_argument("--arc-samples", type=int, default=SweepParams.arc_samples)
    p.add_argument("--tool", type=float, default=0.0)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--out", default=None, help="optional manifest prefix")
    return parser


def _load(args):
    try:
        return load_machine_file(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _params(geom, args) -> SweepParams:
    return SweepParams(
        alpha_steps=args.alpha_steps,
        arc_samples=args.arc_samples,
        z_steps=getattr(args, "z_steps", SweepParams.z_steps),
        d_pu=geom.l_p1 + args.tool,
    )


def cmd_check(args) -> int:
    geom = _load(args)
    alpha1 = max_tilt(geom)
    print(f"geometry ok (hash {geometry_hash(geom)[:12]})")
    print(f"max tilt alpha1 = {alpha1:.9f} rad ({math.degrees(alpha1):.4f} deg)")
    try:
        box = interference_box(geom, geom.l_p1)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"interference box (tool 0): x [{box.x_min:.6g}, {box.x_max:.6g}] "
          f"y [{box.y_min:.6g}, {box.y_max:.6g}] z [{box.z_min:.6g}, {box.z_max:.6g}]")
    zs = np.linspace(box.z_min, box.z_max, 41)
    bands: list[tuple[str, float, float]] = []
    for z in zs:
        name = classify_z(geom, float(z)).value
        if bands and bands[-1][0] == name:
            bands[-1] = (name, bands[-1][1], float(z))
        else:
            bands.append((name, float(z), float(z)))
    print("z classification bands:")
    for name, z0, z1 in bands:
        print(f"  [{z0:.6g}, {z1:.6g}] {name}")
    return EXIT_OK


def cmd_ik(args) -> int:
    geom = _load(args)
    d_pu = geom.l_p1 + args.tool
    try:
        result = inverse_kinematics(geom, args.x, args.y, args.z)
    except (NoSolutionError, AmbiguityError) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_KINEMATIC
    report = admissible(geom, (args.x, args.y, args.z), result.alpha, d_pu=d_pu)
    print(f"alpha = {result.alpha:.12g}")
    for leg, rho in enumerate(result.actuators.as_tuple(), start=1):
        flag = "in stroke" if result.in_stroke[leg - 1] else "OUT OF STROKE"
        print(f"rho{leg} = {rho:.12g}  ({flag})")
    print(f"in_box = {report.in_box}")
    for key in ("11", "12", "21", "31"):
        print(f"rod {key}: reach={report.in_rod_reach[key]} "
              f"base_joint={report.in_base_joint[key]} "
              f"platform_joint={report.in_platform_joint[key]}")
    print(f"coupling_ok = {report.coupling_ok}")
    print(f"closure_half_ok = {report.closure_half_ok}")
    ok = report.admissible and result.all_in_stroke
    print(f"admissible = {ok}")
    return EXIT_OK if ok else EXIT_KINEMATIC


def cmd_slice(args) -> int:
    geom = _load(args)
    params = _params(geom, args)
    t0 = time.perf_counter()
    try:
        box = interference_box(geom, params.d_pu)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not (box.z_min < args.z < box.z_max):
        print(f"error: z={args.z!r} outside the box interval "
              f"({box.z_min!r}, {box.z_max!r})", file=sys.stderr)
        return EXIT_USAGE
    sl = slice_at(geom, args.z, params)
    svg_path = f"{args.out}.svg"
    csv_path = f"{args.out}.csv"
    outputs = [svg_path]
    try:
        write_slice_svg(sl, box, svg_path)
        rows = sl.point_rows()
        if rows.shape[0]:
            write_point_cloud(PointCloud(rows, geometry_hash(geom), params), csv_path)
            outputs.append(csv_path)
        else:
            print("warning: slice is empty, no CSV written", file=sys.stderr)
    except OSError as exc:
        print(f"error: write failed: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = RunManifest(
        command=sys.argv[1:] or ["slice"],
        geometry_hash=geometry_hash(geom),
        params=asdict(params),
        outputs=outputs,
        duration_s=time.perf_counter() - t0,
        counts={"points": int(rows.shape[0]), "classification": sl.classification.value},
    )
    manifest.write(f"{args.out}.manifest.json")
    print(f"slice z={args.z}: {rows.shape[0]} points, {sl.classification.value}")
    return EXIT_OK


def cmd_workspace(args) -> int:
    geom = _load(args)
    params = _params(geom, args)
    t0 = time.perf_counter()
    try:
        cloud, sliceset = sweep(geom, params)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outputs: list[str] = []
    volume = 0.0
    try:
        if len(cloud):
            csv_path = f"{args.out}.csv"
            write_point_cloud(cloud, csv_path)
            outputs.append(csv_path)
            mesh = build_boundary_mesh(sliceset, MeshParams(raster_resolution=max(32, args.resolution)))
            ply_path = f"{args.out}.ply"
            write_ply(mesh, ply_path)
            outputs.append(ply_path)
            volume = estimate_volume(sliceset, geom, args.resolution)
            if args.slice_svgs:
                box = interference_box(geom, params.d_pu)
                for idx, sl in enumerate(sliceset.slices):
                    path = f"{args.out}.slice{idx:03d}.svg"
                    write_slice_svg(sl, box, path)
                    outputs.append(path)
        else:
            print("warning: empty workspace, volume 0", file=sys.stderr)
    except OSError as exc:
        print(f"error: write failed: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = RunManifest(
        command=sys.argv[1:] or ["workspace"],
        geometry_hash=geometry_hash(geom),
        params=asdict(params),
        outputs=outputs,
        duration_s=time.perf_counter() - t0,
        counts={"points": len(cloud), "slices": len(sliceset.slices)},
    )
    manifest.write(f"{args.out}.manifest.json")
    print(f"points: {len(cloud)}")
    print(f"volume: {volume:.9g} m^3")
    return EXIT_OK


def cmd_validate(args) -> int:
    geom = _load(args)
    if args.resolution < 2 or args.z_steps < 2:
        print("error: validation grid must have at least 2 points per axis", file=sys.stderr)
        return EXIT_USAGE
    params = _params(geom, args)
    t0 = time.perf_counter()
    report = validate_against_oracle(geom, params, nx=args.resolution,
                                     ny=args.resolution, nz=args.z_steps)
    duration = time.perf_counter() - t0
    print(f"grid: {report.n_total} points, {report.n_excluded} near-boundary excluded")
    print(f"agreement: {100.0 * report.agreement:.4f}% "
          f"({report.n_disagree} disagreements of {report.n_compared})")
    print(f"worst disagreement distance: {report.worst_disagreement_distance:.6g} m")
    if args.out:
        manifest = RunManifest(
            command=sys.argv[1:] or ["validate"],
            geometry_hash=geometry_hash(geom),
            params=asdict(params),
            outputs=[],
            duration_s=duration,
            counts={"compared": report.n_compared, "disagree": report.n_disagree},
        )
        manifest.write(f"{args.out}.manifest.json")
    return EXIT_OK if report.agreement >= args.threshold else EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    handlers = {
        "check": cmd_check,
        "ik": cmd_ik,
        "slice": cmd_slice,
        "workspace": cmd_workspace,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.cmd](args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except ParmodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
