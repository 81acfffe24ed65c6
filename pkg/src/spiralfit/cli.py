"""Command-line interface: ``spiralfit {fit,synth,bench,compare}``.

Exit codes: 0 success, 2 usage error, 3 runtime (I/O, parse, fit) error.
Summary lines on stdout are ``key=value`` so they can be grepped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from .bench import run_experiment, summarize, write_summary_csv, write_trials_csv
from .errors import SpiralFitError
from .fitting import FitConfig
from .geometry import AxisLine, angular_error, distance_error
from .mesh import TriangleMesh, load_mesh, write_ply
from .pipeline import METHODS, RoiSpec, detect_axis
from .robust import RobustConfig
from .synthetic import SceneSpec, generate_scene, spiral_mesh, truth_landmarks

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("spiralfit")


class UsageError(Exception):
    pass


def _vec3(text: str) -> np.ndarray:
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z reals, got {text!r}") from None
    if len(parts) != 3 or not np.all(np.isfinite(parts)):
        raise argparse.ArgumentTypeError(f"expected three finite comma-separated reals, got {text!r}")
    return np.array(parts)


def _fraction_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad coverage list {text!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("coverages must lie in (0, 1]")
    return vals


def _method_list(text: str) -> list[str]:
    vals = [x.strip() for x in text.split(",") if x.strip()]
    bad = [v for v in vals if v not in METHODS]
    if not vals or bad:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return vals


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _fmt(v) -> str:
    return ",".join(f"{x:.10g}" for x in v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="spiralfit", description="Spiral rotation-axis detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="detect the axis of a mesh or oriented point set")
    p.add_argument("mesh")
    p.add_argument("--l1", type=_vec3, required=True, help="helicotrema landmark x,y,z")
    p.add_argument("--l2", type=_vec3, required=True, help="basal modiolus landmark x,y,z")
    p.add_argument("--method", choices=METHODS, default="robust")
    p.add_argument("--wp", type=float, default=1e-3)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--out", help="FitReport JSON path")
    p.add_argument("--confidence", action="store_true", help="include per-point confidences in the JSON")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic spiral scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--outlier", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--mesh", action="store_true", help="write the triangulated spiral tube (no outlier) instead of a point set")
    p.add_argument("--binary", action="store_true", help="binary little-endian PLY")
    p.add_argument("--out", required=True, help="PLY path")
    p.add_argument("--truth", required=True, help="ground-truth JSON path")

    p = sub.add_parser("bench", parents=[common], help="coverage sweep on synthetic scenes")
    p.add_argument("--coverages", type=_fraction_list, default=[0.2, 0.4, 0.6, 0.8, 1.0])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--methods", type=_method_list, default=list(METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--outlier", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--workers", type=int, default=None, help="default: SPIRALFIT_THREADS or CPU count")
    p.add_argument("--timing", action="store_true", help="record runtime_s (makes the CSV non-reproducible)")
    p.add_argument("--out", required=True, help="per-trial CSV path")
    p.add_argument("--summary", required=True, help="summary CSV path")

    p = sub.add_parser("compare", parents=[common], help="angular and distance error between two axes")
    p.add_argument("a", help="fit JSON")
    p.add_argument("b", nargs="?", help="second fit JSON")
    p.add_argument("--ref", help="ground-truth JSON")
    return parser


def report_json(report, method: str, include_confidence: bool) -> dict:
    out = report.to_dict(include_confidence)
    out["method"] = method
    return out


def cmd_fit(args) -> int:
    if args.iters < 1 or not args.wp > 0:
        raise UsageError("--iters must be >= 1 and --wp > 0")
    try:
        roi = RoiSpec(args.l1, args.l2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = RobustConfig(base=FitConfig(w_p=args.wp, iterations=args.iters))
    start = time.perf_counter()
    try:
        mesh = load_mesh(args.mesh)
    except OSError as exc:
        print(f"error: stage=load: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SpiralFitError as exc:
        print(f"error: stage=load: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        report = detect_axis(mesh, roi, config, args.method)
    except SpiralFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    elapsed = time.perf_counter() - start
    doc = report_json(report, args.method, args.confidence)
    if args.out:
        try:
            with open(args.out, "w") as fh:
                json.dump(doc, fh, indent=2)
        except OSError as exc:
            print(f"error: stage=write: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    print(f"method={args.method}")
    print(f"direction={_fmt(report.axis.direction)}")
    print(f"anchor={_fmt(report.axis.anchor)}")
    print(f"n_points={report.n_points}")
    print(f"runtime_s={elapsed:.3f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SceneSpec(seed=args.seed, noise_sigma=args.noise, outlier_enabled=args.outlier,
                         samples=args.samples)
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scene = generate_scene(spec)
    if args.mesh:
        verts, faces = spiral_mesh(scene.shape, n_t=200, n_phi=20)
        if args.noise > 0:
            rng = np.random.default_rng(args.seed)
            verts = verts + rng.normal(scale=args.noise, size=verts.shape)
        mesh = TriangleMesh(verts, faces)
    else:
        mesh = TriangleMesh(scene.points, np.zeros((0, 3)), scene.normals)
    l1, l2 = truth_landmarks(scene.shape)
    truth = {
        "seed": args.seed,
        "direction": scene.truth.axis.direction.tolist(),
        "anchor": scene.truth.axis.anchor.tolist(),
        "motion": {
            "r": scene.truth.motion.r.tolist(),
            "c": scene.truth.motion.c.tolist(),
            "gamma": scene.truth.motion.gamma,
        },
        "apex": scene.truth.apex.tolist(),
        "landmarks": {"l1": l1.tolist(), "l2": l2.tolist()},
    }
    try:
        write_ply(args.out, mesh, binary=args.binary)
        with open(args.truth, "w") as fh:
            json.dump(truth, fh, indent=2)
    except OSError as exc:
        print(f"error: stage=write: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"points={mesh.n_vertices}")
    print(f"direction={_fmt(scene.truth.axis.direction)}")
    print(f"anchor={_fmt(scene.truth.axis.anchor)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    try:
        template = SceneSpec(noise_sigma=args.noise, outlier_enabled=args.outlier, samples=args.samples)
        template.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    start = time.perf_counter()
    records = run_experiment(template, args.coverages, args.trials, args.methods,
                             master_seed=args.seed, workers=args.workers)
    rows = summarize(records)
    try:
        write_trials_csv(args.out, records, include_runtime=args.timing)
        write_summary_csv(args.summary, rows)
    except OSError as exc:
        print(f"error: stage=write: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for row in rows:
        print(f"coverage={row['coverage']:g} method={row['method']} metric={row['metric']} "
              f"median={row['median']:.6g} q1={row['q1']:.6g} q3={row['q3']:.6g} n={row['n']}")
    ok = sum(r.ok for r in records)
    print(f"trials_ok={ok}/{len(records)}")
    print(f"elapsed_s={time.perf_counter() - start:.2f}")
    return EXIT_OK if ok >= 0.9 * len(records) else EXIT_RUNTIME


def _read_axis(path) -> AxisLine:
    with open(path) as fh:
        doc = json.load(fh)
    src = doc["axis"] if "axis" in doc else doc
    return AxisLine(src["direction"], src["anchor"])


def cmd_compare(args) -> int:
    if (args.b is None) == (args.ref is None):
        raise UsageError("give exactly one of a second fit JSON or --ref")
    try:
        a = _read_axis(args.a)
        b = _read_axis(args.b or args.ref)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, KeyError, TypeError, SpiralFitError) as exc:
        print(f"error: malformed axis JSON: {exc!r}", file=sys.stderr)
        return EXIT_USAGE
    print(f"delta_theta_deg={angular_error(a.direction, b.direction):.10g}")
    print(f"delta_d={distance_error(a, b.anchor):.10g}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "synth": cmd_synth, "bench": cmd_bench, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spiralfit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
