"""Command-line surface: single-pair localization and dataset evaluation.

Localization failure is reported in the result document with exit code 0;
only I/O and configuration problems exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .descriptors import FALLBACK, SUPPORTED_RESOLUTIONS, LayerId
from .errors import ConfigError, ScaleMatchError
from .geometry import CameraIntrinsics, Homography, RansacConfig, RelativePose
from .imageops import load_rgb, save_rgb, warp_homography
from .matching import MatchMethod
from .pipeline import METHOD_ORDER, RunConfig, evaluate_kitti, evaluate_pairs, localize_pair

_LAYERS = tuple(LayerId.__members__) + (FALLBACK,)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalematch",
        description="Scale-robust metric localization from matched object regions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--method", default="combined",
                        choices=tuple(MatchMethod.__members__) + ("all",))
    common.add_argument("--layer", default="res5c", choices=_LAYERS)
    common.add_argument("--resolution", default=224, type=int,
                        choices=SUPPORTED_RESOLUTIONS)
    common.add_argument("--backend", default=FALLBACK,
                        help="'fallback' or 'sidecar:<command>' (SCALEMATCH_SIDECAR overrides the command)")
    common.add_argument("--seed", default=0, type=int, help="RANSAC seed")
    common.add_argument("--inlier-threshold", default=6.0, type=float,
                        help="RANSAC inlier threshold in pixels")

    loc = sub.add_parser("localize", parents=[common],
                         help="estimate the transform between two images")
    loc.add_argument("image_a")
    loc.add_argument("image_b")
    loc.add_argument("--estimator", default="homography", choices=("homography", "essential"))
    loc.add_argument("--intrinsics", default=None,
                     help="fx,fy,cx,cy (required for --estimator essential)")
    loc.add_argument("--out", default=None, help="write the JSON result here as well")
    loc.add_argument("--warp-out", default=None,
                     help="debug: write image_a warped by the estimated homography")

    ev = sub.add_parser("evaluate", parents=[common], help="run a dataset protocol")
    src = ev.add_mutually_exclusive_group(required=True)
    src.add_argument("--kitti", default=None, metavar="ROOT", help="odometry dataset root")
    src.add_argument("--pairs", default=None, metavar="ROOT", help="annotated pair dataset root")
    ev.add_argument("--sequences", default="00", help="comma-separated sequence names (odometry)")
    ev.add_argument("--subsample", default=5, type=int, help="keep every n-th frame (odometry)")
    ev.add_argument("--max-gap", default=10, type=int, help="pair each frame with this many successors")
    ev.add_argument("--jobs", default=1, type=int, help="parallel evaluation workers")
    ev.add_argument("--out", required=True, help="output directory for CSV/JSON reports")
    return parser


def _make_config(args, method: str, estimator: str = "homography") -> RunConfig:
    return RunConfig(
        method=method,
        estimator=estimator,
        layer=args.layer,
        resolution=args.resolution,
        backend=args.backend,
        ransac=RansacConfig(inlier_threshold=args.inlier_threshold, rng_seed=args.seed),
    )


def _parse_intrinsics(text: str | None) -> CameraIntrinsics | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError("--intrinsics expects fx,fy,cx,cy")
    try:
        fx, fy, cx, cy = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad --intrinsics: {exc}") from exc
    return CameraIntrinsics(fx, fy, cx, cy)


def _estimate_json(estimate) -> dict | None:
    if estimate is None:
        return None
    if isinstance(estimate, Homography):
        return {"homography": estimate.h.tolist()}
    if isinstance(estimate, RelativePose):
        q = estimate.rotation
        return {
            "rotation": {"w": q.w, "x": q.x, "y": q.y, "z": q.z},
            "translation": estimate.translation.tolist(),
        }
    raise TypeError(f"unexpected estimate type {type(estimate)!r}")


def _cmd_localize(args) -> int:
    if args.method == "all":
        raise ConfigError("localize accepts a single --method")
    for path in (args.image_a, args.image_b):
        if not Path(path).exists():
            raise ConfigError(f"image not found: {path}")
    config = _make_config(args, args.method, args.estimator)
    intrinsics = _parse_intrinsics(args.intrinsics)
    image_a = load_rgb(args.image_a)
    image_b = load_rgb(args.image_b)

    result = localize_pair(image_a, image_b, config, intrinsics)
    doc = {
        "estimate": _estimate_json(result.estimate),
        "failed": result.failed,
        "failure_reason": result.failure_reason,
        "inlier_count": result.inlier_count,
        "object_match_count": result.object_match_count,
        "point_match_count": result.point_match_count,
        "timings_ms": result.timings_ms,
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.warp_out and isinstance(result.estimate, Homography):
        h, w = image_b.shape[:2]
        save_rgb(args.warp_out, warp_homography(image_a, result.estimate.h, h, w))
    return 0


def _cmd_evaluate(args) -> int:
    methods = list(METHOD_ORDER) if args.method == "all" else [args.method]
    if args.kitti is not None:
        config = _make_config(args, methods[0], "essential")
        sequences = [s for s in args.sequences.split(",") if s]
        records = evaluate_kitti(
            args.kitti, sequences, config, methods, args.out,
            subsample=args.subsample, max_gap=args.max_gap, jobs=args.jobs,
        )
    else:
        config = _make_config(args, methods[0], "homography")
        records = evaluate_pairs(args.pairs, config, methods, args.out, jobs=args.jobs)
    failures = sum(1 for r in records if r.failed)
    print(f"evaluated {len(records)} records ({failures} localization failures) -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "localize":
            return _cmd_localize(args)
        return _cmd_evaluate(args)
    except ScaleMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
