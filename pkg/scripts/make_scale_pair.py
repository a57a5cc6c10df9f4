#!/usr/bin/env python3
"""Generate a synthetic near/far scene in the annotated-pair layout.

Renders a seeded random texture, warps it by a pure-scale homography, and
writes ``near.png``, ``far.png`` and ``annotation.json`` (10 ground-truth
correspondences) into the scene directory.  Handy for exercising
``scalematch evaluate --pairs`` and ``scalematch localize`` without any
real dataset.

Example:
    python scripts/make_scale_pair.py out/pairs/scene_0 --scale 2.0 --seed 7
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from helpers import rich_texture  # noqa: E402

from scalematch.imageops import save_rgb, warp_homography  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scene_dir", help="output directory for one scene")
    parser.add_argument("--size", type=int, default=256, help="near-image side length")
    parser.add_argument("--scale", type=float, default=2.0, help="near/far scale factor")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if args.scale <= 1.0:
        parser.error("--scale must be > 1")
    scene = Path(args.scene_dir)
    scene.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    size = args.size
    near = rich_texture(rng, size, size, n_small=size // 2, n_big=size // 8)
    h = np.diag([1.0 / args.scale, 1.0 / args.scale, 1.0])
    far_side = int(round(size / args.scale))
    far = warp_homography(near, h, far_side, far_side)

    save_rgb(scene / "near.png", near)
    save_rgb(scene / "far.png", far)

    margin = 0.15 * size
    xs = np.linspace(margin, size - margin, 5)
    ys = np.linspace(margin, size - margin, 2)
    pts = [(float(x), float(y)) for y in ys for x in xs]
    corr = [
        {"near": [x, y], "far": [x / args.scale, y / args.scale]} for x, y in pts
    ]
    (scene / "annotation.json").write_text(json.dumps({"correspondences": corr}, indent=2))
    print(f"wrote {scene}/near.png ({size}px), far.png ({far_side}px), annotation.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
