import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import rich_texture  # noqa: E402

from scalematch.imageops import save_rgb, warp_homography  # noqa: E402


@pytest.fixture(scope="session")
def texture_rgb():
    """One shared 160x160 color texture (seeded)."""
    return rich_texture(np.random.default_rng(7), 160, 160, n_small=70, n_big=18)


def make_kitti_fixture(root: Path, n_frames: int = 3, image_size=(64, 48)) -> None:
    """Minimal odometry layout: straight-line motion, textured frames."""
    seq = root / "sequences" / "00"
    (root / "poses").mkdir(parents=True, exist_ok=True)
    (seq / "image_2").mkdir(parents=True, exist_ok=True)

    lines = []
    for i in range(n_frames):
        # identity rotation, forward motion along z
        lines.append(f"1 0 0 0 0 1 0 0 0 0 1 {float(i):.1f}")
    (root / "poses" / "00.txt").write_text("\n".join(lines) + "\n")

    calib = [
        "P0: 50 0 32 0 0 50 24 0 0 0 1 0",
        "P1: 50 0 32 0 0 50 24 0 0 0 1 0",
        "P2: 50 0 32 0 0 50 24 0 0 0 1 0",
        "P3: 50 0 32 0 0 50 24 0 0 0 1 0",
    ]
    (seq / "calib.txt").write_text("\n".join(calib) + "\n")

    w, h = image_size
    rng = np.random.default_rng(11)
    base = rich_texture(rng, h, w, n_small=25, n_big=6)
    for i in range(n_frames):
        save_rgb(seq / "image_2" / f"{i:06d}.png", np.roll(base, shift=2 * i, axis=1))


def make_pair_scene(scene_dir: Path, rng, scale: float = 2.0, size: int = 96) -> np.ndarray:
    """One near/far scene related by a pure-scale homography; returns H."""
    scene_dir.mkdir(parents=True, exist_ok=True)
    near = rich_texture(rng, size, size, n_small=40, n_big=10)
    h = np.diag([1.0 / scale, 1.0 / scale, 1.0])  # near -> far
    far = warp_homography(near, h, int(size / scale), int(size / scale))
    save_rgb(scene_dir / "near.png", near)
    save_rgb(scene_dir / "far.png", far)

    pts = []
    for gx in (0.25, 0.5, 0.75):
        for gy in (0.25, 0.5, 0.75):
            pts.append((gx * size, gy * size))
    pts.append((0.4 * size, 0.6 * size))
    corr = [
        {"near": [float(x), float(y)], "far": [float(x / scale), float(y / scale)]}
        for x, y in pts[:10]
    ]
    (scene_dir / "annotation.json").write_text(json.dumps({"correspondences": corr}))
    return h


@pytest.fixture()
def kitti_root(tmp_path):
    root = tmp_path / "kitti"
    make_kitti_fixture(root)
    return root


@pytest.fixture()
def pairs_root(tmp_path):
    root = tmp_path / "pairs"
    rng = np.random.default_rng(23)
    make_pair_scene(root / "scene_a", rng, scale=2.0)
    make_pair_scene(root / "scene_b", rng, scale=1.5)
    return root
