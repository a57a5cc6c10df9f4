"""Evaluation harness: error metrics, failure accounting, dataset loaders,
pair generation, per-gap summaries, and logarithmic curve fitting.

Two evaluation modes exist.  Odometry mode scores essential-matrix pose
estimates against ground-truth trajectories with the normalized
translational error and the quaternion rotational error, substituting the
maximum error of 1 whenever localization fails.  Pair mode scores
homographies against hand-annotated correspondences with the symmetric
transfer error (STE), substituting ``STE_MAX`` on failure and reporting
natural-log STE.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BothZero,
    DegenerateX,
    DuplicateFarPoints,
    MissingImage,
    ParseError,
    PointAtInfinity,
    SingularHomography,
)
from .geometry import (
    CameraIntrinsics,
    Homography,
    Point2,
    RelativePose,
    UnitQuaternion,
    transform_points,
)

# Error assigned to a pair when no homography could be estimated: the
# largest symmetric transfer error ever recorded by any attempted method.
STE_MAX = 15_833_861_380.8

ANNOTATION_POINTS = 10
GAZE_LIMIT_DEGREES = 45.0


@dataclass(frozen=True)
class FramePose:
    """World-frame pose of one camera frame (rotation + position, meters)."""

    rotation: UnitQuaternion
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class PairRecord:
    """A near/far frame pair with its ground-truth relative pose."""

    index_near: int
    index_far: int
    gap_j: int
    ground_truth: RelativePose

    def __post_init__(self):
        if self.gap_j < 1:
            raise ValueError("gap must be at least 1")


@dataclass
class EvalRecord:
    """One evaluated image pair; mirrors one CSV row of the results file."""

    sequence: str
    near: int | str
    far: int | str
    gap_j: int | None
    method: str
    t_err: float | None
    r_err: float | None
    ste: float | None
    log_ste: float | None
    failed: bool
    match_count: int
    gt_distance: float | None = None


@dataclass(frozen=True)
class PairAnnotation:
    """Ground-truth correspondences for one near/far image pair."""

    scene: str
    near_image: Path
    far_image: Path
    correspondences: tuple

    def __post_init__(self):
        if len(self.correspondences) != ANNOTATION_POINTS:
            raise ValueError(f"annotation must hold {ANNOTATION_POINTS} correspondences")


@dataclass(frozen=True)
class GroupSummary:
    gap_j: int
    mean_distance: float
    mean_t_err: float
    mean_r_err: float
    failure_rate: float
    pair_count: int


# ---------------------------------------------------------------------------
# Error metrics


def translational_error(t_g, t_e) -> float:
    """``||t_g - t_e|| / (||t_g|| + ||t_e||)``; in [0, 1] by the triangle
    inequality."""
    a = np.asarray(t_g, dtype=np.float64).reshape(3)
    b = np.asarray(t_e, dtype=np.float64).reshape(3)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        raise BothZero("both translations are zero")
    return min(float(np.linalg.norm(a - b) / denom), 1.0)


def rotational_error(q_g: UnitQuaternion, q_e: UnitQuaternion) -> float:
    """``1 - |q_g . q_e|``; in [0, 1] and invariant to quaternion sign."""
    return min(max(1.0 - abs(q_g.dot(q_e)), 0.0), 1.0)


def symmetric_transfer_error(h: Homography, annotation: PairAnnotation) -> float:
    """Total forward + backward transfer distance over all correspondences."""
    near = np.array([[p.x, p.y] for p, _ in annotation.correspondences])
    far = np.array([[q.x, q.y] for _, q in annotation.correspondences])
    try:
        inv = h.inverse()
        fwd = transform_points(h.h, near)
        bwd = transform_points(inv.h, far)
    except (PointAtInfinity, SingularHomography, np.linalg.LinAlgError) as exc:
        raise SingularHomography(f"cannot transfer points: {exc}") from exc
    d_fwd = np.linalg.norm(far - fwd, axis=1)
    d_bwd = np.linalg.norm(near - bwd, axis=1)
    return float(d_fwd.sum() + d_bwd.sum())


def log_ste(ste: float | None) -> float:
    """Natural-log STE; ``None`` (failure) maps to ``ln(STE_MAX)``.

    STE is floored at 1 before the log so near-perfect fits stay finite.
    """
    if ste is None:
        return math.log(STE_MAX)
    if ste < 0:
        raise ValueError("STE cannot be negative")
    return math.log(max(ste, 1.0))


def median_scale_change(annotation: PairAnnotation) -> float:
    """Median over all point pairs of near-distance / far-distance."""
    near = np.array([[p.x, p.y] for p, _ in annotation.correspondences])
    far = np.array([[q.x, q.y] for _, q in annotation.correspondences])
    n = len(near)
    if n < 2:
        raise ValueError("need at least 2 correspondences")
    ratios = []
    for i in range(n - 1):
        for j in range(i + 1, n):
            dn = float(np.linalg.norm(near[i] - near[j]))
            df = float(np.linalg.norm(far[i] - far[j]))
            if df == 0.0:
                raise DuplicateFarPoints(f"far points {i} and {j} coincide")
            ratios.append(dn / df)
    return float(np.median(ratios))


# ---------------------------------------------------------------------------
# Pose bookkeeping


def relative_pose(near: FramePose, far: FramePose) -> RelativePose:
    """Pose of the far frame in the near frame's coordinates."""
    r_near = near.rotation.to_rotation()
    r_far = far.rotation.to_rotation()
    r_rel = r_near.T @ r_far
    t_rel = r_near.T @ (far.translation - near.translation)
    return RelativePose(UnitQuaternion.from_rotation(r_rel), t_rel)


def _yaw_pitch_roll(r: np.ndarray) -> tuple[float, float, float]:
    """Intrinsic Z-Y-X decomposition, radians."""
    yaw = math.atan2(r[1, 0], r[0, 0])
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    roll = math.atan2(r[2, 1], r[2, 2])
    return yaw, pitch, roll


def gaze_compatible(pose_a: FramePose, pose_b: FramePose, limit: float = GAZE_LIMIT_DEGREES) -> bool:
    """True when the relative rotation stays within ``limit`` degrees on
    every axis (yaw, pitch, roll)."""
    r_rel = pose_a.rotation.to_rotation().T @ pose_b.rotation.to_rotation()
    angles = _yaw_pitch_roll(r_rel)
    bound = math.radians(limit)
    return all(abs(a) <= bound for a in angles)


def build_pairs(poses: list[FramePose], subsample: int = 5, max_gap: int = 10) -> list[PairRecord]:
    """Near/far pairs over a subsampled trajectory.

    Frames ``0, subsample, 2*subsample, ...`` are kept; each is paired with
    its next ``max_gap`` subsampled successors, and pairs whose gaze
    directions differ by more than 45 degrees on any axis are dropped.
    """
    if len(poses) < 2:
        raise ValueError("need at least 2 poses")
    if subsample < 1 or max_gap < 1:
        raise ValueError("subsample and max_gap must be >= 1")
    kept = list(range(0, len(poses), subsample))
    pairs = []
    for p, near_idx in enumerate(kept):
        for j in range(1, max_gap + 1):
            if p + j >= len(kept):
                break
            far_idx = kept[p + j]
            if not gaze_compatible(poses[near_idx], poses[far_idx]):
                continue
            pairs.append(
                PairRecord(near_idx, far_idx, j, relative_pose(poses[near_idx], poses[far_idx]))
            )
    return pairs


# ---------------------------------------------------------------------------
# Dataset loaders


def _parse_pose_line(line: str, lineno: int) -> FramePose:
    fields = line.split()
    if len(fields) != 12:
        raise ParseError(f"pose line {lineno}: expected 12 fields, got {len(fields)}")
    try:
        values = np.array([float(f) for f in fields], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"pose line {lineno}: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise ParseError(f"pose line {lineno}: non-finite value")
    m = values.reshape(3, 4)
    r = m[:, :3]
    if np.abs(r.T @ r - np.eye(3)).max() > 1e-3:
        raise ParseError(f"pose line {lineno}: rotation is not orthonormal")
    if np.linalg.det(r) < 0:
        raise ParseError(f"pose line {lineno}: rotation is a reflection")
    return FramePose(UnitQuaternion.from_rotation(r), m[:, 3])


def load_kitti_sequence(pose_file, calib_file) -> tuple[list[FramePose], CameraIntrinsics]:
    """Ground-truth poses plus left-color-camera intrinsics.

    Pose files hold one row-major 3x4 ``[R|t]`` per line; the calibration
    file holds ``P<n>:`` projection rows, of which ``P2`` (left color
    camera) provides fx, fy, cx, cy.
    """
    poses = []
    with open(pose_file) as fh:
        for lineno, line in enumerate(fh):
            if line.strip():
                poses.append(_parse_pose_line(line, lineno))
    if not poses:
        raise ParseError(f"{pose_file}: no poses")

    intrinsics = None
    with open(calib_file) as fh:
        for line in fh:
            if not line.startswith("P2:"):
                continue
            fields = line.split()[1:]
            if len(fields) != 12:
                raise ParseError(f"{calib_file}: P2 row must have 12 values")
            p = np.array([float(f) for f in fields]).reshape(3, 4)
            intrinsics = CameraIntrinsics(fx=p[0, 0], fy=p[1, 1], cx=p[0, 2], cy=p[1, 2])
            break
    if intrinsics is None:
        raise ParseError(f"{calib_file}: missing P2 projection row")
    return poses, intrinsics


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size  # (width, height)


def load_pair_dataset(directory) -> list[PairAnnotation]:
    """Load every scene under ``directory``.

    Each scene directory holds ``near.png``, ``far.png`` and
    ``annotation.json`` with exactly 10 near/far correspondences inside
    the respective image bounds.
    """
    root = Path(directory)
    annotations = []
    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        near_path = scene_dir / "near.png"
        far_path = scene_dir / "far.png"
        ann_path = scene_dir / "annotation.json"
        for path in (near_path, far_path):
            if not path.exists():
                raise MissingImage(f"{path} does not exist")
        if not ann_path.exists():
            raise ParseError(f"{ann_path} does not exist")
        try:
            doc = json.loads(ann_path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{ann_path}: {exc}") from exc
        raw = doc.get("correspondences")
        if not isinstance(raw, list) or len(raw) != ANNOTATION_POINTS:
            count = len(raw) if isinstance(raw, list) else "missing"
            raise ParseError(f"{ann_path}: expected {ANNOTATION_POINTS} correspondences, got {count}")
        near_size = _image_size(near_path)
        far_size = _image_size(far_path)
        pairs = []
        for i, item in enumerate(raw):
            try:
                nx, ny = (float(v) for v in item["near"])
                fx, fy = (float(v) for v in item["far"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{ann_path}: correspondence {i}: {exc}") from exc
            if not (0 <= nx < near_size[0] and 0 <= ny < near_size[1]):
                raise ParseError(f"{ann_path}: near point {i} outside image bounds")
            if not (0 <= fx < far_size[0] and 0 <= fy < far_size[1]):
                raise ParseError(f"{ann_path}: far point {i} outside image bounds")
            pairs.append((Point2(nx, ny), Point2(fx, fy)))
        annotations.append(
            PairAnnotation(scene_dir.name, near_path, far_path, tuple(pairs))
        )
    return annotations


# ---------------------------------------------------------------------------
# Summaries and curve fitting


def summarize_groups(records: list[EvalRecord]) -> list[GroupSummary]:
    """Per-gap means of the error metrics and the failure rate.

    Failed records already carry the substituted maximum errors, so plain
    means implement the failure accounting.  Accumulation is a left-to-right
    sum in record order, reproducible by a naive pass.
    """
    if not records:
        raise ValueError("no records to summarize")
    by_gap: dict[int, list[EvalRecord]] = {}
    for rec in records:
        by_gap.setdefault(rec.gap_j, []).append(rec)
    summaries = []
    for gap in sorted(by_gap):
        group = by_gap[gap]
        n = len(group)
        mean_dist = sum((r.gt_distance or 0.0) for r in group) / n
        mean_t = sum((r.t_err if r.t_err is not None else 1.0) for r in group) / n
        mean_r = sum((r.r_err if r.r_err is not None else 1.0) for r in group) / n
        failures = sum(1 for r in group if r.failed)
        summaries.append(GroupSummary(gap, mean_dist, mean_t, mean_r, failures / n, n))
    return summaries


def fit_log_curve(points) -> tuple[float, float]:
    """Closed-form least squares of ``y = a + b ln(x)``; returns ``(a, b)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    if any(x <= 0 for x, _ in pts):
        raise ValueError("abscissae must be positive")
    lx = np.array([math.log(x) for x, _ in pts])
    y = np.array([y for _, y in pts])
    if np.ptp(lx) == 0.0:
        raise DegenerateX("all abscissae are equal")
    mx = lx.mean()
    my = y.mean()
    b = float(((lx - mx) * (y - my)).sum() / ((lx - mx) ** 2).sum())
    a = float(my - b * mx)
    return a, b


def kitti_image_path(root, sequence: str, frame: int) -> Path:
    return Path(root) / "sequences" / sequence / "image_2" / f"{frame:06d}.png"


def kitti_pose_path(root, sequence: str) -> Path:
    return Path(root) / "poses" / f"{sequence}.txt"


def kitti_calib_path(root, sequence: str) -> Path:
    return Path(root) / "sequences" / sequence / "calib.txt"
