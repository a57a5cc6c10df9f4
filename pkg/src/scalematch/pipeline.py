"""End-to-end localization pipeline and batch evaluation drivers.

``localize_pair`` wires proposals -> descriptors -> matching -> robust
estimation for one image pair.  ``evaluate_kitti`` and ``evaluate_pairs``
run it over datasets, score the results, and write plot-ready CSV/JSON.
Localization failure is a data outcome, not a process error: failed pairs
are scored at maximum error and the run continues.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .descriptors import (
    FALLBACK,
    SUPPORTED_RESOLUTIONS,
    LayerId,
    SidecarClient,
    describe_fallback,
    describe_sidecar,
)
from .errors import ConfigError, LocalizationFailure, ScaleMatchError
from .evaluation import (
    STE_MAX,
    EvalRecord,
    GroupSummary,
    build_pairs,
    fit_log_curve,
    kitti_calib_path,
    kitti_image_path,
    kitti_pose_path,
    load_kitti_sequence,
    load_pair_dataset,
    log_ste,
    rotational_error,
    summarize_groups,
    symmetric_transfer_error,
    translational_error,
)
from .geometry import (
    CameraIntrinsics,
    Homography,
    RansacConfig,
    RelativePose,
    estimate_essential_ransac,
    estimate_homography_ransac,
    recover_pose,
)
from .imageops import load_rgb
from .matching import (
    MatchMethod,
    global_sift_matches,
    match_objects,
    object_center_matches,
    region_guided_sift_matches,
)
from .proposals import ObjectProposal, filter_proposals, selective_search
from .segmentation import SegmentationParams
from .sift import SiftParams, detect_and_describe

SIDECAR_ENV = "SCALEMATCH_SIDECAR"
METHOD_ORDER = ("sift_only", "objects_only", "combined")
CSV_HEADER = (
    "sequence,near,far,gap,method,t_err,r_err,ste,log_ste,failed,match_count"
)


@dataclass(frozen=True)
class RunConfig:
    """Everything a localization run needs besides the images."""

    method: str = "combined"
    estimator: str = "homography"
    layer: str = "res5c"
    resolution: int | str = 224
    backend: str = FALLBACK
    ransac: RansacConfig = field(default_factory=RansacConfig)
    sift: SiftParams = field(default_factory=SiftParams)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)

    def __post_init__(self):
        if self.method not in MatchMethod.__members__:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.estimator not in ("homography", "essential"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.backend != FALLBACK and not self.backend.startswith("sidecar:"):
            raise ConfigError(f"backend must be 'fallback' or 'sidecar:<command>', got {self.backend!r}")
        if self.backend != FALLBACK:
            if self.layer not in LayerId.__members__:
                raise ConfigError(f"unknown layer {self.layer!r}")
            if self.resolution not in SUPPORTED_RESOLUTIONS:
                raise ConfigError(f"unknown resolution {self.resolution!r}")


class DescriptorBackend:
    """Turns proposal crops into descriptors; wraps fallback or a sidecar."""

    def __init__(self, config: RunConfig):
        self._client = None
        self._layer = config.layer
        self._resolution = config.resolution
        if config.backend.startswith("sidecar:"):
            command = os.environ.get(SIDECAR_ENV) or config.backend[len("sidecar:"):]
            self._client = SidecarClient(command)

    def describe(self, crop: np.ndarray):
        if self._client is None:
            return describe_fallback(crop)
        return describe_sidecar(crop, self._layer, self._resolution, self._client)

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class ImageFeatures:
    """Per-image artifacts reused across the pairs an image appears in."""

    proposals: list[ObjectProposal]
    sift: list


def extract_features(image: np.ndarray, config: RunConfig, backend: DescriptorBackend) -> ImageFeatures:
    """Proposals (with descriptors) and point features, per the method."""
    needs_objects = config.method in ("objects_only", "combined")
    needs_sift = config.method in ("sift_only", "combined")

    proposals: list[ObjectProposal] = []
    if needs_objects:
        proposals = filter_proposals(selective_search(image, config.segmentation))
        for prop in proposals:
            b = prop.bbox
            crop = image[int(b.y_min) : int(b.y_max), int(b.x_min) : int(b.x_max)]
            prop.descriptor = backend.describe(crop)

    sift_features = detect_and_describe(image, config.sift) if needs_sift else []
    return ImageFeatures(proposals, sift_features)


@dataclass
class LocalizeResult:
    estimate: Homography | RelativePose | None
    inlier_count: int
    object_match_count: int
    point_match_count: int
    failed: bool
    failure_reason: str | None
    timings_ms: dict


def _point_matches(feat_a: ImageFeatures, feat_b: ImageFeatures, config: RunConfig):
    object_matches = []
    if config.method in ("objects_only", "combined"):
        object_matches = match_objects(feat_a.proposals, feat_b.proposals)
    if config.method == "sift_only":
        return [], global_sift_matches(feat_a.sift, feat_b.sift)
    if config.method == "objects_only":
        return object_matches, object_center_matches(
            object_matches, feat_a.proposals, feat_b.proposals
        )
    return object_matches, region_guided_sift_matches(
        object_matches, feat_a.proposals, feat_b.proposals, feat_a.sift, feat_b.sift
    )


def estimate_from_features(
    feat_a: ImageFeatures,
    feat_b: ImageFeatures,
    config: RunConfig,
    intrinsics: CameraIntrinsics | None = None,
) -> LocalizeResult:
    """Match two feature sets and fit the configured model."""
    if config.estimator == "essential" and intrinsics is None:
        raise ConfigError("essential-matrix estimation requires camera intrinsics")

    t0 = time.perf_counter()
    object_matches, matches = _point_matches(feat_a, feat_b, config)
    t_match = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    estimate = None
    inliers = 0
    failed = False
    reason = None
    try:
        if config.estimator == "homography":
            h, mask = estimate_homography_ransac(matches, config.ransac)
            estimate, inliers = h, int(mask.sum())
        else:
            e, mask = estimate_essential_ransac(matches, intrinsics, config.ransac)
            inlier_matches = [m for m, keep in zip(matches, mask) if keep]
            estimate = recover_pose(e, inlier_matches, intrinsics)
            inliers = int(mask.sum())
    except LocalizationFailure as exc:
        failed = True
        reason = f"{type(exc).__name__}: {exc}"
    t_est = (time.perf_counter() - t0) * 1000.0

    return LocalizeResult(
        estimate=estimate,
        inlier_count=inliers,
        object_match_count=len(object_matches),
        point_match_count=len(matches),
        failed=failed,
        failure_reason=reason,
        timings_ms={"matching": t_match, "estimation": t_est},
    )


def localize_pair(
    image_a: np.ndarray,
    image_b: np.ndarray,
    config: RunConfig,
    intrinsics: CameraIntrinsics | None = None,
    backend: DescriptorBackend | None = None,
) -> LocalizeResult:
    """Full pipeline on one image pair."""
    own_backend = backend is None
    if own_backend:
        backend = DescriptorBackend(config)
    try:
        t0 = time.perf_counter()
        feat_a = extract_features(image_a, config, backend)
        t_a = (time.perf_counter() - t0) * 1000.0
        t0 = time.perf_counter()
        feat_b = extract_features(image_b, config, backend)
        t_b = (time.perf_counter() - t0) * 1000.0
    finally:
        if own_backend:
            backend.close()
    result = estimate_from_features(feat_a, feat_b, config, intrinsics)
    result.timings_ms = {"features_a": t_a, "features_b": t_b, **result.timings_ms}
    return result


# ---------------------------------------------------------------------------
# Batch evaluation

_worker_state: dict = {}


@lru_cache(maxsize=64)
def _load_image_cached(path: str) -> np.ndarray:
    return load_rgb(path)


def _worker_backend(config: RunConfig) -> DescriptorBackend:
    key = (config.backend, config.layer, config.resolution)
    backend = _worker_state.get("backend")
    if backend is None or _worker_state.get("backend_key") != key:
        if backend is not None:
            backend.close()
        backend = DescriptorBackend(config)
        _worker_state["backend"] = backend
        _worker_state["backend_key"] = key
    return backend


def _worker_features(path: str, config: RunConfig) -> ImageFeatures:
    cache = _worker_state.setdefault("features", {})
    key = (
        path,
        config.method in ("objects_only", "combined"),
        config.method in ("sift_only", "combined"),
        config.sift,
        config.segmentation,
        config.backend,
        config.layer,
        config.resolution,
    )
    if key not in cache:
        if len(cache) > 32:
            cache.clear()
        backend = _worker_backend(config)
        cache[key] = extract_features(_load_image_cached(path), config, backend)
    return cache[key]


def _eval_kitti_task(task) -> EvalRecord:
    root, sequence, near, far, gap, method, config, intr = task
    cfg = replace(config, method=method, estimator="essential")
    feat_a = _worker_features(str(kitti_image_path(root, sequence, near)), cfg)
    feat_b = _worker_features(str(kitti_image_path(root, sequence, far)), cfg)
    result = estimate_from_features(feat_a, feat_b, cfg, intr["k"])
    gt: RelativePose = intr["gt"]
    gt_dist = float(np.linalg.norm(gt.translation))
    if result.failed or result.estimate is None:
        t_err, r_err = 1.0, 1.0
        failed = True
    else:
        est: RelativePose = result.estimate
        t_err = translational_error(gt.translation, est.translation)
        r_err = rotational_error(gt.rotation, est.rotation)
        failed = False
    return EvalRecord(
        sequence=sequence,
        near=near,
        far=far,
        gap_j=gap,
        method=method,
        t_err=t_err,
        r_err=r_err,
        ste=None,
        log_ste=None,
        failed=failed,
        match_count=result.point_match_count,
        gt_distance=gt_dist,
    )


def _eval_pairs_task(task) -> EvalRecord:
    annotation, method, config = task
    cfg = replace(config, method=method, estimator="homography")
    feat_a = _worker_features(str(annotation.near_image), cfg)
    feat_b = _worker_features(str(annotation.far_image), cfg)
    result = estimate_from_features(feat_a, feat_b, cfg, None)
    if result.failed or result.estimate is None:
        ste = None
        failed = True
    else:
        try:
            ste = symmetric_transfer_error(result.estimate, annotation)
            failed = False
        except ScaleMatchError:
            ste = None
            failed = True
    return EvalRecord(
        sequence=annotation.scene,
        near=annotation.near_image.name,
        far=annotation.far_image.name,
        gap_j=None,
        method=method,
        t_err=None,
        r_err=None,
        ste=STE_MAX if failed else ste,
        log_ste=log_ste(None if failed else ste),
        failed=failed,
        match_count=result.point_match_count,
    )


def _run_tasks(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))  # plain repr even for numpy scalars
    return str(value)


def write_records_csv(path, records: list[EvalRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for r in records:
            writer.writerow(
                [
                    r.sequence,
                    _fmt(r.near),
                    _fmt(r.far),
                    _fmt(r.gap_j),
                    r.method,
                    _fmt(r.t_err),
                    _fmt(r.r_err),
                    _fmt(r.ste),
                    _fmt(r.log_ste),
                    _fmt(r.failed),
                    _fmt(r.match_count),
                ]
            )


def _summary_dict(s: GroupSummary) -> dict:
    return {
        "gap_j": s.gap_j,
        "mean_distance": s.mean_distance,
        "mean_t_err": s.mean_t_err,
        "mean_r_err": s.mean_r_err,
        "failure_rate": s.failure_rate,
        "pair_count": s.pair_count,
    }


def _fit_or_none(points) -> list | None:
    try:
        a, b = fit_log_curve(points)
        return [a, b]
    except ScaleMatchError:
        return None
    except ValueError:
        return None


def evaluate_kitti(
    root,
    sequences: list[str],
    config: RunConfig,
    methods: list[str],
    out_dir,
    subsample: int = 5,
    max_gap: int = 10,
    jobs: int = 1,
) -> list[EvalRecord]:
    """Run the odometry protocol and write results.csv + groups.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tasks = []
    for sequence in sequences:
        poses, intrinsics = load_kitti_sequence(
            kitti_pose_path(root, sequence), kitti_calib_path(root, sequence)
        )
        for pair in build_pairs(poses, subsample=subsample, max_gap=max_gap):
            for method in methods:
                tasks.append(
                    (
                        str(root),
                        sequence,
                        pair.index_near,
                        pair.index_far,
                        pair.gap_j,
                        method,
                        config,
                        {"k": intrinsics, "gt": pair.ground_truth},
                    )
                )
    records = _run_tasks(_eval_kitti_task, tasks, jobs)
    records.sort(key=lambda r: (r.sequence, r.near, r.gap_j, METHOD_ORDER.index(r.method)))
    write_records_csv(out / "results.csv", records)

    report = {}
    for method in methods:
        subset = [r for r in records if r.method == method]
        if not subset:
            continue
        groups = summarize_groups(subset)
        pts = [(g.mean_distance, g) for g in groups if g.mean_distance > 0]
        report[method] = {
            "groups": [_summary_dict(g) for g in groups],
            "curves": {
                "t_err": _fit_or_none([(x, g.mean_t_err) for x, g in pts]),
                "r_err": _fit_or_none([(x, g.mean_r_err) for x, g in pts]),
                "failure_rate": _fit_or_none([(x, g.failure_rate) for x, g in pts]),
            },
        }
    (out / "groups.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return records


def evaluate_pairs(
    root,
    config: RunConfig,
    methods: list[str],
    out_dir,
    jobs: int = 1,
) -> list[EvalRecord]:
    """Run the annotated-pair protocol and write results.csv + summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    annotations = load_pair_dataset(root)
    if not annotations:
        raise ScaleMatchError(f"no scenes found under {root}")

    tasks = [(ann, method, config) for ann in annotations for method in methods]
    records = _run_tasks(_eval_pairs_task, tasks, jobs)
    records.sort(key=lambda r: (r.sequence, METHOD_ORDER.index(r.method)))
    write_records_csv(out / "results.csv", records)

    report = {}
    for method in methods:
        subset = [r for r in records if r.method == method]
        if not subset:
            continue
        report[method] = {
            "mean_log_ste": sum(r.log_ste for r in subset) / len(subset),
            "failures": sum(1 for r in subset if r.failed),
            "pair_count": len(subset),
        }
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return records
