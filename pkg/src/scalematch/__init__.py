"""Scale-robust metric localization from matched object regions.

Matches class-agnostic object proposals between two views of one scene,
restricts point-feature matching to the matched regions, and estimates a
homography or essential matrix with RANSAC.  Includes the full evaluation
harness (odometry pairs and annotated near/far pairs).
"""

from .descriptors import (
    LayerId,
    ObjectDescriptor,
    SidecarClient,
    cosine_distance,
    describe_fallback,
    describe_sidecar,
)
from .evaluation import (
    STE_MAX,
    EvalRecord,
    FramePose,
    GroupSummary,
    PairAnnotation,
    PairRecord,
    build_pairs,
    fit_log_curve,
    gaze_compatible,
    load_kitti_sequence,
    load_pair_dataset,
    log_ste,
    median_scale_change,
    relative_pose,
    rotational_error,
    summarize_groups,
    symmetric_transfer_error,
    translational_error,
)
from .geometry import (
    BBox,
    CameraIntrinsics,
    EssentialMatrix,
    Homography,
    Point2,
    PointMatch,
    RansacConfig,
    RelativePose,
    UnitQuaternion,
    apply_homography,
    dlt_homography,
    eight_point_essential,
    estimate_essential_ransac,
    estimate_homography_ransac,
    recover_pose,
)
from .matching import (
    MatchMethod,
    ObjectMatch,
    global_sift_matches,
    match_objects,
    mutual_nearest_match,
    object_center_matches,
    region_guided_sift_matches,
)
from .pipeline import (
    DescriptorBackend,
    LocalizeResult,
    RunConfig,
    evaluate_kitti,
    evaluate_pairs,
    localize_pair,
)
from .proposals import ObjectProposal, extract_crop, filter_proposals, selective_search
from .segmentation import SegmentationParams, graph_segment
from .sift import SiftFeature, SiftParams, detect_and_describe

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
