"""Exception types shared across the toolkit."""


class ScaleMatchError(Exception):
    """Base class for every error raised by this package."""


class LocalizationFailure(ScaleMatchError):
    """No pose or homography could be produced for an image pair.

    Batch evaluation treats this as a data outcome: the pair is scored at
    maximum error instead of aborting the run.
    """


class InsufficientMatches(LocalizationFailure):
    """Fewer correspondences than the minimal sample of the estimator."""


class NoConsensus(LocalizationFailure):
    """RANSAC found no model supported by enough inliers."""


class DegenerateConfiguration(LocalizationFailure):
    """The design matrix of a fit is rank-deficient (e.g. collinear points)."""


class CheiralityAmbiguity(LocalizationFailure):
    """No essential-matrix decomposition places a strict majority of points
    in front of both cameras."""


class SingularHomography(LocalizationFailure):
    """A homography cannot be applied or inverted reliably."""


class PointAtInfinity(ScaleMatchError):
    """Projective application sent a point to infinity (w ~ 0)."""


class ImageTooSmall(ScaleMatchError):
    """Input image is below the minimum size of the operation."""


class BBoxOutOfBounds(ScaleMatchError):
    """Bounding box extends outside the image."""


class ZeroVector(ScaleMatchError):
    """Cosine distance is undefined for a zero-norm vector."""


class LengthMismatch(ScaleMatchError):
    """Descriptors of different dimensionality (or family) were compared."""


class BothZero(ScaleMatchError):
    """Translational error is undefined when both translations are zero."""


class DuplicateFarPoints(ScaleMatchError):
    """Scale-change ratio has a zero denominator (repeated far point)."""


class DegenerateX(ScaleMatchError):
    """Curve fit needs at least two distinct abscissae."""


class ParseError(ScaleMatchError):
    """A dataset file is malformed."""


class MissingImage(ScaleMatchError):
    """A dataset entry references an image file that does not exist."""


class DatasetLayoutError(ScaleMatchError):
    """A dataset root does not follow the expected directory layout."""


class ConfigError(ScaleMatchError):
    """Run configuration is inconsistent or incomplete."""


class SidecarUnavailable(ScaleMatchError):
    """The descriptor sidecar process is absent, dead, or failed handshake."""


class ProtocolError(ScaleMatchError):
    """The sidecar sent a frame that does not follow the wire protocol."""


class ShapeMismatch(ScaleMatchError):
    """Sidecar payload length disagrees with its declared shape."""
