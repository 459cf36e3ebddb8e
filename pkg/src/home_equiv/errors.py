"""Exception types shared across the package."""


class HomeEquivError(Exception):
    """Base class for all package errors."""


class SingularMatrix(HomeEquivError):
    """Matrix is not invertible within tolerance."""


class DegeneratePoint(HomeEquivError):
    """Homogeneous point cannot be converted to Euclidean (w ~ 0)."""


class ShapeMismatch(HomeEquivError):
    """Operand shapes are incompatible for the requested operation."""


class NonScalarLoss(HomeEquivError):
    """backward() requires a scalar loss node."""


class InconsistentShapes(HomeEquivError):
    """View representations do not share a common layout."""


class GraphInvariantViolation(HomeEquivError):
    """Neighbor graph violates symmetry / inverse consistency / no-self-edge."""


class NegativeAlpha(HomeEquivError):
    """Loss balance factor must be nonnegative."""


class BadConfig(HomeEquivError):
    """Configuration value out of range or inconsistent."""


class IoError(HomeEquivError):
    """File missing, unreadable, or structurally broken."""


class CorruptManifest(HomeEquivError):
    """Dataset manifest fails validation."""


class ChecksumMismatch(HomeEquivError):
    """Stored CRC32 does not match file contents."""


class TensorFormatError(HomeEquivError):
    """Tensor file or checkpoint container is malformed."""


class MissingCheckpoint(HomeEquivError):
    """Regime requires a checkpoint that was not supplied or not found."""


class RegimePrereqViolation(HomeEquivError):
    """Checkpoint or flags do not satisfy the regime's prerequisites."""


class EmptySplit(HomeEquivError):
    """Evaluation split contains no samples."""
