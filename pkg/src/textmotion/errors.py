"""Error types shared across the package.

Every contract violation raises a dedicated subclass so callers (and the
CLI exit-code mapping) can tell failure modes apart without parsing
messages.
"""


class TextMotionError(Exception):
    """Base class for all package errors."""


class InvalidRotationError(TextMotionError, ValueError):
    """Input matrix is not a proper rotation."""


class Degenerate6DError(TextMotionError, ValueError):
    """6D rotation vector is degenerate (near-zero or parallel halves)."""


class TooShortError(TextMotionError, ValueError):
    """Sequence has too few frames for the requested operation."""


class InvalidCutoffError(TextMotionError, ValueError):
    """Filter cutoff outside (0, Nyquist)."""


class UpsampleUnsupportedError(TextMotionError, ValueError):
    """Resampling to a higher frame rate is not supported."""


class InvalidSpecError(TextMotionError, ValueError):
    """Synthetic dataset spec is malformed."""


class ShapeMismatchError(TextMotionError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class InvalidTokenError(TextMotionError, ValueError):
    """Token id out of codebook range."""


class NoDataError(TextMotionError, ValueError):
    """Required data (modality, split, samples) is absent."""


class ConfigError(TextMotionError, ValueError):
    """Configuration inconsistent with checkpoints or model state."""


class LengthError(TextMotionError, ValueError):
    """Sequence exceeds the supported maximum length."""


class ContractViolationError(TextMotionError, RuntimeError):
    """An internal invariant that callers must uphold was broken."""


class InvalidDistributionError(TextMotionError, ValueError):
    """Probability rows do not sum to one."""


class DegenerateBatchError(TextMotionError, ValueError):
    """Batch cannot support the requested loss (e.g. no negatives)."""


class AlignmentError(TextMotionError, ValueError):
    """Per-position sequences have mismatched lengths."""


class EmptyMotionError(TextMotionError, RuntimeError):
    """Generation stopped before producing any motion tokens."""


class ContainerError(TextMotionError, ValueError):
    """Motion container file is malformed or inconsistent."""
