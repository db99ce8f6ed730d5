"""Exception types raised for invalid inputs, files, and configurations.

Everything user-facing derives from IsarecError so the command-line layer
can map it to exit code 2 (usage/input error).  Genuine bugs surface as
ordinary Python exceptions and map to exit code 1.
"""


class IsarecError(Exception):
    """Base class for errors caused by invalid inputs or configuration."""


class ManifestError(IsarecError):
    """Dataset manifest is missing, malformed, or violates its invariants."""


class PgmError(IsarecError):
    """A PGM frame file is missing, malformed, or has an unsupported maxval."""


class FrameSequenceError(IsarecError):
    """Frame files in a clip directory are missing, non-consecutive, or inconsistent."""


class GeometryError(IsarecError):
    """Clip or patch dimensions are incompatible with the requested block geometry."""


class EmptyClipError(IsarecError):
    """A clip produced zero descriptors (too small for one block)."""


class DegenerateFilterError(IsarecError):
    """Filter matrix became rank deficient; symmetric orthogonalization is undefined."""


class ModelFormatError(IsarecError):
    """A model file has an unknown version, bad section, or inconsistent shape."""


class ConfigError(IsarecError):
    """Pipeline configuration file or overrides are invalid."""
