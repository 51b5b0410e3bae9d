"""Exception hierarchy shared across the package.

``PrintIDError`` is the common base. ``DataError`` groups problems caused by
bad inputs (files, labels, configs) so the CLI can map them to a distinct
exit code; everything else is treated as an internal failure.
"""


class PrintIDError(Exception):
    """Base class for all printid errors."""


class DataError(PrintIDError):
    """Bad input data: malformed files, unknown labels, invalid configs."""


# geometry
class ParseError(DataError):
    """Mesh file could not be parsed."""


class DegenerateMesh(DataError):
    """Mesh has too few vertices, no faces, or zero spatial extent."""


class InvalidGrid(DataError):
    """View grid azimuth step does not divide 360."""


# renderer
class RenderError(PrintIDError):
    """Degenerate camera configuration or rasterization failure."""


class EmptyPool(DataError):
    """Background compositing requested with an empty image pool."""


# encoder
class ShapeError(DataError):
    """Image batch has the wrong shape or channel count."""


class CheckpointError(DataError):
    """Encoder checkpoint reference could not be resolved."""


class VersionMismatch(DataError):
    """Checkpoint was written by an incompatible format version."""


class ZeroVector(PrintIDError):
    """Cosine similarity of a zero-norm vector is undefined."""


# contrastive
class InsufficientObjects(DataError):
    """Fewer distinct meshes available than the requested batch size."""


class DegenerateBatch(PrintIDError):
    """Contrastive batch smaller than two samples."""


class NonFinite(PrintIDError):
    """A similarity or loss value became NaN or infinite."""


class OverlapError(DataError):
    """Training and evaluation object ids intersect."""


# prototypes
class InvalidStrategy(DataError):
    """Viewpoint sampling strategy is internally inconsistent."""


class DuplicateObjectId(DataError):
    """Two meshes in one classification set share an object id."""


class DigestMismatch(DataError):
    """Prototype-set file is corrupt, truncated, or has a bad digest."""


# classify
class EncoderMismatch(DataError):
    """Query encoder does not match the encoder a set was built with."""


class EmptySet(DataError):
    """Classification requested against a set with no prototypes."""


class SetMismatch(DataError):
    """Rankings being aggregated come from different sets."""


class EmptyViews(DataError):
    """Aggregation requested over zero views."""


# eval
class UnknownLabel(DataError):
    """A labeled query references an object id absent from the set."""
