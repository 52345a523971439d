"""Exception types raised across the grounding engine.

Grouped by the layer that raises them: scene bundle loading, geometry,
model-service clients, and pipeline/evaluation plumbing.
"""


class Ground3dError(Exception):
    """Base class for every error raised by this package."""


# --- scene bundles ---------------------------------------------------------

class SceneBundleError(Ground3dError):
    pass


class MissingFile(SceneBundleError):
    """A file named by the bundle manifest does not exist."""

    def __init__(self, path):
        super().__init__(f"missing bundle file: {path}")
        self.path = str(path)


class MalformedPose(SceneBundleError):
    """Pose upper-left 3x3 block is not a proper rotation."""


class DepthMismatch(SceneBundleError):
    """Depth raster dimensions differ from the RGB raster's."""


class IndexOutOfRange(SceneBundleError):
    """A proposal references a point index outside the cloud."""


class EmptyMask(SceneBundleError):
    """A proposal has no point indices."""


# --- geometry --------------------------------------------------------------

class GeometryError(Ground3dError):
    pass


class DegenerateDirection(GeometryError):
    """Camera and target coincide; no viewing direction exists."""


class DimensionMismatch(GeometryError):
    """A 2D mask does not match the frame raster dimensions."""


class EmptySet(GeometryError):
    """An operation that needs at least one point received none."""


class DegenerateExtent(GeometryError):
    """Scene XY span is below one output pixel."""


class NotVisible(GeometryError):
    """The proposal has no visible projection in the given frame."""


class NoVisibleFrames(GeometryError):
    """No frame passes the visibility threshold for the proposal."""


# --- model-service clients -------------------------------------------------

class ClientError(Ground3dError):
    pass


class ServiceError(ClientError):
    """Transport failure, bad HTTP status, or malformed service reply."""


class ParseFailure(ClientError):
    """Model reply could not be parsed after the retry budget."""


class DimensionDrift(ClientError):
    """Embedding dimension changed between calls within one run."""


class InvalidInput(ClientError):
    """Client-side precondition violation (empty text, empty crop)."""


class OutOfBoundsPoint(ClientError):
    """A prompt point lies outside the image bounds."""


class RefusalOrExhausted(ClientError):
    """The multiple-choice protocol ended without a usable answer."""

    def __init__(self, message, exchanges=None):
        super().__init__(message)
        self.exchanges = exchanges or []


# --- pipeline / evaluation -------------------------------------------------

class NoCandidates(Ground3dError):
    """No proposal category intersects the parsed top categories."""


class PairingMismatch(Ground3dError):
    """A grounding result was paired with the wrong reference item."""
