"""Exception types raised across the package."""


class HoifitError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HoifitError, ValueError):
    """Rejected input: non-finite values, broken invariants, bad shapes."""


class DegenerateScaleError(HoifitError, ValueError):
    """Anisotropic scaling collapsed a joint axis to zero length."""


class BehindCameraError(HoifitError, ValueError):
    """Points at non-positive depth cannot be projected.

    ``indices`` lists the offending point indices.
    """

    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"{len(self.indices)} point(s) behind the camera: {self.indices[:8]}")


class EmptyMaskError(HoifitError, ValueError):
    """A silhouette with zero total coverage has no centroid."""


class PlacementUnderconstrainedError(HoifitError, ValueError):
    """Frames with fewer than three valid 2D targets cannot fix a 3D translation.

    ``frames`` lists the underconstrained frame indices.
    """

    def __init__(self, frames):
        self.frames = list(frames)
        super().__init__(f"underconstrained frames (need >= 3 valid 2D targets): {self.frames}")


class TrajectoryGapError(HoifitError, ValueError):
    """Palm keypoint missing for more than two consecutive frames in the window."""


class FitAbortedError(HoifitError, RuntimeError):
    """A candidate fit hit a non-finite gradient or propagated energy error."""


class FitFailedError(HoifitError, RuntimeError):
    """Every candidate aborted; ``diagnostics`` maps candidate labels to causes."""

    def __init__(self, diagnostics):
        self.diagnostics = dict(diagnostics)
        lines = ", ".join(f"{k}: {v}" for k, v in self.diagnostics.items())
        super().__init__(f"all candidates aborted ({lines})")


class DataFormatError(HoifitError, ValueError):
    """A dataset file is missing, malformed, or inconsistent with its peers."""
