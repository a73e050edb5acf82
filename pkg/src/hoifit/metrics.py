"""Evaluation measures comparing a fit against ground-truth annotations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .so3 import geodesic_angle_deg
from .validation import check_finite, check_vector


@dataclass(frozen=True)
class EvalReport:
    orientation_err_deg: float
    location_err_cm: float
    part_motion_err: float
    part_motion_unit: str  # "deg" or "cm"
    dimension_err_cm: float
    model_correct: bool | None = None
    per_frame_motion_residuals: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("orientation_err_deg", "location_err_cm", "part_motion_err", "dimension_err_cm"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if self.part_motion_unit not in ("deg", "cm"):
            raise InvalidInputError(f"part motion unit must be deg or cm, got {self.part_motion_unit}")

    def to_dict(self) -> dict:
        return {
            "orientationErrDeg": self.orientation_err_deg,
            "locationErrCm": self.location_err_cm,
            "partMotionErr": self.part_motion_err,
            "partMotionUnit": self.part_motion_unit,
            "dimensionErrCm": self.dimension_err_cm,
            "modelCorrect": self.model_correct,
            "perFrameMotionResiduals": list(self.per_frame_motion_residuals),
        }


def orientation_error(r_est, r_gt) -> float:
    """Relative angle in degrees between two rotations (SO(3) geodesic)."""
    return geodesic_angle_deg(r_est, r_gt)


def location_error(x_est, x_gt) -> float:
    """Euclidean distance between object base centers, cm."""
    a = check_vector(x_est, 3, "estimated location")
    b = check_vector(x_gt, 3, "ground-truth location")
    return float(np.linalg.norm(a - b))


def part_motion_error(theta_est, theta_gt, kind: str) -> tuple[float, np.ndarray]:
    """Mean absolute per-frame motion difference, degrees or cm by joint kind."""
    if kind not in ("revolute", "prismatic"):
        raise InvalidInputError(f"joint kind must be revolute or prismatic, got {kind!r}")
    a = check_finite(theta_est, "estimated motion")
    b = check_finite(theta_gt, "ground-truth motion")
    if a.shape != b.shape:
        raise InvalidInputError(f"motion sequences differ in length: {a.shape} vs {b.shape}")
    residuals = np.abs(a - b)
    return float(residuals.mean()), residuals


def dimension_error(d_est, d_gt) -> float:
    """Mean absolute per-axis dimension difference, cm."""
    a = check_vector(d_est, 3, "estimated dimensions")
    b = check_vector(d_gt, 3, "ground-truth dimensions")
    return float(np.abs(a - b).mean())


def model_accuracy(pairs) -> float:
    """Fraction of (predicted, ground-truth) model-id pairs that match."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("model accuracy needs at least one prediction")
    return sum(1 for p, g in pairs if p == g) / len(pairs)


def evaluate_fit(
    r_est,
    x_est,
    theta_est,
    dims_est,
    r_gt,
    x_gt,
    theta_gt,
    dims_gt,
    kind: str,
    model_pred: str | None = None,
    model_gt: str | None = None,
) -> EvalReport:
    motion_err, residuals = part_motion_error(theta_est, theta_gt, kind)
    return EvalReport(
        orientation_err_deg=orientation_error(r_est, r_gt),
        location_err_cm=location_error(x_est, x_gt),
        part_motion_err=motion_err,
        part_motion_unit="deg" if kind == "revolute" else "cm",
        dimension_err_cm=dimension_error(dims_est, dims_gt),
        model_correct=None if model_gt is None else (model_pred == model_gt),
        per_frame_motion_residuals=tuple(float(r) for r in residuals),
    )
