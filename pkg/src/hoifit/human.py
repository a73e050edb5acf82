"""Human-pose evidence: placement into object space, interaction directions,
and the palm contact trajectory.

Keypoints arrive in the pose estimator's orthographic frame; placing the human
scales them by a single factor and adds a per-frame translation, so the
estimator frame must already be rotationally aligned with the camera. The
facing direction and ground normal are invariant to that scale/translation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, back_project, project_points
from .errors import (
    InvalidInputError,
    PlacementUnderconstrainedError,
    TrajectoryGapError,
)
from .validation import check_finite, check_vector

log = logging.getLogger(__name__)

KEYPOINT_NAMES = (
    "leftShoulder",
    "rightShoulder",
    "leftHip",
    "rightHip",
    "leftAnkle",
    "rightAnkle",
    "leftToe",
    "rightToe",
    "leftPalm",
    "rightPalm",
    "headTop",
    "leftHeel",
    "rightHeel",
)

DEFAULT_SUBJECT_HEIGHT_CM = 170.0


@dataclass(frozen=True)
class HumanFrame:
    """Named 3D keypoints, 2D pixel targets for a subset, per-keypoint validity."""

    keypoints3d: dict[str, np.ndarray]
    targets2d: dict[str, np.ndarray]
    valid: dict[str, bool]

    def __post_init__(self):
        kp = {n: check_vector(v, 3, f"keypoint {n}") for n, v in self.keypoints3d.items()}
        t2 = {}
        for n, v in self.targets2d.items():
            if n not in kp:
                raise InvalidInputError(f"2D target {n!r} names no 3D keypoint")
            t2[n] = check_vector(v, 2, f"target {n}")
        object.__setattr__(self, "keypoints3d", kp)
        object.__setattr__(self, "targets2d", t2)
        object.__setattr__(self, "valid", {n: bool(self.valid.get(n, True)) for n in kp})

    def is_valid(self, name: str) -> bool:
        return name in self.keypoints3d and self.valid.get(name, False)

    def valid_target_names(self) -> list[str]:
        return [n for n in self.targets2d if self.is_valid(n)]


@dataclass(frozen=True)
class HumanEvidence:
    frames: tuple[HumanFrame, ...]
    interaction_window: tuple[int, int]
    subject_height_cm: float = DEFAULT_SUBJECT_HEIGHT_CM

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        start, end = int(self.interaction_window[0]), int(self.interaction_window[1])
        if not 0 <= start <= end < len(self.frames):
            raise InvalidInputError(
                f"interaction window ({start}, {end}) invalid for {len(self.frames)} frames"
            )
        object.__setattr__(self, "interaction_window", (start, end))
        if not self.subject_height_cm > 0:
            raise InvalidInputError("subject height must be positive")

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def window_range(self) -> range:
        return range(self.interaction_window[0], self.interaction_window[1] + 1)


@dataclass(frozen=True)
class PlacedHuman:
    """Per-frame translation (cm) and one global scale placing the skeleton."""

    translations_cm: np.ndarray  # (T, 3)
    scale: float
    residuals: np.ndarray | None = None  # per-frame mean squared pixel error

    def __post_init__(self):
        t = check_finite(self.translations_cm, "translations")
        if t.ndim != 2 or t.shape[1] != 3:
            raise InvalidInputError(f"translations must be (T, 3), got {t.shape}")
        object.__setattr__(self, "translations_cm", t)
        if not self.scale > 0:
            raise InvalidInputError("scale must be positive")

    def world_keypoint(self, frame: HumanFrame, index: int, name: str) -> np.ndarray:
        return self.scale * frame.keypoints3d[name] + self.translations_cm[index]


def compute_scale(evidence: HumanEvidence) -> float:
    """Scale mapping estimator units to cm via the subject's known height.

    Uses the median over frames of the head-to-mid-heel distance; frames
    missing the head or both heels are skipped.
    """
    heights = []
    for f in evidence.frames:
        if not f.is_valid("headTop"):
            continue
        heels = [f.keypoints3d[n] for n in ("leftHeel", "rightHeel") if f.is_valid(n)]
        if not heels:
            continue
        mid_heel = np.mean(heels, axis=0)
        heights.append(float(np.linalg.norm(f.keypoints3d["headTop"] - mid_heel)))
    if not heights:
        raise InvalidInputError("no frame with a valid headTop and heel to compute scale")
    return evidence.subject_height_cm / float(np.median(heights))


def _projection_jacobian(point_cm: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    x, y, z = point_cm
    f = cam.focal_px
    return np.array([[f / z, 0.0, -f * x / z**2], [0.0, f / z, -f * y / z**2]])


def human_fit_energy(
    evidence: HumanEvidence, placed: PlacedHuman, cam: CameraIntrinsics
) -> tuple[float, np.ndarray]:
    """Mean-over-frames sum of squared reprojection errors, with its gradient
    w.r.t. every per-frame translation (shape (T, 3))."""
    num = evidence.num_frames
    if placed.translations_cm.shape[0] != num:
        raise InvalidInputError("placement frame count does not match evidence")
    total = 0.0
    grad = np.zeros((num, 3))
    for t, f in enumerate(evidence.frames):
        names = f.valid_target_names()
        if not names:
            log.warning("frame %d has no valid 2D targets; contributes zero", t)
            continue
        for n in names:
            world = placed.world_keypoint(f, t, n)
            resid = project_points(world, cam) - f.targets2d[n]
            total += float(resid @ resid)
            grad[t] += 2.0 * _projection_jacobian(world, cam).T @ resid
    return total / num, grad / num


def _solve_frame(frame: HumanFrame, scale: float, cam: CameraIntrinsics) -> tuple[np.ndarray, float]:
    """Damped Gauss-Newton on one frame's reprojection least squares."""
    names = frame.valid_target_names()
    pts = np.stack([scale * frame.keypoints3d[n] for n in names])
    targets = np.stack([frame.targets2d[n] for n in names])

    # Depth seed from the orthographic-to-perspective size ratio, position
    # seed from ray through the target centroid.
    spread3d = float(np.linalg.norm(pts[:, :2] - pts[:, :2].mean(axis=0), axis=1).mean())
    spread2d = float(np.linalg.norm(targets - targets.mean(axis=0), axis=1).mean())
    depth = cam.focal_px * max(spread3d, 1e-6) / max(spread2d, 1e-6)
    depth = float(np.clip(depth, 20.0, 5e4))
    x = back_project(targets.mean(axis=0), depth, cam) - pts.mean(axis=0)

    damping = 1e-6
    prev_cost = np.inf
    for _ in range(60):
        world = pts + x
        if world[:, 2].min() <= 1.0:  # keep the skeleton in front of the camera
            x[2] += 1.0 - world[:, 2].min() + 1.0
            world = pts + x
        proj = cam.principal_px + cam.focal_px * world[:, :2] / world[:, 2:3]
        resid = (proj - targets).reshape(-1)
        cost = float(resid @ resid)
        jac = np.concatenate([_projection_jacobian(w, cam) for w in world])
        jtj = jac.T @ jac + damping * np.eye(3)
        step = np.linalg.solve(jtj, -jac.T @ resid)
        if cost > prev_cost:
            damping *= 10.0
        else:
            damping = max(damping * 0.3, 1e-9)
        prev_cost = cost
        x = x + step
        if np.linalg.norm(step) < 1e-10:
            break
    world = pts + x
    proj = cam.principal_px + cam.focal_px * world[:, :2] / world[:, 2:3]
    return x, float(((proj - targets) ** 2).sum())


def solve_placement(evidence: HumanEvidence, cam: CameraIntrinsics) -> PlacedHuman:
    """Per-frame translations minimizing the reprojection energy.

    Frames are independent subproblems; frames with fewer than three valid 2D
    targets cannot pin a 3D translation and raise
    :class:`PlacementUnderconstrainedError`.
    """
    scale = compute_scale(evidence)
    bad = [t for t, f in enumerate(evidence.frames) if len(f.valid_target_names()) < 3]
    if bad:
        raise PlacementUnderconstrainedError(bad)
    translations = np.zeros((evidence.num_frames, 3))
    residuals = np.zeros(evidence.num_frames)
    for t, f in enumerate(evidence.frames):
        translations[t], residuals[t] = _solve_frame(f, scale, cam)
    return PlacedHuman(translations, scale, residuals)


def _required(frame: HumanFrame, names: tuple[str, ...], what: str) -> list[np.ndarray]:
    missing = [n for n in names if not frame.is_valid(n)]
    if missing:
        raise InvalidInputError(f"{what} needs valid {names}, missing {missing}")
    return [frame.keypoints3d[n] for n in names]


def facing_direction(frame: HumanFrame, scale: float = 1.0, translation=None) -> np.ndarray:
    """Unit torso normal pointing the way the person faces.

    Cross of the two torso diagonals (left shoulder to right hip, right
    shoulder to left hip); the sign is fixed to point away from the back.
    Invariant to uniform scale and translation, equivariant to rotation.
    """
    ls, rs, lh, rh = _required(
        frame, ("leftShoulder", "rightShoulder", "leftHip", "rightHip"), "facing direction"
    )
    normal = np.cross(rh - ls, lh - rs)
    norm = float(np.linalg.norm(normal))
    span = max(np.linalg.norm(rh - ls), np.linalg.norm(lh - rs))
    if norm < 1e-9 * max(span**2, 1e-12):
        raise InvalidInputError("degenerate torso landmarks: shoulders/hips are collinear")
    normal = normal / norm
    down = (lh + rh) / 2.0 - (ls + rs) / 2.0
    right = rs - ls
    backward = np.cross(down, right)
    if float(normal @ backward) > 0.0:
        normal = -normal
    return normal


def ground_normal(frame: HumanFrame) -> np.ndarray:
    """Unit foot-plane normal, sign chosen toward the head (hips above ankles)."""
    la, ra, lt, rt = _required(
        frame, ("leftAnkle", "rightAnkle", "leftToe", "rightToe"), "ground normal"
    )
    normal = np.cross(rt - la, lt - ra)
    norm = float(np.linalg.norm(normal))
    span = max(np.linalg.norm(rt - la), np.linalg.norm(lt - ra))
    if norm < 1e-9 * max(span**2, 1e-12):
        raise InvalidInputError("degenerate foot landmarks: ankles/toes are collinear")
    normal = normal / norm
    lh, rh = _required(frame, ("leftHip", "rightHip"), "ground normal sign")
    mid_ankle = (la + ra) / 2.0
    up = (lh + rh) / 2.0 - mid_ankle
    if float(normal @ up) < 0.0:
        normal = -normal
    return normal


def hand_trajectory(evidence: HumanEvidence, placed: PlacedHuman, hand: str) -> np.ndarray:
    """World palm positions over the interaction window, shape (W, 3) in cm.

    Gaps of at most two consecutive invalid frames are filled by linear
    interpolation; longer gaps (or gaps at the window edges) raise
    :class:`TrajectoryGapError`.
    """
    if hand not in ("left", "right"):
        raise InvalidInputError(f"hand must be 'left' or 'right', got {hand!r}")
    name = "leftPalm" if hand == "left" else "rightPalm"
    window = list(evidence.window_range())
    points = np.full((len(window), 3), np.nan)
    for i, t in enumerate(window):
        f = evidence.frames[t]
        if f.is_valid(name):
            points[i] = placed.world_keypoint(f, t, name)
    missing = np.isnan(points[:, 0])
    if missing.any():
        idx = np.nonzero(missing)[0]
        log.warning("%s palm missing in window frames %s; interpolating", hand, idx.tolist())
        runs = np.split(idx, np.nonzero(np.diff(idx) > 1)[0] + 1)
        for run in runs:
            lo, hi = run[0] - 1, run[-1] + 1
            if len(run) > 2 or lo < 0 or hi >= len(window):
                raise TrajectoryGapError(
                    f"{hand} palm gap of {len(run)} frame(s) at window offset {run[0]}"
                )
            for j, k in enumerate(run, start=1):
                alpha = j / (len(run) + 1)
                points[k] = (1 - alpha) * points[lo] + alpha * points[hi]
    return points
