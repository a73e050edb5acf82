"""The fitting objective: mask, human, interaction and regularization terms.

Every term lives in one torch graph over five parameter leaves (translation,
rotation vector, size, per-frame part motion, contact-curve rotation vector);
gradients are exact autograd derivatives reported in API units (cm, radians
for rotation vectors, degrees for revolute motion).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from . import _kernels as K
from .articulated import ArticulatedModel, ObjectParams
from .camera import CameraIntrinsics
from .errors import InvalidInputError
from .human import (
    HumanEvidence,
    PlacedHuman,
    facing_direction,
    ground_normal,
    hand_trajectory,
    human_fit_energy,
)
from .rendering import SilhouetteImage, SoftRasterSettings, render_coverage_tensor
from .so3 import UPRIGHT_FACING, matrix_to_rotvec
from .validation import check_index, check_rotation_matrix

log = logging.getLogger(__name__)

TERM_KEYS = ("mask", "human", "orientation", "contact", "center", "limit", "depth", "tilt", "smooth")
GRAD_KEYS = ("translation", "rotation", "size", "part_motion", "contact_rotation")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Term weights; the five regularizers carry their own sub-weights.

    Defaults balance the terms' natural magnitudes (mask in squared coverage
    summed over pixels, contact/depth in cm^2, angles in deg^2) so the mask
    anchors scale and depth while the interaction terms resolve orientation.
    """

    mask: float = 1.0
    human: float = 1.0
    hoi: float = 10.0
    reg: float = 0.1
    center: float = 1.0
    limit: float = 1.0
    depth: float = 0.0001
    tilt: float = 1.0
    smooth: float = 0.01

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise InvalidInputError(f"weight {name} must be non-negative")

    def effective(self, key: str) -> float:
        """Multiplier applied to a raw term value in the total."""
        if key in ("mask", "human"):
            return getattr(self, key)
        if key in ("orientation", "contact"):
            return self.hoi
        return self.reg * getattr(self, key)

    def combine(self, per_term: dict[str, float]) -> float:
        return sum(self.effective(k) * per_term.get(k, 0.0) for k in TERM_KEYS)


@dataclass(frozen=True)
class ContactAlignment:
    """Rigid alignment of the contact curve; translation is derived, not free."""

    rotation: np.ndarray
    translation_cm: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation_matrix(self.rotation, "curve rotation"))

    @classmethod
    def identity(cls) -> "ContactAlignment":
        return cls(np.eye(3))


@dataclass(frozen=True)
class EnergyReport:
    """Raw (unweighted) per-term values plus gradients of the weighted total."""

    total: float
    per_term: dict[str, float]
    gradients: dict[str, np.ndarray]
    weights: ObjectiveWeights
    flags: tuple[str, ...] = ()

    def weighted_sum(self) -> float:
        return self.weights.combine(self.per_term)


@dataclass
class PoseTensors:
    """In-graph pose quantities in API units (cm, degrees for revolute motion).

    Callers own the leaves these derive from; the energy terms only consume
    this container, so the fit loop and the public ops can parameterize
    rotations however they need without re-deriving charts.
    """

    translation_cm: torch.Tensor  # (3,)
    rotation: torch.Tensor  # (3, 3)
    size_cm: torch.Tensor  # (3,) as (width, length, height)
    part_motion: torch.Tensor  # (T,) degrees or cm
    contact_rotation: torch.Tensor  # (3, 3)


class _Leaves:
    """Torch parameter leaves in API units, built from ObjectParams."""

    def __init__(self, params: ObjectParams, alignment: ContactAlignment):
        self.translation = K.as_tensor(params.translation_cm).requires_grad_(True)
        self.rotvec = K.as_tensor(matrix_to_rotvec(params.rotation)).requires_grad_(True)
        self.size = K.as_tensor(params.size_cm).requires_grad_(True)
        self.part_motion = K.as_tensor(params.part_motion).requires_grad_(True)
        self.contact_rotvec = K.as_tensor(matrix_to_rotvec(alignment.rotation)).requires_grad_(True)

    def all(self):
        return (self.translation, self.rotvec, self.size, self.part_motion, self.contact_rotvec)

    def pose_tensors(self) -> PoseTensors:
        return PoseTensors(
            translation_cm=self.translation,
            rotation=K.rotvec_to_matrix(self.rotvec),
            size_cm=self.size,
            part_motion=self.part_motion,
            contact_rotation=K.rotvec_to_matrix(self.contact_rotvec),
        )

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for key, leaf in zip(GRAD_KEYS, self.all()):
            out[key] = np.zeros(leaf.shape) if leaf.grad is None else leaf.grad.numpy().copy()
        return out


class EnergyContext:
    """Per-video constants shared across energy evaluations.

    Optional evidence pieces may be absent; a term that needs a missing piece
    raises at evaluation time.
    """

    def __init__(
        self,
        model: ArticulatedModel,
        cam: CameraIntrinsics,
        settings: SoftRasterSettings,
        num_frames: int,
        window: tuple[int, int] | None = None,
        gt_masks: list[SilhouetteImage] | None = None,
        evidence: HumanEvidence | None = None,
        placed: PlacedHuman | None = None,
    ):
        self.model = model
        self.cam = cam
        self.settings = settings
        self.num_frames = int(num_frames)
        self.window = window
        self.flags: list[str] = []
        self.gt = None
        self.gt_centroids = None
        self.directions = None
        self.root_z = None
        self.human_value = 0.0
        self.hand_trajs: dict[str, torch.Tensor] = {}

        if gt_masks is not None:
            self._ingest_masks(gt_masks)
        if evidence is not None and placed is not None:
            self._ingest_human(evidence, placed)
        if self.window is not None:
            lo, hi = int(self.window[0]), int(self.window[1])
            if not 0 <= lo <= hi < self.num_frames:
                raise InvalidInputError(f"window {self.window} outside sequence of {self.num_frames}")
            self.window = (lo, hi)

    def _ingest_masks(self, gt_masks):
        if len(gt_masks) != self.num_frames:
            raise InvalidInputError(f"expected {self.num_frames} masks, got {len(gt_masks)}")
        for m in gt_masks:
            if m.shape != (self.cam.height, self.cam.width):
                raise InvalidInputError(
                    f"mask resolution {m.shape} != camera image {(self.cam.height, self.cam.width)}"
                )
        self.gt = K.as_tensor(np.stack([m.values for m in gt_masks]))
        cents, valid = [], []
        for t, m in enumerate(gt_masks):
            mass = float(m.values.sum())
            if mass > 0:
                ys, xs = np.mgrid[0 : m.shape[0], 0 : m.shape[1]]
                cents.append([(m.values * xs).sum() / mass, (m.values * ys).sum() / mass])
                valid.append(True)
            else:
                cents.append([0.0, 0.0])
                valid.append(False)
                self.flags.append(f"empty ground-truth mask in frame {t}; center term skips it")
                log.warning("empty ground-truth mask in frame %d; center term skips it", t)
        self.gt_centroids = (K.as_tensor(np.array(cents)), np.array(valid))

    def _ingest_human(self, evidence: HumanEvidence, placed: PlacedHuman):
        if self.window is None:
            self.window = evidence.interaction_window
        frames = range(int(self.window[0]), int(self.window[1]) + 1)
        df, dg, roots = [], [], []
        for t in frames:
            f = evidence.frames[t]
            df.append(facing_direction(f))
            dg.append(ground_normal(f))
            lh = placed.world_keypoint(f, t, "leftHip")
            rh = placed.world_keypoint(f, t, "rightHip")
            roots.append((lh[2] + rh[2]) / 2.0)
        self.directions = (K.as_tensor(np.stack(df)), K.as_tensor(np.stack(dg)))
        self.root_z = K.as_tensor(np.array(roots))
        for hand in ("left", "right"):
            try:
                self.hand_trajs[hand] = K.as_tensor(hand_trajectory(evidence, placed, hand))
            except Exception as exc:  # one palm may be unavailable
                self.flags.append(f"{hand} hand trajectory unavailable: {exc}")
        self.human_value = human_fit_energy(evidence, placed, self.cam)[0]

    # ------------------------------------------------------------------ pose

    def pose(self, pt: PoseTensors, active_part: int, frames=None) -> torch.Tensor:
        """World vertices (T, V, 3) in cm for the selected frames."""
        t = self.model.tensors()
        sel = list(range(self.num_frames)) if frames is None else list(frames)
        cols = []
        for p in range(self.model.num_parts):
            if p == active_part:
                kind = self.model.parts[p].joint.kind
                theta = pt.part_motion[sel]
                cols.append(theta * (np.pi / 180.0) if kind == "revolute" else theta)
            else:
                cols.append(torch.zeros(len(sel), dtype=K.DTYPE))
        motion = (
            torch.stack(cols, dim=1) if cols else torch.zeros((len(sel), 0), dtype=K.DTYPE)
        )
        size_xyz = torch.stack([pt.size_cm[0], pt.size_cm[2], pt.size_cm[1]])
        return K.pose_vertices(
            t["verts"], t["slices"], t["kinds"], t["axes"], t["origins"],
            pt.translation_cm, pt.rotation, size_xyz, motion,
        )

    # ----------------------------------------------------------------- terms

    def term_values(
        self,
        pt: PoseTensors,
        active_part: int,
        needed: set[str],
        hand: str | None = None,
        contact_vertex: int | None = None,
    ) -> dict[str, torch.Tensor]:
        """Raw term tensors for the requested keys."""
        terms: dict[str, torch.Tensor] = {}
        active_part = check_index(active_part, max(self.model.num_parts, 1), "active part")

        coverage = None
        if needed & {"mask", "center"}:
            if self.gt is None:
                raise InvalidInputError("mask/center terms require ground-truth masks")
            world = self.pose(pt, active_part)
            coverage = render_coverage_tensor(
                world, self.model.tensors()["faces"], self.cam, self.settings
            )

        if "mask" in needed:
            terms["mask"] = ((coverage - self.gt) ** 2).sum(dim=(1, 2)).mean()

        if "human" in needed:
            terms["human"] = torch.tensor(self.human_value, dtype=K.DTYPE)

        if "orientation" in needed:
            if self.directions is None:
                raise InvalidInputError("orientation term requires human evidence")
            front = pt.rotation @ torch.tensor([0.0, 0.0, -1.0], dtype=K.DTYPE)
            up = pt.rotation @ torch.tensor([0.0, 1.0, 0.0], dtype=K.DTYPE)
            df, dg = self.directions
            terms["orientation"] = ((1.0 - df @ front) + (1.0 - dg @ up)).sum()

        if "contact" in needed:
            if hand is None or contact_vertex is None:
                raise InvalidInputError("contact term requires a hand and a contact vertex")
            if hand not in self.hand_trajs:
                raise InvalidInputError(f"no {hand}-hand trajectory available")
            lo, hi = self.window
            if hi - lo + 1 < 2:
                raise InvalidInputError("contact term needs a window of at least 2 frames")
            frames = list(range(lo, hi + 1))
            gidx = self.model.contact_global_index(active_part, contact_vertex)
            curve = self.pose(pt, active_part, frames)[:, gidx, :]
            rotated = curve @ pt.contact_rotation.T
            hand_curve = self.hand_trajs[hand]
            offset = hand_curve[0] - rotated[0]
            terms["contact"] = ((rotated + offset - hand_curve) ** 2).sum()

        if "center" in needed:
            cents, valid = self.gt_centroids
            soft = K.soft_centroid(coverage)
            keep = torch.tensor(valid, dtype=torch.bool)
            if keep.any():
                diff = soft[keep] - cents[keep]
                terms["center"] = (diff**2).sum(dim=1).mean()
            else:
                terms["center"] = torch.tensor(0.0, dtype=K.DTYPE)

        if "limit" in needed:
            lo_lim, hi_lim = self.model.parts[active_part].joint.limits if self.model.num_parts else (0.0, 0.0)
            theta = pt.part_motion
            terms["limit"] = (
                torch.clamp(theta - hi_lim, min=0.0) ** 2 + torch.clamp(lo_lim - theta, min=0.0) ** 2
            ).sum()

        if "depth" in needed:
            if self.root_z is None:
                raise InvalidInputError("depth term requires human evidence")
            terms["depth"] = ((pt.translation_cm[2] - self.root_z) ** 2).mean()

        if "tilt" in needed:
            rel = pt.rotation @ K.as_tensor(UPRIGHT_FACING).T
            roll = torch.atan2(rel[1, 0], rel[0, 0]) * (180.0 / np.pi)
            pitch = torch.atan2(rel[2, 1], rel[2, 2]) * (180.0 / np.pi)
            terms["tilt"] = roll**2 + torch.clamp(-pitch, min=0.0) ** 2

        if "smooth" in needed:
            theta = pt.part_motion
            terms["smooth"] = (
                ((theta[1:] - theta[:-1]) ** 2).sum()
                if len(theta) > 1
                else torch.tensor(0.0, dtype=K.DTYPE)
            )

        return terms


def _finish(leaves: _Leaves, total: torch.Tensor, terms, weights, flags) -> EnergyReport:
    if total.requires_grad:
        total.backward()
    per_term = {k: float(v.detach()) for k, v in terms.items()}
    for k in TERM_KEYS:
        per_term.setdefault(k, 0.0)
    grads = leaves.gradients()
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise InvalidInputError(f"non-finite gradient for {k}")
    return EnergyReport(float(total.detach()), per_term, grads, weights, tuple(flags))


def total_energy(
    model: ArticulatedModel,
    params: ObjectParams,
    cam: CameraIntrinsics,
    settings: SoftRasterSettings,
    gt_masks: list[SilhouetteImage],
    evidence: HumanEvidence,
    placed: PlacedHuman,
    hand: str,
    contact_vertex: int,
    alignment: ContactAlignment,
    weights: ObjectiveWeights,
    window: tuple[int, int] | None = None,
) -> EnergyReport:
    """Weighted four-term objective with gradients for all parameters."""
    ctx = EnergyContext(
        model, cam, settings, params.num_frames,
        window=window, gt_masks=gt_masks, evidence=evidence, placed=placed,
    )
    return evaluate_total(ctx, params, alignment, weights, hand, contact_vertex)


def evaluate_total(
    ctx: EnergyContext,
    params: ObjectParams,
    alignment: ContactAlignment,
    weights: ObjectiveWeights,
    hand: str | None,
    contact_vertex: int | None,
) -> EnergyReport:
    """Total energy against a prebuilt context (the fitting hot path)."""
    if params.num_frames != ctx.num_frames:
        raise InvalidInputError("params frame count does not match context")
    leaves = _Leaves(params, alignment)
    needed = {k for k in TERM_KEYS if weights.effective(k) > 0.0}
    terms = ctx.term_values(leaves.pose_tensors(), params.active_part, needed, hand, contact_vertex)
    total = sum(
        (weights.effective(k) * v for k, v in terms.items()),
        start=torch.tensor(0.0, dtype=K.DTYPE),
    )
    return _finish(leaves, total, terms, weights, ctx.flags)


def mask_energy(
    model: ArticulatedModel,
    params: ObjectParams,
    cam: CameraIntrinsics,
    settings: SoftRasterSettings,
    gt_masks: list[SilhouetteImage],
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-over-frames sum of squared coverage differences and its gradients."""
    ctx = EnergyContext(model, cam, settings, params.num_frames, gt_masks=gt_masks)
    leaves = _Leaves(params, ContactAlignment.identity())
    terms = ctx.term_values(leaves.pose_tensors(), params.active_part, {"mask"})
    report = _finish(leaves, terms["mask"], terms, ObjectiveWeights(), ctx.flags)
    return report.per_term["mask"], report.gradients


def orientation_energy(
    model: ArticulatedModel,
    params: ObjectParams,
    directions: list[tuple[np.ndarray, np.ndarray]],
    window: tuple[int, int],
) -> tuple[float, np.ndarray]:
    """Front/up misalignment against per-frame facing and ground directions.

    ``directions`` holds one (facing, ground-normal) pair per sequence frame;
    only the window's entries contribute. Returns the gradient w.r.t. the
    rotation vector.
    """
    lo, hi = int(window[0]), int(window[1])
    if not 0 <= lo <= hi < len(directions):
        raise InvalidInputError(f"window {window} outside direction sequence")
    leaves = _Leaves(params, ContactAlignment.identity())
    df = np.stack([np.asarray(directions[t][0], dtype=np.float64) for t in range(lo, hi + 1)])
    dg = np.stack([np.asarray(directions[t][1], dtype=np.float64) for t in range(lo, hi + 1)])
    norms = np.linalg.norm(df, axis=1), np.linalg.norm(dg, axis=1)
    if min(norms[0].min(), norms[1].min()) < 1e-12:
        raise InvalidInputError("zero-length direction vector")
    df_t, dg_t = K.as_tensor(df / norms[0][:, None]), K.as_tensor(dg / norms[1][:, None])
    rot = K.rotvec_to_matrix(leaves.rotvec)
    front = rot @ torch.tensor([0.0, 0.0, -1.0], dtype=K.DTYPE)
    up = rot @ torch.tensor([0.0, 1.0, 0.0], dtype=K.DTYPE)
    value = ((1.0 - df_t @ front) + (1.0 - dg_t @ up)).sum()
    value.backward()
    return float(value.detach()), leaves.rotvec.grad.numpy().copy()


def contact_energy(
    model: ArticulatedModel,
    params: ObjectParams,
    hand_traj_cm: np.ndarray,
    contact_vertex: int,
    alignment: ContactAlignment,
    window: tuple[int, int],
) -> tuple[float, dict[str, np.ndarray]]:
    """Pose-invariant curve match between the contact vertex and the hand.

    The curve translation is recomputed from the first window frame on every
    evaluation, so the first residual is identically zero.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi - lo + 1 < 2:
        raise InvalidInputError("contact term needs a window of at least 2 frames")
    hand_traj_cm = np.asarray(hand_traj_cm, dtype=np.float64)
    if hand_traj_cm.shape != (hi - lo + 1, 3):
        raise InvalidInputError(
            f"hand trajectory must have shape ({hi - lo + 1}, 3), got {hand_traj_cm.shape}"
        )
    part = model.parts[params.active_part]
    if contact_vertex not in part.contact_candidates:
        raise InvalidInputError(
            f"vertex {contact_vertex} is not a contact candidate of part {params.active_part}"
        )
    # The contact term never projects; a placeholder camera satisfies the context.
    dummy_cam = CameraIntrinsics(1.0, np.array([0.5, 0.5]), (1, 1))
    ctx = EnergyContext(model, dummy_cam, SoftRasterSettings(), params.num_frames, window=(lo, hi))
    ctx.hand_trajs["given"] = K.as_tensor(hand_traj_cm)
    leaves = _Leaves(params, alignment)
    terms = ctx.term_values(leaves.pose_tensors(), params.active_part, {"contact"}, "given", contact_vertex)
    report = _finish(leaves, terms["contact"], terms, ObjectiveWeights(), ctx.flags)
    return report.per_term["contact"], report.gradients


def regularizer_energy(
    model: ArticulatedModel,
    params: ObjectParams,
    cam: CameraIntrinsics,
    settings: SoftRasterSettings,
    gt_masks: list[SilhouetteImage],
    placed: PlacedHuman,
    evidence: HumanEvidence,
    window: tuple[int, int] | None = None,
    weights: ObjectiveWeights | None = None,
) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Weighted sum of the five regularizers; also returns each raw value."""
    weights = weights or ObjectiveWeights()
    ctx = EnergyContext(
        model, cam, settings, params.num_frames,
        window=window, gt_masks=gt_masks, evidence=evidence, placed=placed,
    )
    leaves = _Leaves(params, ContactAlignment.identity())
    needed = {k for k in ("center", "limit", "depth", "tilt", "smooth") if getattr(weights, k) > 0}
    terms = ctx.term_values(leaves.pose_tensors(), params.active_part, needed)
    total = sum(
        (getattr(weights, k) * v for k, v in terms.items()),
        start=torch.tensor(0.0, dtype=K.DTYPE),
    )
    report = _finish(leaves, total, terms, weights, ctx.flags)
    raw = {k: report.per_term[k] for k in ("center", "limit", "depth", "tilt", "smooth")}
    return float(report.total), report.gradients, raw
