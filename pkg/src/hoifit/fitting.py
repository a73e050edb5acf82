"""Adam-based minimization of the total energy and the candidate grid search.

The optimizer's internal parameter vector uses meters and radians so the fixed
learning-rate schedule can traverse realistic pose changes; the public surface
stays in cm and degrees. Layout: [translation(3), rotation vector(3),
size(3), part motion(T), contact rotation vector(3)].
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .articulated import ArticulatedModel, ObjectParams, size_to_xyz
from .camera import CameraIntrinsics, back_project
from .energy import ContactAlignment, EnergyContext, EnergyReport, ObjectiveWeights, evaluate_total
from .errors import EmptyMaskError, FitAbortedError, FitFailedError, InvalidInputError
from .human import HumanEvidence, PlacedHuman, solve_placement
from .rendering import SilhouetteImage, SoftRasterSettings
from .so3 import UPRIGHT_FACING, matrix_to_rotvec, rotvec_to_matrix, upright_euler_to_matrix
from .validation import check_index

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 200


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam with a two-stage learning-rate schedule."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_initial: float = 0.05
    lr_final: float = 0.005
    lr_switch_step: int = 150

    @classmethod
    def zeros(cls, size: int, **kwargs) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kwargs)

    def learning_rate(self, step: int) -> float:
        return self.lr_initial if step <= self.lr_switch_step else self.lr_final


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One update; returns the new state and parameters (inputs untouched)."""
    if params.shape != state.first_moment.shape or grad.shape != params.shape:
        raise InvalidInputError("parameter/gradient/moment shapes disagree")
    if not np.isfinite(grad).all():
        raise FitAbortedError(f"non-finite gradient entries at {np.nonzero(~np.isfinite(grad))[0].tolist()}")
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    lr = state.learning_rate(step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, first_moment=m, second_moment=v, step_count=step), new_params


@dataclass(frozen=True)
class Candidate:
    """One grid cell of the search: model x active part x hand x contact vertex."""

    model_id: str
    hand: str
    contact_vertex: int
    active_part: int = 0

    def label(self) -> str:
        return f"{self.model_id}/part{self.active_part}/{self.hand}/v{self.contact_vertex}"


@dataclass(frozen=True)
class CandidateResult:
    candidate: Candidate
    params: ObjectParams | None
    alignment: ContactAlignment | None
    trace: tuple[dict, ...]
    final_report: EnergyReport | None
    aborted: str | None = None

    @property
    def final_total(self) -> float:
        return np.inf if self.final_report is None else self.final_report.total


@dataclass(frozen=True)
class FitResult:
    candidates: tuple[CandidateResult, ...]
    best_index: int
    config: dict = field(default_factory=dict)

    @property
    def best(self) -> CandidateResult:
        return self.candidates[self.best_index]


class _Vector:
    """Flat optimizer vector <-> ObjectParams/alignment.

    Adam's per-coordinate normalization makes the unit choice the effective
    step size: with the fixed 0.05/0.005 schedule, meters for lengths and
    radians for angles give hot steps of 5 cm / 2.9 degrees (enough travel to
    cross realistic init error) and final-phase steps of 0.5 cm / 0.29 degrees
    for sub-cm, sub-degree resolution.
    """

    LENGTH_UNIT_CM = 100.0

    def __init__(self, model: ArticulatedModel, active_part: int, num_frames: int):
        self.num_frames = num_frames
        self.active_part = active_part
        kind = model.parts[active_part].joint.kind if model.num_parts else "prismatic"
        self.revolute = kind == "revolute"

    def pack(self, params: ObjectParams, alignment: ContactAlignment) -> np.ndarray:
        u = self.LENGTH_UNIT_CM
        theta = np.deg2rad(params.part_motion) if self.revolute else params.part_motion / u
        return np.concatenate(
            [
                params.translation_cm / u,
                matrix_to_rotvec(params.rotation),
                params.size_cm / u,
                theta,
                matrix_to_rotvec(alignment.rotation),
            ]
        )

    def unpack(self, vec: np.ndarray) -> tuple[ObjectParams, ContactAlignment]:
        t = self.num_frames
        u = self.LENGTH_UNIT_CM
        motion = np.rad2deg(vec[9 : 9 + t]) if self.revolute else vec[9 : 9 + t] * u
        size_cm = np.maximum(vec[6:9] * u, 0.5)  # keep the size physical
        params = ObjectParams(
            translation_cm=vec[0:3] * u,
            rotation=rotvec_to_matrix(vec[3:6]),
            size_cm=size_cm,
            part_motion=motion,
            active_part=self.active_part,
        )
        return params, ContactAlignment(rotvec_to_matrix(vec[9 + t :]))

    def pose_tensors(self, vec_leaf):
        """Derive API-unit pose tensors from the optimizer leaf, in-graph.

        Differentiating the leaf itself keeps the rotation chart fixed across
        iterations; re-deriving a rotation vector from the matrix each step
        would branch-flip near 180 degrees and scramble Adam's moments.
        """
        import torch

        from . import _kernels as K
        from .energy import PoseTensors

        t = self.num_frames
        u = self.LENGTH_UNIT_CM
        theta = vec_leaf[9 : 9 + t]
        return PoseTensors(
            translation_cm=vec_leaf[0:3] * u,
            rotation=K.rotvec_to_matrix(vec_leaf[3:6]),
            size_cm=torch.clamp(vec_leaf[6:9] * u, min=0.5),
            part_motion=theta * (180.0 / np.pi) if self.revolute else theta * u,
            contact_rotation=K.rotvec_to_matrix(vec_leaf[9 + t :]),
        )


def initialize_params(
    model: ArticulatedModel,
    active_part: int,
    cam: CameraIntrinsics,
    gt_masks: list[SilhouetteImage],
    evidence: HumanEvidence | None = None,
) -> ObjectParams:
    """Deterministic heuristic start.

    Depth comes from the pinhole size/extent relation: each frame's mask
    bounding box is compared against the nominal physical width/height,
    taking the most-closed frame (articulation only widens a silhouette) and
    the larger of the two per-axis estimates (yaw only widens a projection).
    Image position back-projects the mean mask centroid. Orientation starts
    upright; when human evidence is given, the initial yaw points the object
    front against the median facing direction. Motion starts at the limit
    midpoint.
    """
    cents, widths, heights = [], [], []
    for m in gt_masks:
        mass = float(m.values.sum())
        if mass > 0:
            ys, xs = np.mgrid[0 : m.shape[0], 0 : m.shape[1]]
            cents.append([(m.values * xs).sum() / mass, (m.values * ys).sum() / mass])
            on_y, on_x = np.nonzero(m.values > 0)
            widths.append(on_x.max() - on_x.min() + 1.0)
            heights.append(on_y.max() - on_y.min() + 1.0)
    if not cents:
        raise EmptyMaskError("every ground-truth mask is empty; cannot initialize")
    nominal = (
        model.nominal_size_cm if model.nominal_size_cm is not None else np.array([60.0, 60.0, 60.0])
    )
    # Physical extents: the canonical box need not span the unit cube.
    verts = model.combined_mesh().vertices
    ext = verts.max(axis=0) - verts.min(axis=0)  # canonical (x, y, z)
    phys_w = float(nominal[0]) * float(ext[0])
    phys_h = float(nominal[2]) * float(ext[1])
    depth_from_w = cam.focal_px * phys_w / float(np.min(widths))
    depth_from_h = cam.focal_px * phys_h / float(np.min(heights))
    depth = max(depth_from_w, depth_from_h)
    translation = back_project(np.mean(cents, axis=0), depth, cam)

    rotation = UPRIGHT_FACING.copy()
    if evidence is not None:
        yaw = _yaw_from_facing(evidence)
        if yaw is not None:
            rotation = upright_euler_to_matrix(0.0, yaw, 0.0)

    if model.num_parts:
        active_part = check_index(active_part, model.num_parts, "active part")
        mid = model.parts[active_part].joint.mid_motion
    else:
        mid = 0.0
    return ObjectParams(
        translation_cm=translation,
        rotation=rotation,
        size_cm=np.asarray(nominal, dtype=np.float64).copy(),
        part_motion=np.full(len(gt_masks), mid),
        active_part=active_part,
    )


def motion_profile_from_hand(
    model: ArticulatedModel,
    active_part: int,
    contact_vertex: int,
    hand_traj_cm: np.ndarray,
    window: tuple[int, int],
    num_frames: int,
    size_cm: np.ndarray,
) -> np.ndarray:
    """Per-frame motion seed from the hand's displacement.

    The hand is assumed to ride the contact vertex: chord lengths from the
    first window frame convert to joint angles through the vertex's radius
    about the scaled hinge (revolute) or directly to offsets (prismatic).
    The profile starts just above the lower limit and holds flat outside the
    interaction window.
    """
    part = model.parts[active_part]
    scale_xyz = size_to_xyz(size_cm)
    v = part.mesh.vertices[contact_vertex] * scale_xyz
    lo, hi = part.joint.limits
    base = lo + 0.05 * (hi - lo)
    chords = np.linalg.norm(hand_traj_cm - hand_traj_cm[0], axis=1)
    if part.joint.kind == "revolute":
        axis = part.joint.axis * scale_xyz
        axis = axis / np.linalg.norm(axis)
        origin = part.joint.origin * scale_xyz
        rel = v - origin
        radius = float(np.linalg.norm(rel - (rel @ axis) * axis))
        if radius < 1e-6:
            delta = np.zeros_like(chords)
        else:
            delta = np.rad2deg(2.0 * np.arcsin(np.clip(chords / (2.0 * radius), 0.0, 1.0)))
    else:
        delta = chords
    delta = np.minimum(delta, hi - base)  # stay within limits
    motion = np.empty(num_frames)
    wlo, whi = window
    motion[: wlo + 1] = base
    motion[wlo : whi + 1] = base + delta
    motion[whi:] = base + delta[-1]
    return motion


def _mask_extents_px(gt_masks: list[SilhouetteImage]) -> tuple[float, float]:
    """Most-closed-frame bounding-box width and height in pixels."""
    widths, heights = [], []
    for m in gt_masks:
        if float(m.values.sum()) > 0:
            on_y, on_x = np.nonzero(m.values > 0)
            widths.append(on_x.max() - on_x.min() + 1.0)
            heights.append(on_y.max() - on_y.min() + 1.0)
    if not widths:
        raise EmptyMaskError("every ground-truth mask is empty")
    return float(np.min(widths)), float(np.min(heights))


def _bbox_wh(values: np.ndarray) -> tuple[float, float] | None:
    on_y, on_x = np.nonzero(values > 0.5)
    if on_x.size == 0:
        return None
    return float(on_x.max() - on_x.min() + 1.0), float(on_y.max() - on_y.min() + 1.0)


def _size_from_render(
    model: ArticulatedModel,
    cam: CameraIntrinsics,
    gt_masks: list[SilhouetteImage],
    probe: ObjectParams,
    nominal: np.ndarray,
) -> np.ndarray:
    """Rescale size by the per-frame ratio of observed to rendered extents.

    Rendering the probe configuration folds articulation and yaw into the
    comparison, so the ratio is a direct multiplicative size correction.
    Length follows the width correction (depth extent is barely observable).
    """
    from .articulated import pose_mesh
    from .rendering import render_silhouette

    ratios_w, ratios_h = [], []
    for t, m in enumerate(gt_masks):
        obs = _bbox_wh(m.values)
        if obs is None:
            continue
        rnd = _bbox_wh(render_silhouette(pose_mesh(model, probe, t), cam).values)
        if rnd is None:
            continue
        ratios_w.append(obs[0] / rnd[0])
        ratios_h.append(obs[1] / rnd[1])
    if not ratios_w:
        return probe.size_cm
    rw, rh = float(np.median(ratios_w)), float(np.median(ratios_h))
    size = probe.size_cm * np.array([rw, rw, rh])
    return np.clip(size, 0.5 * nominal, 2.0 * nominal)


def _project_to_hand_depth(
    ctx: EnergyContext, candidate: Candidate, params: ObjectParams, revolute: bool
) -> ObjectParams:
    """Project a fit onto the hand-depth anchor by a global metric rescale.

    Monocular masks leave the joint (translation, size, prismatic offset)
    scale family flat; the hand trajectory is absolute, so the ratio between
    the hand's depth and the fitted contact vertex's depth resolves it. The
    projection moves along the family, leaving the projected silhouette and
    the curve shapes essentially unchanged.
    """
    from .energy import _Leaves

    frames = list(range(ctx.window[0], ctx.window[1] + 1))
    pt = _Leaves(params, ContactAlignment.identity()).pose_tensors()
    gidx = ctx.model.contact_global_index(candidate.active_part, candidate.contact_vertex)
    contact_z = ctx.pose(pt, candidate.active_part, frames)[:, gidx, 2].detach().numpy()
    hand = ctx.hand_trajs[candidate.hand].numpy()
    if contact_z.mean() <= 1.0:
        return params
    scale = float(np.clip(hand[:, 2].mean() / contact_z.mean(), 0.7, 1.4))
    out = ObjectParams(
        translation_cm=params.translation_cm * scale,
        rotation=params.rotation,
        size_cm=params.size_cm * scale,
        part_motion=params.part_motion if revolute else params.part_motion * scale,
        active_part=params.active_part,
    )
    if not revolute:
        # The hand also anchors the prismatic offset absolutely: any mean
        # hand-to-vertex displacement along the world slide axis is a base
        # error the masks resolve only at edge precision.
        from .articulated import scale_joint, size_to_xyz

        part = ctx.model.parts[candidate.active_part]
        spec = scale_joint(part.joint, size_to_xyz(out.size_cm))
        axis_world = out.rotation @ spec.axis
        pt2 = _Leaves(out, ContactAlignment.identity()).pose_tensors()
        curve = ctx.pose(pt2, candidate.active_part, frames)[:, gidx, :].detach().numpy()
        delta = float(np.clip(np.mean((hand - curve) @ axis_world), -6.0, 6.0))
        out = ObjectParams(
            out.translation_cm, out.rotation, out.size_cm,
            out.part_motion + delta, out.active_part,
        )
        out = _polish_prismatic_body(ctx, candidate, out, axis_world)
    return out


def _mask_sse(ctx: EnergyContext, params: ObjectParams, masks: np.ndarray) -> float:
    from .articulated import pose_mesh
    from .rendering import render_silhouette

    sse = 0.0
    for t in range(params.num_frames):
        rendered = render_silhouette(pose_mesh(ctx.model, params, t), ctx.cam, ctx.settings)
        sse += float(((rendered.values - masks[t]) ** 2).sum())
    return sse


def _polish_prismatic_body(
    ctx: EnergyContext, candidate: Candidate, params: ObjectParams, axis_world: np.ndarray
) -> ObjectParams:
    """Line-search the two near-degenerate prismatic directions at full
    mask resolution.

    First the body length: growing the length by d while pulling the body
    back along its front direction keeps the front plane and the sliding
    part's world pose fixed, moving only the weakly observed rear. Then the
    body slide: shifting the translation by d while subtracting d from the
    motion leaves the part's world position unchanged. Both directions are
    flat enough that the fixed-step optimizer resolves them only at its step
    size; the exhaustive scan scores each shift exactly.
    """
    if ctx.gt is None:
        return params
    masks = ctx.gt.numpy()
    front_world = params.rotation @ np.array([0.0, 0.0, 1.0])

    best = (np.inf, params)
    for delta in np.linspace(-8.0, 8.0, 33):
        size = params.size_cm + np.array([0.0, delta, 0.0])
        if size[1] <= 1.0:
            continue
        trial = ObjectParams(
            params.translation_cm - 0.5 * delta * front_world,
            params.rotation,
            size,
            params.part_motion,
            params.active_part,
        )
        sse = _mask_sse(ctx, trial, masks)
        if sse < best[0]:
            best = (sse, trial)
    params = best[1]

    best = (np.inf, params)
    for delta in np.linspace(-3.0, 3.0, 25):
        trial = ObjectParams(
            params.translation_cm + delta * axis_world,
            params.rotation,
            params.size_cm,
            params.part_motion - delta,
            params.active_part,
        )
        sse = _mask_sse(ctx, trial, masks)
        if sse < best[0]:
            best = (sse, trial)
    return best[1]


def _rebased_depth(
    model: ArticulatedModel,
    cand: Candidate,
    translation: np.ndarray,
    rotation: np.ndarray,
    size: np.ndarray,
    motion: np.ndarray,
    hand_traj_cm: np.ndarray,
    window: tuple[int, int],
) -> np.ndarray:
    """Translation shifted along the centroid ray so the contact vertex rides
    at the hand's depth."""
    from .articulated import pose_mesh

    gidx = model.contact_global_index(cand.active_part, cand.contact_vertex)
    probe = ObjectParams(translation, rotation, size, motion, cand.active_part)
    depths = []
    for i, t in enumerate(range(window[0], window[1] + 1)):
        world = pose_mesh(model, probe, t).vertices[gidx]
        depths.append(hand_traj_cm[i][2] - world[2])
    shift = float(np.mean(depths))
    out = translation.copy()
    out[:2] *= (out[2] + shift) / out[2]
    out[2] += shift
    return out


def _anchor_init_to_hand(
    model: ArticulatedModel,
    cand: Candidate,
    init: ObjectParams,
    hand_traj_cm: np.ndarray,
    window: tuple[int, int],
    cam: CameraIntrinsics,
    gt_masks: list[SilhouetteImage],
) -> ObjectParams:
    """Per-candidate init refinement against the hand trajectory.

    The mask fixes only the size/depth ratio; the hand's absolute position is
    the one metric anchor in the evidence. Alternates a hand-derived motion
    profile, a depth shift placing the contact vertex at the hand's depth,
    and a size re-estimate at that depth.
    """

    nominal = (
        model.nominal_size_cm if model.nominal_size_cm is not None else np.array([60.0, 60.0, 60.0])
    )
    size = init.size_cm
    translation = init.translation_cm
    motion = init.part_motion
    for _ in range(2):
        motion = motion_profile_from_hand(
            model, cand.active_part, cand.contact_vertex, hand_traj_cm, window,
            len(gt_masks), size,
        )
        translation = _rebased_depth(
            model, cand, translation, init.rotation, size, motion, hand_traj_cm, window
        )
        probe = ObjectParams(translation, init.rotation, size, motion, cand.active_part)
        size = _size_from_render(model, cam, gt_masks, probe, nominal)
    return ObjectParams(translation, init.rotation, size, motion, cand.active_part)


def _yaw_from_facing(evidence: HumanEvidence) -> float | None:
    """Initial yaw pointing the object front opposite the human facing."""
    from .human import facing_direction

    facings = []
    for t in evidence.window_range():
        try:
            facings.append(facing_direction(evidence.frames[t]))
        except InvalidInputError:
            continue
    if not facings:
        return None
    front = -np.median(np.stack(facings), axis=0)  # object front opposes facing
    if np.hypot(front[0], front[2]) < 1e-6:
        return None
    # With R = Rz(0) Ry(yaw) Rx(0) UPRIGHT_FACING, front_world = (-sin yaw, 0, -cos yaw).
    return float(np.rad2deg(np.arctan2(-front[0], -front[2])))


def _evaluate_vec(
    ctx: EnergyContext,
    vec: np.ndarray,
    vec_map: _Vector,
    weights: ObjectiveWeights,
    hand: str | None,
    contact_vertex: int | None,
) -> tuple[float, dict[str, float], np.ndarray]:
    """Total, raw per-term values, and the gradient in optimizer units."""
    import torch

    from . import _kernels as K
    from .energy import TERM_KEYS

    leaf = K.as_tensor(vec).requires_grad_(True)
    pt = vec_map.pose_tensors(leaf)
    needed = {k for k in TERM_KEYS if weights.effective(k) > 0.0}
    terms = ctx.term_values(pt, vec_map.active_part, needed, hand, contact_vertex)
    total = sum(
        (weights.effective(k) * v for k, v in terms.items()),
        start=torch.tensor(0.0, dtype=K.DTYPE),
    )
    if total.requires_grad:
        total.backward()
    grad = np.zeros_like(vec) if leaf.grad is None else leaf.grad.numpy()
    per_term = {k: float(v.detach()) for k, v in terms.items()}
    for k in TERM_KEYS:
        per_term.setdefault(k, 0.0)
    return float(total.detach()), per_term, grad


def fit_candidate(
    ctx: EnergyContext,
    candidate: Candidate,
    weights: ObjectiveWeights,
    init: ObjectParams,
    iterations: int = DEFAULT_ITERATIONS,
) -> CandidateResult:
    """Run the full Adam schedule for one candidate.

    The axis-angle rotation parameterization keeps the rotation exactly
    orthonormal at every step, so no separate renormalization is needed.
    """
    vec_map = _Vector(ctx.model, candidate.active_part, init.num_frames)
    vec = vec_map.pack(init, ContactAlignment.identity())
    adam = AdamState.zeros(len(vec))
    trace = []
    hand = candidate.hand if weights.hoi > 0 else None
    contact = candidate.contact_vertex if weights.hoi > 0 else None
    best_vec, best_total = vec, np.inf
    try:
        for _ in range(iterations):
            total, per_term, grad = _evaluate_vec(ctx, vec, vec_map, weights, hand, contact)
            trace.append({"total": total, "per_term": per_term})
            # Constant-rate Adam phases oscillate around minima; keep the best
            # iterate seen rather than whatever phase the loop ends on.
            if total < best_total:
                best_vec, best_total = vec, total
            adam, vec = adam_step(adam, vec, grad)
        final_total, _, _ = _evaluate_vec(ctx, vec, vec_map, weights, hand, contact)
        if final_total < best_total:
            best_vec, best_total = vec, final_total
        params, alignment = vec_map.unpack(best_vec)
        if hand is not None and hand in ctx.hand_trajs:
            params = _project_to_hand_depth(ctx, candidate, params, vec_map.revolute)
        final = evaluate_total(ctx, params, alignment, weights, hand, contact)
    except (FitAbortedError, InvalidInputError) as exc:
        log.warning("candidate %s aborted: %s", candidate.label(), exc)
        return CandidateResult(candidate, None, None, tuple(trace), None, aborted=str(exc))
    if weights.hoi > 0 and hand in ctx.hand_trajs:
        # Derived curve translation for reporting.
        from .energy import _Leaves

        world = ctx.pose(
            _Leaves(params, alignment).pose_tensors(), candidate.active_part, [ctx.window[0]]
        )
        gidx = ctx.model.contact_global_index(candidate.active_part, candidate.contact_vertex)
        v0 = world[0, gidx].detach().numpy()
        h0 = ctx.hand_trajs[hand][0].numpy()
        alignment = ContactAlignment(alignment.rotation, h0 - alignment.rotation @ v0)
    return CandidateResult(candidate, params, alignment, tuple(trace), final)


def enumerate_candidates(models: list[ArticulatedModel], hands: list[str], hoi_active: bool) -> list[Candidate]:
    """The search grid; collapses to one cell per (model, part) when the
    interaction terms are off, since hand and vertex then cannot change the
    objective."""
    out = []
    for model in models:
        parts = range(model.num_parts) if model.num_parts else []
        for p in parts:
            candidates = model.parts[p].contact_candidates or (0,)
            if not hoi_active:
                out.append(Candidate(model.model_id, hands[0] if hands else "left", candidates[0], p))
                continue
            for hand in hands:
                for cv in candidates:
                    out.append(Candidate(model.model_id, hand, cv, p))
    return out


def fit_video(
    models: list[ArticulatedModel],
    cam: CameraIntrinsics,
    gt_masks: list[SilhouetteImage],
    evidence: HumanEvidence,
    weights: ObjectiveWeights = ObjectiveWeights(),
    settings: SoftRasterSettings = SoftRasterSettings(),
    iterations: int = DEFAULT_ITERATIONS,
    jobs: int = 1,
    config: dict | None = None,
    placed: PlacedHuman | None = None,
) -> FitResult:
    """Fit every candidate and select the lowest final total.

    Candidates are independent; results are identical for any ``jobs`` value.
    """
    if not models:
        raise InvalidInputError("need at least one model to fit")
    if placed is None:
        placed = solve_placement(evidence, cam)
    contexts = {
        m.model_id: EnergyContext(
            m, cam, settings, len(gt_masks), gt_masks=gt_masks, evidence=evidence, placed=placed
        )
        for m in models
    }
    by_id = {m.model_id: m for m in models}
    hoi_active = weights.hoi > 0
    hands = [h for h in ("left", "right") if h in next(iter(contexts.values())).hand_trajs]
    if hoi_active and not hands:
        raise InvalidInputError("interaction terms enabled but no palm trajectory is available")
    candidates = enumerate_candidates(models, hands or ["left"], hoi_active)

    def run(cand: Candidate) -> CandidateResult:
        ctx = contexts[cand.model_id]
        model = by_id[cand.model_id]
        # Without interaction terms the fit must not lean on human evidence,
        # so the ablation comparison stays object-only.
        init = initialize_params(
            model, cand.active_part, cam, gt_masks, evidence if hoi_active else None
        )
        if hoi_active and cand.hand in ctx.hand_trajs:
            init = _anchor_init_to_hand(
                model, cand, init, ctx.hand_trajs[cand.hand].numpy(), ctx.window, cam, gt_masks
            )
        return fit_candidate(ctx, cand, weights, init, iterations)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, candidates))
    else:
        results = [run(c) for c in candidates]

    finals = [r.final_total for r in results]
    if not np.isfinite(finals).any():
        raise FitFailedError({r.candidate.label(): r.aborted or "?" for r in results})
    best = int(np.argmin(finals))
    return FitResult(tuple(results), best, dict(config or {}))
