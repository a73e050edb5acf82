"""Synthetic render-and-recover scenes with procedurally built models.

Three bundled primitives cover both joint kinds: a cabinet with a hinged door,
a chest with a sliding drawer, and a two-panel laptop hinge (plus one
distractor variant of each for retrieval tests). Scenes are deterministic per
seed (numpy PCG64); generated datasets use exactly the on-disk layout the
fitting CLI consumes, so synthetic and real data are interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .articulated import ArticulatedModel, JointSpec, MovablePart, ObjectParams, pose_mesh
from .camera import CameraIntrinsics
from .data import (
    frame_name,
    load_model_library,
    load_video_record,
    params_to_ground_truth,
    save_camera,
    save_evidence,
    save_ground_truth,
    save_model,
)
from .energy import ObjectiveWeights
from .errors import InvalidInputError
from .fitting import FitResult, fit_video
from .human import HumanEvidence, HumanFrame
from .meshes import TriMesh
from .metrics import EvalReport, evaluate_fit
from .rendering import SilhouetteImage, SoftRasterSettings, render_silhouette
from .so3 import upright_euler_to_matrix

SCENE_KINDS = ("door", "drawer", "laptop")


def _box(center, half, extra_vertices=()) -> TriMesh:
    """Axis-aligned box; vertex i = corners in (-,+) lexicographic x,y,z order.

    ``extra_vertices`` append face-free handle vertices (grab points for the
    contact-candidate lists) after the eight corners.
    """
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    verts = np.asarray(center, float) + signs * np.asarray(half, float)
    if len(extra_vertices):
        verts = np.concatenate([verts, np.asarray(extra_vertices, float)])
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # x-
            [4, 6, 7], [4, 7, 5],  # x+
            [0, 4, 5], [0, 5, 1],  # y-
            [2, 3, 7], [2, 7, 6],  # y+
            [0, 2, 6], [0, 6, 4],  # z-
            [1, 5, 7], [1, 7, 3],  # z+
        ]
    )
    return TriMesh(verts, faces)


def make_door_cabinet(mirrored: bool = False) -> ArticulatedModel:
    """Cabinet with a front door hinged on a vertical edge (revolute).

    The plain variant hinges on the left (-x) edge and opens outward (+z) for
    positive angles; the mirrored distractor hinges on the right.
    """
    body = _box((0.0, 0.0, -0.05), (0.5, 0.5, 0.45))
    flip = -1.0 if mirrored else 1.0
    door = _box((flip * -0.1, 0.0, 0.45), (0.4, 0.45, 0.05))
    hinge_x = flip * -0.5
    # Axis -y makes a positive angle swing the free edge toward +z (outward).
    axis = np.array([0.0, -flip, 0.0])
    joint = JointSpec("revolute", axis, np.array([hinge_x, 0.0, 0.45]), (0.0, 110.0))
    # Handle corners: the door's free vertical edge on the outer face.
    candidates = (1, 3) if mirrored else (5, 7)
    return ArticulatedModel(
        "door-cabinet-mirrored" if mirrored else "door-cabinet",
        "cabinet",
        body,
        (MovablePart(door, joint, candidates),),
        nominal_size_cm=np.array([60.0, 55.0, 90.0]),
    )


def make_drawer_chest(low: bool = False) -> ArticulatedModel:
    """Chest with a drawer sliding out along +z (prismatic)."""
    body = _box((0.0, 0.0, -0.075), (0.5, 0.5, 0.425))
    y_center = -0.25 if low else 0.25
    # A face-free handle vertex at the drawer front's center keeps the
    # contact candidate mirror-unambiguous.
    handle = [(0.0, y_center - 0.12, 0.5)]
    drawer = _box((0.0, y_center, 0.435), (0.45, 0.2, 0.065), extra_vertices=handle)
    joint = JointSpec(
        "prismatic", np.array([0.0, 0.0, 1.0]), np.array([0.0, y_center, 0.435]), (0.0, 45.0)
    )
    return ArticulatedModel(
        "drawer-chest-low" if low else "drawer-chest",
        "chest",
        body,
        (MovablePart(drawer, joint, (8,)),),
        nominal_size_cm=np.array([55.0, 50.0, 75.0]),
    )


def make_laptop_hinge(short_lid: bool = False) -> ArticulatedModel:
    """Two chunky panels sharing a hinge along the back edge (revolute).

    Canonical pose is closed (screen lying on the base); positive angles lift
    the screen's free edge upward. The distractor's lid covers only part of
    the base, which no size rescale can imitate.
    """
    base = _box((0.0, -0.15, 0.0), (0.5, 0.15, 0.42))
    lid_far = 0.0 if short_lid else 0.42
    grab = [(0.0, 0.3, lid_far)]  # free-edge center of the lid's top face
    screen = _box(
        (0.0, 0.15, (-0.42 + lid_far) / 2.0),
        (0.5, 0.15, (0.42 + lid_far) / 2.0),
        extra_vertices=grab,
    )
    joint = JointSpec(
        "revolute", np.array([-1.0, 0.0, 0.0]), np.array([0.0, 0.0, -0.42]), (0.0, 130.0)
    )
    return ArticulatedModel(
        "laptop-hinge-short" if short_lid else "laptop-hinge",
        "laptop",
        base,
        (MovablePart(screen, joint, (8,)),),
        nominal_size_cm=np.array([36.0, 30.0, 26.0]),
    )


BUILDERS = {
    "door-cabinet": make_door_cabinet,
    "door-cabinet-mirrored": lambda: make_door_cabinet(mirrored=True),
    "drawer-chest": make_drawer_chest,
    "drawer-chest-low": lambda: make_drawer_chest(low=True),
    "laptop-hinge": make_laptop_hinge,
    "laptop-hinge-short": lambda: make_laptop_hinge(short_lid=True),
}

SCENE_MODELS = {"door": "door-cabinet", "drawer": "drawer-chest", "laptop": "laptop-hinge"}
DISTRACTORS = {
    "door-cabinet": "door-cabinet-mirrored",
    "drawer-chest": "drawer-chest-low",
    "laptop-hinge": "laptop-hinge-short",
}
_BASE_DEPTH_CM = {"door": 230.0, "drawer": 125.0, "laptop": 80.0}
# Vertical drop of the object center below the optical axis: small objects are
# filmed from standing height, so the camera sees their top faces, which is
# what makes the depth extent observable at all.
_BASE_DROP_CM = {"door": 0.0, "drawer": 24.0, "laptop": 18.0}
_BASE_FOCAL_PX = {"door": 230.0, "drawer": 250.0, "laptop": 260.0}
_MOTION_RANGE = {"door": (8.0, 78.0), "drawer": (2.0, 30.0), "laptop": (25.0, 100.0)}


def build_model(model_id: str) -> ArticulatedModel:
    if model_id not in BUILDERS:
        raise InvalidInputError(f"unknown bundled model {model_id!r}; have {sorted(BUILDERS)}")
    return BUILDERS[model_id]()


@dataclass(frozen=True)
class NoiseLevels:
    mask_flip_prob: float = 0.0
    keypoint_jitter_px: float = 0.0
    hand_offset_cm: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to generate one scene; the seed fixes all randomness."""

    kind: str
    seed: int = 0
    num_frames: int = 6
    image_size: tuple[int, int] = (256, 256)
    focal_px: float | None = None  # per-kind default when None
    hand: str = "right"
    noise: NoiseLevels = field(default_factory=NoiseLevels)
    include_distractor: bool = False
    subject_height_cm: float = 170.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise InvalidInputError(f"scene kind must be one of {SCENE_KINDS}")
        if self.num_frames < 4:
            raise InvalidInputError("scenes need at least 4 frames")
        if self.hand not in ("left", "right"):
            raise InvalidInputError("hand must be left or right")

    @property
    def model_id(self) -> str:
        return SCENE_MODELS[self.kind]

    @property
    def focal(self) -> float:
        return self.focal_px if self.focal_px is not None else _BASE_FOCAL_PX[self.kind]

    @property
    def video_id(self) -> str:
        return f"{self.kind}-seed{self.seed}"

    def window(self) -> tuple[int, int]:
        return (1, self.num_frames - 2)


def _scene_ground_truth(spec: SceneSpec, model: ArticulatedModel) -> ObjectParams:
    rng = np.random.default_rng(np.random.PCG64(spec.seed * 7919 + 13))
    yaw = float(rng.uniform(12.0, 26.0) * rng.choice([-1.0, 1.0]))
    size = model.nominal_size_cm * (1.0 + rng.uniform(-0.08, 0.08, size=3))
    depth = _BASE_DEPTH_CM[spec.kind] * (1.0 + rng.uniform(-0.06, 0.06))
    lateral = rng.uniform(-14.0, 14.0)
    vertical = rng.uniform(-8.0, 8.0) + _BASE_DROP_CM[spec.kind]
    lo, hi = _MOTION_RANGE[spec.kind]
    w0, w1 = (1, spec.num_frames - 2)
    motion = np.empty(spec.num_frames)
    motion[: w0 + 1] = lo
    motion[w1:] = hi
    ramp = np.linspace(lo, hi, w1 - w0 + 1)
    motion[w0 : w1 + 1] = ramp
    limits = model.parts[0].joint.limits
    if not (limits[0] <= motion.min() and motion.max() <= limits[1]):
        raise InvalidInputError("scene motion exceeds joint limits")
    return ObjectParams(
        translation_cm=np.array([lateral, vertical, depth]),
        rotation=upright_euler_to_matrix(0.0, yaw, 0.0),
        size_cm=size,
        part_motion=motion,
        active_part=0,
    )


def _skeleton_world(
    spec: SceneSpec, gt: ObjectParams, model: ArticulatedModel, contact_world: np.ndarray
) -> list[dict[str, np.ndarray]]:
    """World-space keypoints per frame; flat feet, exact 170 cm head-to-heel."""
    up = np.array([0.0, -1.0, 0.0])  # scene up in the y-down camera frame
    front_world = gt.rotation @ np.array([0.0, 0.0, 1.0])
    f_h = front_world - (front_world @ up) * up
    f_h = f_h / np.linalg.norm(f_h)
    facing = -f_h  # the person faces the object
    right_side = np.cross(facing, up)
    right_side = right_side / np.linalg.norm(right_side)

    posed0 = pose_mesh(model, gt, 0)
    floor_y = float(posed0.vertices[:, 1].max())
    stand = gt.translation_cm + f_h * (0.5 * float(gt.size_cm.max()) + 45.0)
    ground = np.array([stand[0], floor_y, stand[2]])
    h = spec.subject_height_cm / 170.0  # proportions scale with height

    def at(u, r, f):
        return ground + up * u + right_side * r + facing * f

    frames = []
    palm_name = "rightPalm" if spec.hand == "right" else "leftPalm"
    for t in range(spec.num_frames):
        sway = right_side * (0.4 * t)  # slow drift exercises per-frame placement
        kp = {
            "headTop": at(170.0 * h, 0.0, 0.0),
            "leftShoulder": at(143.0 * h, -18.0, 0.0),
            "rightShoulder": at(143.0 * h, 18.0, 0.0),
            "leftHip": at(95.0 * h, -10.0, 0.0),
            "rightHip": at(95.0 * h, 10.0, 0.0),
            "leftAnkle": at(2.0, -9.0, 0.0),
            "rightAnkle": at(2.0, 9.0, 0.0),
            "leftToe": at(2.0, -9.0, 18.0),
            "rightToe": at(2.0, 9.0, 18.0),
            "leftHeel": at(0.0, -9.0, 0.0),
            "rightHeel": at(0.0, 9.0, 0.0),
            "leftPalm": at(88.0 * h, -26.0, 6.0),
            "rightPalm": at(88.0 * h, 26.0, 6.0),
        }
        kp = {n: v + sway for n, v in kp.items()}
        kp[palm_name] = contact_world[t].copy()
        frames.append(kp)
    return frames


def generate_scene(spec: SceneSpec, out_root) -> Path:
    """Write one video directory plus the model library; returns the video path."""
    out_root = Path(out_root)
    model = build_model(spec.model_id)
    model_ids = [spec.model_id]
    if spec.include_distractor:
        model_ids.append(DISTRACTORS[spec.model_id])
    for mid in model_ids:
        save_model(build_model(mid), out_root / "models" / mid)

    gt = _scene_ground_truth(spec, model)
    cam = CameraIntrinsics(
        spec.focal,
        np.array([spec.image_size[0] / 2.0, spec.image_size[1] / 2.0]),
        spec.image_size,
    )
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    video_dir = out_root / spec.video_id
    (video_dir / "masks").mkdir(parents=True, exist_ok=True)
    (video_dir / "frames").mkdir(parents=True, exist_ok=True)

    # Ground-truth masks: soft render thresholded at 0.5 coverage. A sharp
    # sigma keeps the 0.5 level set within a fraction of a pixel of the true
    # silhouette boundary (the probabilistic union dilates soft edges).
    mask_settings = SoftRasterSettings(sigma=4e-6, blur_radius_px=1.0)
    posed = [pose_mesh(model, gt, t) for t in range(spec.num_frames)]
    in_frustum = False
    for t, mesh in enumerate(posed):
        soft = render_silhouette(mesh, cam, mask_settings)
        binary = (soft.values >= 0.5).astype(np.float64)
        if binary.sum() > 0:
            in_frustum = True
        if spec.noise.mask_flip_prob > 0:
            flips = rng.random(binary.shape) < spec.noise.mask_flip_prob
            binary = np.where(flips, 1.0 - binary, binary)
        SilhouetteImage(binary).save_png(video_dir / "masks" / frame_name(t))
        rgb = np.clip(soft.values * 170.0 + 50.0, 0, 255).astype(np.uint8)
        Image.fromarray(np.stack([rgb] * 3, axis=-1), mode="RGB").save(
            video_dir / "frames" / frame_name(t)
        )
    if not in_frustum:
        raise InvalidInputError("object projects entirely outside the image frustum")

    # Contact vertex trajectory drives the manipulating hand.
    contact_local = model.parts[0].contact_candidates[0]
    gidx = model.contact_global_index(0, contact_local)
    contact_world = np.stack([posed[t].vertices[gidx] for t in range(spec.num_frames)])
    if spec.noise.hand_offset_cm > 0:
        contact_world = contact_world + rng.normal(0.0, spec.noise.hand_offset_cm, contact_world.shape)

    world_kps = _skeleton_world(spec, gt, model, contact_world)
    scale = 100.0  # estimator units are ~meters
    frames = []
    for t, kps in enumerate(world_kps):
        origin = (kps["leftHip"] + kps["rightHip"]) / 2.0  # x_h^t in the generator
        kp3d = {n: (v - origin) / scale for n, v in kps.items()}
        targets = {}
        for n, v in kps.items():
            uv = cam.principal_px + cam.focal_px * v[:2] / v[2]
            if spec.noise.keypoint_jitter_px > 0:
                uv = uv + rng.normal(0.0, spec.noise.keypoint_jitter_px, 2)
            targets[n] = uv
        frames.append(HumanFrame(kp3d, targets, {n: True for n in kps}))
    evidence = HumanEvidence(tuple(frames), spec.window(), spec.subject_height_cm)

    save_camera(video_dir / "camera.json", cam)
    save_evidence(video_dir / "human.json", evidence)
    save_ground_truth(
        video_dir / "gt.json", params_to_ground_truth(spec.model_id, gt, hand=spec.hand)
    )
    return video_dir


def round_trip(
    spec: SceneSpec,
    weights: ObjectiveWeights = ObjectiveWeights(),
    out_root=None,
    model_ids: list[str] | None = None,
    iterations: int = 200,
    jobs: int = 1,
    settings: SoftRasterSettings = SoftRasterSettings(),
) -> tuple[EvalReport, FitResult]:
    """generate -> fit -> evaluate against the generating parameters."""
    import tempfile

    if out_root is None:
        with tempfile.TemporaryDirectory(prefix="hoifit-synth-") as tmp:
            return round_trip(spec, weights, tmp, model_ids, iterations, jobs, settings)
    out_root = Path(out_root)
    video_dir = generate_scene(spec, out_root)
    library = load_model_library(out_root / "models")
    record = load_video_record(video_dir, library)
    wanted = model_ids or [spec.model_id]
    models = [library[m] if m in library else build_model(m) for m in wanted]
    result = fit_video(
        models,
        record.camera,
        list(record.masks),
        record.evidence,
        weights=weights,
        settings=settings,
        iterations=iterations,
        jobs=jobs,
    )
    gt = record.ground_truth
    best = result.best
    kind = build_model(gt.model_id).parts[gt.active_part].joint.kind
    report = evaluate_fit(
        best.params.rotation,
        best.params.translation_cm,
        best.params.part_motion,
        best.params.size_cm,
        gt.rotation(),
        gt.translation_cm,
        gt.part_motion,
        gt.size_cm,
        kind,
        model_pred=best.candidate.model_id,
        model_gt=gt.model_id,
    )
    return report, result
