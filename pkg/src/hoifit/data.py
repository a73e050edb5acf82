"""Dataset layout, annotation formats, and validation.

Layout: ``<root>/<video-id>/{frames/,masks/,human.json,camera.json,gt.json}``
with the model library at ``<root>/models/<model-id>/``. All JSON documents are
written canonically: sorted keys, two-space indent, floats rounded to six
significant digits, trailing newline — so save(load(x)) is byte-identical.
Angles are stored in degrees and lengths in cm everywhere on disk.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .articulated import ArticulatedModel, JointSpec, MovablePart, ObjectParams
from .camera import CameraIntrinsics
from .energy import ContactAlignment, ObjectiveWeights
from .errors import DataFormatError
from .human import HumanEvidence, HumanFrame
from .meshes import read_obj, write_obj
from .rendering import SilhouetteImage
from .so3 import matrix_to_upright_euler, upright_euler_to_matrix

log = logging.getLogger(__name__)

MASK_DIR = "masks"
FRAME_DIR = "frames"


# --------------------------------------------------------------- canonical IO


def _round_floats(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, str)) or obj is None:
        return obj
    if isinstance(obj, float):
        if not np.isfinite(obj):
            raise DataFormatError(f"non-finite value {obj!r} cannot be serialized")
        return float(f"{obj:.6g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round_floats(float(obj))
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    raise DataFormatError(f"cannot serialize value of type {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(_round_floats(obj), sort_keys=True, indent=2) + "\n"


def save_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj))


def load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataFormatError(f"missing file: {path}")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed JSON in {path}: {exc}")


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def frame_name(index: int) -> str:
    return f"{index:06d}.png"


# --------------------------------------------------------------------- camera


def save_camera(path, cam: CameraIntrinsics) -> None:
    save_json(
        path,
        {
            "focalLengthPx": cam.focal_px,
            "principalPointPx": list(cam.principal_px),
            "imageSize": list(cam.image_size),
        },
    )


def load_camera(path) -> CameraIntrinsics:
    doc = load_json(path)
    try:
        return CameraIntrinsics(
            float(doc["focalLengthPx"]),
            np.array(doc["principalPointPx"], dtype=np.float64),
            (int(doc["imageSize"][0]), int(doc["imageSize"][1])),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataFormatError(f"{path}: bad camera document ({exc})")


# --------------------------------------------------------------------- models


def save_model(model: ArticulatedModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_obj(model.base, directory / "base.obj")
    parts = []
    for i, part in enumerate(model.parts):
        mesh_name = f"part{i}.obj"
        write_obj(part.mesh, directory / mesh_name)
        parts.append(
            {
                "mesh": mesh_name,
                "joint": {
                    "kind": part.joint.kind,
                    "axis": list(part.joint.axis),
                    "origin": list(part.joint.origin),
                    "limits": list(part.joint.limits),
                },
                "contactCandidates": list(part.contact_candidates),
            }
        )
    doc = {"id": model.model_id, "category": model.category, "base": "base.obj", "parts": parts}
    if model.nominal_size_cm is not None:
        doc["nominalSizeCm"] = list(model.nominal_size_cm)
    save_json(directory / "model.json", doc)


def load_model(directory) -> ArticulatedModel:
    directory = Path(directory)
    doc = load_json(directory / "model.json")
    try:
        base = read_obj(directory / doc["base"])
        parts = []
        for p in doc["parts"]:
            joint = JointSpec(
                p["joint"]["kind"],
                np.array(p["joint"]["axis"], dtype=np.float64),
                np.array(p["joint"]["origin"], dtype=np.float64),
                (float(p["joint"]["limits"][0]), float(p["joint"]["limits"][1])),
            )
            parts.append(
                MovablePart(read_obj(directory / p["mesh"]), joint, tuple(p.get("contactCandidates", ())))
            )
        nominal = doc.get("nominalSizeCm")
        return ArticulatedModel(
            doc["id"],
            doc["category"],
            base,
            tuple(parts),
            None if nominal is None else np.array(nominal, dtype=np.float64),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataFormatError(f"{directory}/model.json: bad model document ({exc})")


def load_model_library(root) -> dict[str, ArticulatedModel]:
    root = Path(root)
    if not root.is_dir():
        raise DataFormatError(f"model library directory missing: {root}")
    models = {}
    for sub in sorted(root.iterdir()):
        if (sub / "model.json").exists():
            m = load_model(sub)
            models[m.model_id] = m
    if not models:
        raise DataFormatError(f"no models found under {root}")
    return models


# ------------------------------------------------------------- human evidence


def save_evidence(path, evidence: HumanEvidence) -> None:
    frames = []
    for f in evidence.frames:
        frames.append(
            {
                "keypoints3d": {n: list(v) for n, v in sorted(f.keypoints3d.items())},
                "targets2d": {n: list(v) for n, v in sorted(f.targets2d.items())},
                "valid": dict(sorted(f.valid.items())),
            }
        )
    save_json(
        path,
        {
            "subjectHeightCm": evidence.subject_height_cm,
            "interactionWindow": list(evidence.interaction_window),
            "frames": frames,
        },
    )


def load_evidence(path) -> HumanEvidence:
    doc = load_json(path)
    try:
        frames = []
        for f in doc["frames"]:
            frames.append(
                HumanFrame(
                    {n: np.array(v, dtype=np.float64) for n, v in f["keypoints3d"].items()},
                    {n: np.array(v, dtype=np.float64) for n, v in f.get("targets2d", {}).items()},
                    {n: bool(v) for n, v in f.get("valid", {}).items()},
                )
            )
        return HumanEvidence(
            tuple(frames),
            (int(doc["interactionWindow"][0]), int(doc["interactionWindow"][1])),
            float(doc.get("subjectHeightCm", 170.0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataFormatError(f"{path}: bad human evidence document ({exc})")


# ------------------------------------------------------------------- gt / fit


@dataclass(frozen=True)
class GroundTruth:
    """Per-video annotation: fixed pose/size, per-frame part motion."""

    model_id: str
    active_part: int
    translation_cm: np.ndarray
    euler_deg: tuple[float, float, float]  # (roll, yaw, pitch) relative to upright-facing
    size_cm: np.ndarray
    part_motion: np.ndarray
    hand: str | None = None

    def rotation(self) -> np.ndarray:
        return upright_euler_to_matrix(*self.euler_deg)

    def to_params(self) -> ObjectParams:
        return ObjectParams(
            self.translation_cm, self.rotation(), self.size_cm, self.part_motion, self.active_part
        )


def save_ground_truth(path, gt: GroundTruth) -> None:
    doc = {
        "modelId": gt.model_id,
        "activePart": gt.active_part,
        "translationCm": list(gt.translation_cm),
        "orientationEulerDeg": {
            "roll": gt.euler_deg[0],
            "yaw": gt.euler_deg[1],
            "pitch": gt.euler_deg[2],
        },
        "sizeCm": list(gt.size_cm),
        "partMotion": list(gt.part_motion),
    }
    if gt.hand is not None:
        doc["hand"] = gt.hand
    save_json(path, doc)


def load_ground_truth(path) -> GroundTruth:
    doc = load_json(path)
    try:
        euler = doc["orientationEulerDeg"]
        return GroundTruth(
            model_id=str(doc["modelId"]),
            active_part=int(doc.get("activePart", 0)),
            translation_cm=np.array(doc["translationCm"], dtype=np.float64),
            euler_deg=(float(euler["roll"]), float(euler["yaw"]), float(euler["pitch"])),
            size_cm=np.array(doc["sizeCm"], dtype=np.float64),
            part_motion=np.array(doc["partMotion"], dtype=np.float64),
            hand=doc.get("hand"),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataFormatError(f"{path}: bad ground-truth document ({exc})")


def params_to_ground_truth(model_id: str, params: ObjectParams, hand=None) -> GroundTruth:
    return GroundTruth(
        model_id=model_id,
        active_part=params.active_part,
        translation_cm=params.translation_cm,
        euler_deg=matrix_to_upright_euler(params.rotation),
        size_cm=params.size_cm,
        part_motion=params.part_motion,
        hand=hand,
    )


# --------------------------------------------------------------- video record


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    path: Path
    camera: CameraIntrinsics
    masks: tuple[SilhouetteImage, ...]
    evidence: HumanEvidence
    ground_truth: GroundTruth | None
    frame_paths: tuple[Path, ...]
    warnings: tuple[str, ...] = ()

    @property
    def num_frames(self) -> int:
        return len(self.masks)


def load_video_record(path, models: dict[str, ArticulatedModel] | None = None) -> VideoRecord:
    """Load and fully validate one video directory.

    Raises :class:`DataFormatError` naming the offending file on missing
    pieces, count mismatches, or malformed JSON. Ground-truth part motion
    outside the joint limits produces a warning, not an error.
    """
    path = Path(path)
    if not path.is_dir():
        raise DataFormatError(f"video directory missing: {path}")
    cam = load_camera(path / "camera.json")
    evidence = load_evidence(path / "human.json")
    mask_dir = path / MASK_DIR
    if not mask_dir.is_dir():
        raise DataFormatError(f"missing mask directory: {mask_dir}")
    masks = []
    for i in range(evidence.num_frames):
        mask_path = mask_dir / frame_name(i)
        if not mask_path.exists():
            raise DataFormatError(f"missing mask for frame {i}: {mask_path}")
        masks.append(SilhouetteImage.load_mask_png(mask_path))
    for m in masks:
        if m.shape != (cam.height, cam.width):
            raise DataFormatError(f"{path}: mask resolution {m.shape} != camera {cam.image_size}")
    warnings = []
    gt = None
    if (path / "gt.json").exists():
        gt = load_ground_truth(path / "gt.json")
        if len(gt.part_motion) != evidence.num_frames:
            raise DataFormatError(
                f"{path}/gt.json: {len(gt.part_motion)} motion values for {evidence.num_frames} frames"
            )
        if models and gt.model_id in models:
            model = models[gt.model_id]
            if gt.active_part < model.num_parts:
                lo, hi = model.parts[gt.active_part].joint.limits
                beyond = (gt.part_motion < lo) | (gt.part_motion > hi)
                if beyond.any():
                    msg = (
                        f"{path}/gt.json: part motion outside joint limits "
                        f"[{lo}, {hi}] in frames {np.nonzero(beyond)[0].tolist()}"
                    )
                    warnings.append(msg)
                    log.warning(msg)
    frame_dir = path / FRAME_DIR
    frame_paths = tuple(
        frame_dir / frame_name(i) for i in range(evidence.num_frames)
    ) if frame_dir.is_dir() else ()
    return VideoRecord(
        video_id=path.name,
        path=path,
        camera=cam,
        masks=tuple(masks),
        evidence=evidence,
        ground_truth=gt,
        frame_paths=frame_paths,
        warnings=tuple(warnings),
    )


def list_videos(root) -> list[Path]:
    root = Path(root)
    return sorted(
        p for p in root.iterdir() if p.is_dir() and p.name != "models" and (p / "camera.json").exists()
    ) if root.is_dir() else []


def validate_dataset(root) -> dict[str, dict]:
    """Recursive load with aggregated per-video diagnostics; never raises."""
    report: dict[str, dict] = {}
    root = Path(root)
    videos = list_videos(root)
    models = {}
    if (root / "models").is_dir():
        try:
            models = load_model_library(root / "models")
        except DataFormatError as exc:
            report["models"] = {"errors": [str(exc)], "warnings": []}
    if not videos:
        report["."] = {"errors": [], "warnings": ["no videos found under root"]}
    for vid in videos:
        entry = {"errors": [], "warnings": []}
        try:
            record = load_video_record(vid, models)
            entry["warnings"].extend(record.warnings)
        except DataFormatError as exc:
            entry["errors"].append(str(exc))
        report[vid.name] = entry
    return report


# ----------------------------------------------------------------- fit result


def fit_result_to_dict(result, weights: ObjectiveWeights | None = None) -> dict:
    """JSON-ready form of a FitResult, deterministic for identical fits."""
    cands = []
    for cr in result.candidates:
        entry = {
            "candidate": {
                "modelId": cr.candidate.model_id,
                "hand": cr.candidate.hand,
                "contactVertex": cr.candidate.contact_vertex,
                "activePart": cr.candidate.active_part,
            },
            "aborted": cr.aborted,
            "trace": [
                {"total": step["total"], "perTerm": step["per_term"]} for step in cr.trace
            ],
        }
        if cr.params is not None:
            gt_like = params_to_ground_truth(cr.candidate.model_id, cr.params)
            entry["params"] = {
                "translationCm": list(cr.params.translation_cm),
                "orientationEulerDeg": {
                    "roll": gt_like.euler_deg[0],
                    "yaw": gt_like.euler_deg[1],
                    "pitch": gt_like.euler_deg[2],
                },
                "sizeCm": list(cr.params.size_cm),
                "partMotion": list(cr.params.part_motion),
                "activePart": cr.params.active_part,
            }
        if cr.alignment is not None:
            entry["contactAlignment"] = {
                "rotation": [list(row) for row in cr.alignment.rotation],
                "translationCm": None
                if cr.alignment.translation_cm is None
                else list(cr.alignment.translation_cm),
            }
        if cr.final_report is not None:
            entry["final"] = {
                "total": cr.final_report.total,
                "perTerm": dict(cr.final_report.per_term),
            }
        cands.append(entry)
    return {"bestIndex": result.best_index, "candidates": cands, "config": result.config}


def params_from_result_dict(doc: dict) -> ObjectParams:
    euler = doc["orientationEulerDeg"]
    return ObjectParams(
        translation_cm=np.array(doc["translationCm"], dtype=np.float64),
        rotation=upright_euler_to_matrix(euler["roll"], euler["yaw"], euler["pitch"]),
        size_cm=np.array(doc["sizeCm"], dtype=np.float64),
        part_motion=np.array(doc["partMotion"], dtype=np.float64),
        active_part=int(doc.get("activePart", 0)),
    )
