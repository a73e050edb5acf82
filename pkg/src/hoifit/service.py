"""HTTP service backing the annotation UI.

Endpoints (all JSON unless noted):

    GET  /api/videos                       list videos
    GET  /api/videos/{vid}                 per-video metadata
    GET  /api/videos/{vid}/frames/{i}      frame image (PNG)
    GET  /api/models                       model library summary
    GET  /api/models/{mid}/wireframe       canonical wireframe (vertices/edges)
    POST /api/videos/{vid}/project         posed wireframe projection for params
    GET  /api/videos/{vid}/gt              current annotation (404 if none)
    POST /api/videos/{vid}/gt              save annotation (previous kept as .bak)
    GET  /api/videos/{vid}/placement       solved human placement + 2D skeleton

Binds loopback by default: this is a local annotation workbench, not a public
service. GETs are side-effect free; saves to one video are serialized
last-writer-wins with an on-disk backup of the previous version.
"""
from __future__ import annotations

import shutil
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .camera import project_points
from .data import (
    GroundTruth,
    canonical_json,
    frame_name,
    load_model_library,
    load_video_record,
    save_ground_truth,
)
from .errors import DataFormatError, HoifitError, InvalidInputError
from .human import solve_placement
from .overlay import wireframe_polylines
from .so3 import upright_euler_to_matrix


class EulerDoc(BaseModel):
    roll: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0


class ParamsDoc(BaseModel):
    modelId: str
    activePart: int = 0
    translationCm: list[float] = Field(min_length=3, max_length=3)
    orientationEulerDeg: EulerDoc
    sizeCm: list[float] = Field(min_length=3, max_length=3)
    partMotion: list[float]
    hand: str | None = None

    def to_object_params(self):
        from .articulated import ObjectParams

        try:
            return ObjectParams(
                translation_cm=np.array(self.translationCm),
                rotation=upright_euler_to_matrix(
                    self.orientationEulerDeg.roll,
                    self.orientationEulerDeg.yaw,
                    self.orientationEulerDeg.pitch,
                ),
                size_cm=np.array(self.sizeCm),
                part_motion=np.array(self.partMotion),
                active_part=self.activePart,
            )
        except InvalidInputError as exc:
            raise HTTPException(status_code=400, detail=str(exc))


class ProjectRequest(BaseModel):
    frame: int = 0
    params: ParamsDoc


def create_app(dataset_root: Path, ui_dir: Path | None = None) -> FastAPI:
    root = Path(dataset_root)
    app = FastAPI(title="hoifit annotation service")
    models = load_model_library(root / "models") if (root / "models").is_dir() else {}
    records: dict = {}
    placements: dict = {}
    save_locks: dict[str, threading.Lock] = {}
    state_lock = threading.Lock()

    def get_record(vid: str):
        with state_lock:
            if vid not in records:
                try:
                    records[vid] = load_video_record(root / vid, models)
                except DataFormatError as exc:
                    raise HTTPException(status_code=404, detail=str(exc))
            return records[vid]

    def get_model(mid: str):
        if mid not in models:
            raise HTTPException(status_code=404, detail=f"unknown model {mid!r}")
        return models[mid]

    @app.get("/api/videos")
    def list_videos_ep():
        out = []
        for sub in sorted(root.iterdir()) if root.is_dir() else []:
            if sub.is_dir() and sub.name != "models" and (sub / "camera.json").exists():
                out.append({"id": sub.name, "hasGt": (sub / "gt.json").exists()})
        return out

    @app.get("/api/videos/{vid}")
    def video_meta(vid: str):
        record = get_record(vid)
        return {
            "id": vid,
            "numFrames": record.num_frames,
            "hasFrames": bool(record.frame_paths),
            "interactionWindow": list(record.evidence.interaction_window),
            "camera": {
                "focalLengthPx": record.camera.focal_px,
                "principalPointPx": list(record.camera.principal_px),
                "imageSize": list(record.camera.image_size),
            },
            "gtModelId": record.ground_truth.model_id if record.ground_truth else None,
            "models": [
                {
                    "id": m.model_id,
                    "category": m.category,
                    "nominalSizeCm": None if m.nominal_size_cm is None else list(m.nominal_size_cm),
                    "parts": [
                        {
                            "kind": p.joint.kind,
                            "limits": list(p.joint.limits),
                            "contactCandidates": list(p.contact_candidates),
                        }
                        for p in m.parts
                    ],
                }
                for m in models.values()
            ],
        }

    @app.get("/api/videos/{vid}/frames/{index}")
    def frame_image(vid: str, index: int):
        record = get_record(vid)
        if not 0 <= index < record.num_frames:
            raise HTTPException(status_code=404, detail=f"frame {index} out of range")
        path = root / vid / "frames" / frame_name(index)
        if not path.exists():
            path = root / vid / "masks" / frame_name(index)
        if not path.exists():
            raise HTTPException(status_code=404, detail="no frame or mask image on disk")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/models")
    def model_list():
        return [
            {"id": m.model_id, "category": m.category, "parts": m.num_parts}
            for m in models.values()
        ]

    @app.get("/api/models/{mid}/wireframe")
    def wireframe(mid: str):
        model = get_model(mid)
        combined = model.combined_mesh()
        parts = [{"name": "base", "vertexOffset": 0, "vertexCount": model.base.num_vertices}]
        for i, part in enumerate(model.parts):
            parts.append(
                {
                    "name": f"part{i}",
                    "vertexOffset": model.vertex_offset(i),
                    "vertexCount": part.mesh.num_vertices,
                }
            )
        return {
            "vertices": [[float(c) for c in v] for v in combined.vertices],
            "edges": [[int(a), int(b)] for a, b in combined.edges()],
            "parts": parts,
        }

    @app.post("/api/videos/{vid}/project")
    def project(vid: str, request: ProjectRequest):
        record = get_record(vid)
        model = get_model(request.params.modelId)
        params = request.params.to_object_params()
        if not 0 <= request.frame < record.num_frames:
            raise HTTPException(status_code=400, detail=f"frame {request.frame} out of range")
        if len(params.part_motion) != record.num_frames:
            raise HTTPException(
                status_code=400,
                detail=f"partMotion needs {record.num_frames} entries, got {len(params.part_motion)}",
            )
        if params.active_part >= max(model.num_parts, 1):
            raise HTTPException(status_code=400, detail="activePart out of range for model")
        try:
            return wireframe_polylines(model, params, request.frame, record.camera)
        except HoifitError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/api/videos/{vid}/gt")
    def get_gt(vid: str):
        get_record(vid)
        path = root / vid / "gt.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail="no annotation saved yet")
        return Response(content=path.read_text(), media_type="application/json")

    @app.post("/api/videos/{vid}/gt")
    def save_gt(vid: str, params: ParamsDoc):
        record = get_record(vid)
        get_model(params.modelId)
        obj = params.to_object_params()
        if len(obj.part_motion) != record.num_frames:
            raise HTTPException(
                status_code=400,
                detail=f"partMotion needs {record.num_frames} entries, got {len(obj.part_motion)}",
            )
        path = root / vid / "gt.json"
        lock = save_locks.setdefault(vid, threading.Lock())
        with lock:
            if path.exists():
                shutil.copy2(path, path.with_suffix(".json.bak"))
            gt = GroundTruth(
                model_id=params.modelId,
                active_part=params.activePart,
                translation_cm=obj.translation_cm,
                euler_deg=(
                    params.orientationEulerDeg.roll,
                    params.orientationEulerDeg.yaw,
                    params.orientationEulerDeg.pitch,
                ),
                size_cm=obj.size_cm,
                part_motion=obj.part_motion,
                hand=params.hand,
            )
            save_ground_truth(path, gt)
        with state_lock:
            records.pop(vid, None)  # reload with the fresh annotation next time
        return {"saved": True, "path": str(path)}

    @app.get("/api/videos/{vid}/placement")
    def placement(vid: str):
        record = get_record(vid)
        with state_lock:
            if vid not in placements:
                try:
                    placements[vid] = solve_placement(record.evidence, record.camera)
                except HoifitError as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
            placed = placements[vid]
        skeleton2d = []
        for t, f in enumerate(record.evidence.frames):
            pts = {}
            for name in f.keypoints3d:
                world = placed.world_keypoint(f, t, name)
                if world[2] > 0:
                    uv = project_points(world, record.camera)
                    pts[name] = [float(uv[0]), float(uv[1])]
            skeleton2d.append(pts)
        return {
            "scale": placed.scale,
            "translationsCm": [[float(c) for c in t] for t in placed.translations_cm],
            "residuals": [float(r) for r in placed.residuals],
            "skeleton2d": skeleton2d,
        }

    ui = ui_dir if ui_dir is not None else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui.is_dir():
        app.mount("/ui", StaticFiles(directory=ui, html=True), name="ui")

    return app
