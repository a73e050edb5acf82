"""Wireframe and mask overlays for result inspection and the annotation UI."""
from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .articulated import ArticulatedModel, ObjectParams, pose_mesh
from .camera import CameraIntrinsics
from .errors import BehindCameraError
from .meshes import TriMesh
from .rendering import SilhouetteImage, SoftRasterSettings, render_silhouette


def wireframe_polylines(
    model: ArticulatedModel, params: ObjectParams, frame: int, cam: CameraIntrinsics
) -> dict:
    """Projected wireframe of the posed model as JSON-ready vertex/edge lists.

    Vertices behind the camera are projected at a clamped depth and marked,
    so a dragged slider never hard-fails the preview.
    """
    posed = pose_mesh(model, params, frame)
    z = posed.vertices[:, 2]
    clamped = posed.vertices.copy()
    clamped[:, 2] = np.maximum(z, 1.0)
    uv = cam.principal_px + cam.focal_px * clamped[:, :2] / clamped[:, 2:3]
    combined = model.combined_mesh()
    parts = []
    offset = model.base.num_vertices
    parts.append({"name": "base", "vertexOffset": 0, "vertexCount": model.base.num_vertices})
    for i, part in enumerate(model.parts):
        parts.append(
            {"name": f"part{i}", "vertexOffset": offset, "vertexCount": part.mesh.num_vertices}
        )
        offset += part.mesh.num_vertices
    return {
        "vertices2d": [[float(u), float(v)] for u, v in uv],
        "behindCamera": [bool(b) for b in (z < 1.0)],
        "edges": [[int(a), int(b)] for a, b in combined.edges()],
        "parts": parts,
    }


def draw_overlay(
    frame_image: Image.Image | None,
    model: ArticulatedModel,
    params: ObjectParams,
    frame: int,
    cam: CameraIntrinsics,
    mask: SilhouetteImage | None = None,
    line_width: int = 1,
) -> Image.Image:
    """Frame image with the projected wireframe (and optional mask tint)."""
    if frame_image is None:
        canvas = Image.new("RGB", (cam.width, cam.height), (30, 30, 30))
    else:
        canvas = frame_image.convert("RGB").resize((cam.width, cam.height))
    if mask is not None:
        tint = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
        tint[..., 1] = np.round(mask.values * 120).astype(np.uint8)
        canvas = Image.fromarray(
            np.clip(np.asarray(canvas, dtype=np.int16) + tint, 0, 255).astype(np.uint8)
        )
    wf = wireframe_polylines(model, params, frame, cam)
    draw = ImageDraw.Draw(canvas)
    verts = wf["vertices2d"]
    base_count = wf["parts"][0]["vertexCount"]
    for a, b in wf["edges"]:
        color = (255, 210, 60) if (a >= base_count or b >= base_count) else (90, 170, 255)
        draw.line(
            [tuple(verts[a]), tuple(verts[b])], fill=color, width=line_width
        )
    return canvas


def render_result_frames(
    model: ArticulatedModel,
    params: ObjectParams,
    cam: CameraIntrinsics,
    settings: SoftRasterSettings,
    frame_paths=(),
    out_dir=None,
) -> list[tuple[Image.Image, SilhouetteImage]]:
    """Per-frame (overlay image, rendered soft mask) pairs; optionally saved."""
    from pathlib import Path

    from .data import frame_name

    outputs = []
    for t in range(params.num_frames):
        posed = pose_mesh(model, params, t)
        soft = render_silhouette(posed, cam, settings)
        base = None
        if frame_paths and t < len(frame_paths) and Path(frame_paths[t]).exists():
            base = Image.open(frame_paths[t])
        img = draw_overlay(base, model, params, t, cam, mask=soft)
        outputs.append((img, soft))
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            img.save(out / f"overlay_{frame_name(t)}")
            soft.save_png(out / f"mask_{frame_name(t)}")
    return outputs
