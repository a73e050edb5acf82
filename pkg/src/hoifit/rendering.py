"""Differentiable soft silhouette rasterization.

Each projected face contributes a sigmoid of its signed squared pixel distance
(positive inside the triangle, negative outside, normalized so the longer
image side spans 2 units); per-pixel coverage is the probabilistic union
1 - prod(1 - D_j). Rasterization is deterministic: identical inputs produce
bit-identical images.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from PIL import Image

from . import _kernels as K
from .camera import CameraIntrinsics
from .errors import BehindCameraError, EmptyMaskError, InvalidInputError
from .meshes import TriMesh


@dataclass(frozen=True)
class SoftRasterSettings:
    """sigma is in normalized squared units; blur radius in pixels."""

    sigma: float = 2e-5
    blur_radius_px: float = 2.0
    near_plane_cm: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if self.blur_radius_px < 0:
            raise InvalidInputError(f"blur radius must be >= 0, got {self.blur_radius_px}")
        if not self.near_plane_cm > 0:
            raise InvalidInputError(f"near plane must be positive, got {self.near_plane_cm}")


@dataclass(frozen=True)
class SilhouetteImage:
    """Grid of coverage probabilities in [0, 1], shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise InvalidInputError(f"silhouette must be 2-d, got shape {vals.shape}")
        if not np.isfinite(vals).all() or vals.min() < 0.0 or vals.max() > 1.0:
            raise InvalidInputError("silhouette values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def save_png(self, path) -> None:
        data = np.round(self.values * 255.0).astype(np.uint8)
        Image.fromarray(data, mode="L").save(Path(path))

    @classmethod
    def load_png(cls, path) -> "SilhouetteImage":
        arr = np.asarray(Image.open(Path(path)).convert("L"), dtype=np.float64)
        return cls(arr / 255.0)

    @classmethod
    def load_mask_png(cls, path) -> "SilhouetteImage":
        """Ground-truth masks: grayscale thresholded at 127 to {0, 1}."""
        arr = np.asarray(Image.open(Path(path)).convert("L"))
        return cls((arr > 127).astype(np.float64))


def _check_depths(mesh: TriMesh, settings: SoftRasterSettings) -> None:
    if mesh.num_vertices == 0 or mesh.num_faces == 0:
        raise InvalidInputError("cannot rasterize an empty mesh")
    z = mesh.vertices[:, 2]
    if np.all(z < settings.near_plane_cm):
        raise BehindCameraError(np.arange(len(z)).tolist())


def render_coverage_tensor(
    verts_world: torch.Tensor,
    faces: torch.Tensor,
    cam: CameraIntrinsics,
    settings: SoftRasterSettings,
) -> torch.Tensor:
    """Torch path shared with the energy terms; verts (T, V, 3) -> (T, H, W)."""
    num_frames, num_verts = verts_world.shape[0], verts_world.shape[1]
    verts2d = K.project_points(
        verts_world.reshape(-1, 3),
        torch.as_tensor(cam.focal_px, dtype=K.DTYPE),
        K.as_tensor(cam.principal_px),
        near_cm=settings.near_plane_cm,
    )
    offsets = torch.arange(num_frames, dtype=torch.int64)[:, None, None] * num_verts
    faces_flat = (faces[None, :, :] + offsets).reshape(-1, 3)
    return K.soft_silhouette(
        verts2d,
        faces_flat,
        (cam.height, cam.width),
        settings.sigma,
        settings.blur_radius_px,
        num_frames,
    )


def render_silhouette(
    mesh: TriMesh, cam: CameraIntrinsics, settings: SoftRasterSettings = SoftRasterSettings()
) -> SilhouetteImage:
    """Soft silhouette of a world-space mesh."""
    _check_depths(mesh, settings)
    verts = K.as_tensor(mesh.vertices)[None]
    faces = torch.tensor(np.asarray(mesh.faces), dtype=torch.int64)
    cov = render_coverage_tensor(verts, faces, cam, settings)[0]
    return SilhouetteImage(np.clip(cov.numpy(), 0.0, 1.0))


def render_silhouette_with_grad(
    mesh: TriMesh, cam: CameraIntrinsics, settings: SoftRasterSettings = SoftRasterSettings()
) -> tuple[SilhouetteImage, Callable[[np.ndarray], np.ndarray]]:
    """Silhouette plus a pixel-weighted gradient function.

    The returned callable maps a per-pixel weight image (height, width) to the
    gradient of sum(weights * coverage) w.r.t. the world vertices, shape
    (V, 3). A one-hot weight image recovers one pixel's full gradient.
    """
    _check_depths(mesh, settings)
    verts = K.as_tensor(mesh.vertices).requires_grad_(True)
    faces = torch.tensor(np.asarray(mesh.faces), dtype=torch.int64)
    cov = render_coverage_tensor(verts[None], faces, cam, settings)[0]
    image = SilhouetteImage(np.clip(cov.detach().numpy(), 0.0, 1.0))

    def backward(pixel_weights: np.ndarray) -> np.ndarray:
        w = K.as_tensor(pixel_weights)
        if w.shape != cov.shape:
            raise InvalidInputError(f"weights shape {tuple(w.shape)} != image shape {tuple(cov.shape)}")
        (grad,) = torch.autograd.grad((cov * w).sum(), verts, retain_graph=True)
        return grad.numpy()

    return image, backward


def mask_centroid(img: SilhouetteImage) -> np.ndarray:
    """Coverage-weighted mean (x, y) over integer pixel indices."""
    vals = img.values
    mass = float(vals.sum())
    if mass <= 0.0:
        raise EmptyMaskError("mask has zero total coverage")
    ys, xs = np.mgrid[0 : vals.shape[0], 0 : vals.shape[1]]
    return np.array([(vals * xs).sum() / mass, (vals * ys).sum() / mass])


def mask_iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of two coverage images binarized at threshold."""
    pa, pb = np.asarray(a) >= threshold, np.asarray(b) >= threshold
    union = np.logical_or(pa, pb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pa, pb).sum() / union)
