"""Pinhole camera with square pixels; the world frame equals the camera frame
(x right, y down in the image, z forward)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidInputError
from .validation import check_finite, check_vector


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float
    principal_px: np.ndarray
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        if not self.focal_px > 0:
            raise InvalidInputError(f"focal length must be positive, got {self.focal_px}")
        pp = check_vector(self.principal_px, 2, "principal point")
        w, h = int(self.image_size[0]), int(self.image_size[1])
        if w <= 0 or h <= 0:
            raise InvalidInputError(f"image size must be positive, got {self.image_size}")
        if not (0 <= pp[0] <= w and 0 <= pp[1] <= h):
            raise InvalidInputError(f"principal point {pp} outside image bounds {w}x{h}")
        object.__setattr__(self, "focal_px", float(self.focal_px))
        object.__setattr__(self, "principal_px", pp)
        object.__setattr__(self, "image_size", (w, h))

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]


def project_points(points_cm, cam: CameraIntrinsics) -> np.ndarray:
    """Perspective-project world points to continuous pixel coordinates.

    p = principal + focal * (x/z, y/z); image y grows downward. Points at
    non-positive depth raise :class:`BehindCameraError` naming their indices.
    """
    pts = check_finite(points_cm, "points")
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
    z = pts[:, 2]
    bad = np.nonzero(z <= 0.0)[0]
    if bad.size:
        raise BehindCameraError(bad.tolist())
    uv = cam.principal_px + cam.focal_px * pts[:, :2] / z[:, None]
    return uv[0] if single else uv


def back_project(pixel, depth_cm: float, cam: CameraIntrinsics) -> np.ndarray:
    """Ray through a pixel evaluated at the given depth."""
    u, v = float(pixel[0]), float(pixel[1])
    x = (u - cam.principal_px[0]) / cam.focal_px * depth_cm
    y = (v - cam.principal_px[1]) / cam.focal_px * depth_cm
    return np.array([x, y, float(depth_cm)])
