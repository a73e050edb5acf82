"""Differentiable torch kernels backing kinematics, projection and rasterization.

Everything here works in float64 and in math-native units: centimeters for
lengths, radians for angles, continuous pixel coordinates for images. Public
modules wrap these kernels with numpy surfaces and API units (degrees on the
part-motion surface).
"""
from __future__ import annotations

import numpy as np
import torch

DTYPE = torch.float64


def as_tensor(x) -> torch.Tensor:
    # torch.tensor always copies, so read-only numpy inputs are safe.
    return torch.tensor(np.asarray(x), dtype=DTYPE)


def skew(r: torch.Tensor) -> torch.Tensor:
    """Skew-symmetric matrices for rotation vectors of shape (..., 3)."""
    zero = torch.zeros_like(r[..., 0])
    rows = [
        torch.stack([zero, -r[..., 2], r[..., 1]], dim=-1),
        torch.stack([r[..., 2], zero, -r[..., 0]], dim=-1),
        torch.stack([-r[..., 1], r[..., 0], zero], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def rotvec_to_matrix(r: torch.Tensor) -> torch.Tensor:
    """Batched Rodrigues formula, safe to differentiate through zero."""
    a2 = (r * r).sum(dim=-1)
    small = a2 < 1e-14
    a2_safe = torch.where(small, torch.ones_like(a2), a2)
    angle = torch.sqrt(a2_safe)
    # sin(t)/t and (1-cos(t))/t^2 with series fallbacks near zero.
    sin_term = torch.where(small, 1.0 - a2 / 6.0, torch.sin(angle) / angle)
    cos_term = torch.where(small, 0.5 - a2 / 24.0, (1.0 - torch.cos(angle)) / a2_safe)
    k = skew(r)
    eye = torch.eye(3, dtype=r.dtype).expand(k.shape)
    return eye + sin_term[..., None, None] * k + cos_term[..., None, None] * (k @ k)


def scale_joint_tensors(axis: torch.Tensor, origin: torch.Tensor, scale_xyz: torch.Tensor):
    """Componentwise-scale a joint: origin scales, axis scales then renormalizes."""
    scaled_axis = axis * scale_xyz
    norm = torch.linalg.norm(scaled_axis)
    return scaled_axis / norm, origin * scale_xyz


def pose_vertices(
    verts: torch.Tensor,
    part_slices: list[tuple[int, int]],
    joint_kinds: list[str],
    joint_axes: torch.Tensor,
    joint_origins: torch.Tensor,
    translation_cm: torch.Tensor,
    rotation: torch.Tensor,
    scale_xyz_cm: torch.Tensor,
    part_motion: torch.Tensor,
) -> torch.Tensor:
    """Articulated forward kinematics for a batch of frames.

    ``verts`` are canonical (V, 3); ``part_slices`` give each movable part's
    vertex range in that array. ``part_motion`` has shape (T, P) in radians
    (revolute) or cm (prismatic). Returns world vertices (T, V, 3) in cm.
    """
    num_frames = part_motion.shape[0]
    scaled = verts * scale_xyz_cm
    out = scaled.expand(num_frames, -1, -1).clone()
    for p, (lo, hi) in enumerate(part_slices):
        axis_n, origin_s = scale_joint_tensors(joint_axes[p], joint_origins[p], scale_xyz_cm)
        theta = part_motion[:, p]
        block = scaled[lo:hi]
        if joint_kinds[p] == "revolute":
            rot = rotvec_to_matrix(axis_n[None, :] * theta[:, None])  # (T, 3, 3)
            moved = (block[None, :, :] - origin_s) @ rot.transpose(1, 2) + origin_s
        else:
            moved = block[None, :, :] + theta[:, None, None] * axis_n
        out = torch.cat([out[:, :lo], moved, out[:, hi:]], dim=1)
    return out @ rotation.T + translation_cm


def project_points(
    points_cm: torch.Tensor,
    focal_px: torch.Tensor,
    principal_px: torch.Tensor,
    near_cm: float | None = None,
) -> torch.Tensor:
    """Pinhole projection, image y down; optionally clamps depth at the near plane."""
    z = points_cm[..., 2:3]
    if near_cm is not None:
        z = torch.clamp(z, min=near_cm)
    return principal_px + focal_px * points_cm[..., :2] / z


def _point_segment_sqdist(p: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    ab = b - a
    ap = p - a
    denom = (ab * ab).sum(dim=-1)
    t = (ap * ab).sum(dim=-1) / torch.clamp(denom, min=1e-30)
    t = torch.clamp(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    d = p - closest
    return (d * d).sum(dim=-1)


def soft_silhouette_reference(
    verts2d: torch.Tensor,
    faces: torch.Tensor,
    image_hw: tuple[int, int],
    sigma: float,
    blur_radius_px: float,
    num_frames: int,
) -> torch.Tensor:
    """Pure-torch soft silhouette; the readable reference implementation.

    ``verts2d`` is (T*V, 2); ``faces`` indexes into that flattened array with
    per-frame offsets already applied, frame-major. Per-face sigmoids of the
    signed squared distance to the projected triangle boundary are combined by
    probabilistic union; faces farther than ``blur_radius_px`` from a pixel
    contribute nothing. The squared distance is measured in pixels and scaled
    into normalized units where the longer image side spans 2.
    """
    height, width = image_hw
    faces_per_frame = faces.shape[0] // num_frames
    tri = verts2d[faces]  # (N, 3, 2)

    # Integer pixel blocks per face (detached; blocks only bound the support).
    margin = blur_radius_px + 1.0
    tri_np = tri.detach().numpy()
    x0 = np.clip(np.floor(tri_np[:, :, 0].min(axis=1) - margin), 0, width - 1).astype(np.int64)
    x1 = np.clip(np.ceil(tri_np[:, :, 0].max(axis=1) + margin), 0, width - 1).astype(np.int64)
    y0 = np.clip(np.floor(tri_np[:, :, 1].min(axis=1) - margin), 0, height - 1).astype(np.int64)
    y1 = np.clip(np.ceil(tri_np[:, :, 1].max(axis=1) + margin), 0, height - 1).astype(np.int64)
    off_image = (
        (tri_np[:, :, 0].max(axis=1) < -margin)
        | (tri_np[:, :, 0].min(axis=1) > width + margin)
        | (tri_np[:, :, 1].max(axis=1) < -margin)
        | (tri_np[:, :, 1].min(axis=1) > height + margin)
        | ~np.isfinite(tri_np).all(axis=(1, 2))
    )
    bw = np.where(off_image, 0, x1 - x0 + 1)
    bh = np.where(off_image, 0, y1 - y0 + 1)
    counts = bw * bh
    total = int(counts.sum())
    if total == 0:
        return torch.zeros((num_frames, height, width), dtype=verts2d.dtype)

    counts_t = torch.from_numpy(counts)
    face_row = torch.repeat_interleave(torch.arange(len(counts)), counts_t)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = torch.arange(total) - torch.from_numpy(starts)[face_row]
    bw_row = torch.from_numpy(bw)[face_row]
    px = torch.from_numpy(x0)[face_row] + local % bw_row
    py = torch.from_numpy(y0)[face_row] + local // bw_row
    centers = torch.stack([px, py], dim=-1).to(verts2d.dtype) + 0.5

    tri_rows = tri[face_row]  # (total, 3, 2)
    a, b, c = tri_rows[:, 0], tri_rows[:, 1], tri_rows[:, 2]
    d2 = torch.minimum(
        torch.minimum(
            _point_segment_sqdist(centers, a, b), _point_segment_sqdist(centers, b, c)
        ),
        _point_segment_sqdist(centers, c, a),
    )

    def cross_z(u0, u1, v0, v1):
        return (u1 - u0)[:, 0] * (v1 - v0)[:, 1] - (u1 - u0)[:, 1] * (v1 - v0)[:, 0]

    with torch.no_grad():
        s0 = cross_z(a, b, a, centers)
        s1 = cross_z(b, c, b, centers)
        s2 = cross_z(c, a, c, centers)
        inside = ((s0 > 0) & (s1 > 0) & (s2 > 0)) | ((s0 < 0) & (s1 < 0) & (s2 < 0))
        keep = inside | (d2.detach() <= blur_radius_px * blur_radius_px)
        sign = torch.where(inside, 1.0, -1.0).to(verts2d.dtype)
        keep_f = keep.to(verts2d.dtype)

    norm_sq = (2.0 / max(height, width)) ** 2
    # log(1 - D) = logsigmoid(-sign * d^2 / sigma); exact for saturated pixels.
    log_miss = torch.nn.functional.logsigmoid(-sign * d2 * (norm_sq / sigma)) * keep_f

    frame_of_face = face_row // faces_per_frame
    lin = frame_of_face * (height * width) + py * width + px
    acc = torch.zeros(num_frames * height * width, dtype=verts2d.dtype)
    acc = acc.index_add(0, lin, log_miss)
    return (1.0 - torch.exp(acc)).reshape(num_frames, height, width)


def _face_blocks(tri_np: np.ndarray, image_hw, blur_radius_px: float):
    """Clipped integer pixel blocks per face (numpy, detached)."""
    height, width = image_hw
    margin = blur_radius_px + 1.0
    x0 = np.clip(np.floor(tri_np[:, :, 0].min(axis=1) - margin), 0, width - 1).astype(np.int64)
    x1 = np.clip(np.ceil(tri_np[:, :, 0].max(axis=1) + margin), 0, width - 1).astype(np.int64)
    y0 = np.clip(np.floor(tri_np[:, :, 1].min(axis=1) - margin), 0, height - 1).astype(np.int64)
    y1 = np.clip(np.ceil(tri_np[:, :, 1].max(axis=1) + margin), 0, height - 1).astype(np.int64)
    off_image = (
        (tri_np[:, :, 0].max(axis=1) < -margin)
        | (tri_np[:, :, 0].min(axis=1) > width + margin)
        | (tri_np[:, :, 1].max(axis=1) < -margin)
        | (tri_np[:, :, 1].min(axis=1) > height + margin)
        | ~np.isfinite(tri_np).all(axis=(1, 2))
    )
    x1 = np.where(off_image, x0 - 1, x1)  # empty block
    y1 = np.where(off_image, y0 - 1, y1)
    return x0, y0, x1, y1


class _FastSoftSilhouette(torch.autograd.Function):
    """Numba-backed rasterization with an analytic backward pass.

    Forward accumulates log(1 - D_j) per pixel; backward routes each pixel's
    adjoint through the sigmoid and the argmin boundary edge (envelope
    theorem: the clamped projection parameter is held fixed).
    """

    @staticmethod
    def forward(ctx, verts2d, faces, image_hw, sigma_norm_sq_inv, blur_radius_px, num_frames):
        from ._raster_numba import raster_forward

        height, width = image_hw
        tri = verts2d.detach().numpy()[faces.numpy()]
        x0, y0, x1, y1 = _face_blocks(tri, image_hw, blur_radius_px)
        frame_of_face = (
            np.arange(faces.shape[0], dtype=np.int64) // (faces.shape[0] // num_frames)
        )
        acc = raster_forward(
            np.ascontiguousarray(tri),
            x0, y0, x1, y1,
            frame_of_face,
            height, width, num_frames,
            sigma_norm_sq_inv,
            blur_radius_px * blur_radius_px,
        )
        ctx.saved = (tri, x0, y0, x1, y1, frame_of_face, acc, image_hw,
                     sigma_norm_sq_inv, blur_radius_px, faces, verts2d.shape[0])
        coverage = 1.0 - np.exp(acc)
        return torch.from_numpy(coverage.reshape(num_frames, height, width))

    @staticmethod
    def backward(ctx, grad_cov):
        from ._raster_numba import raster_backward

        (tri, x0, y0, x1, y1, frame_of_face, acc, image_hw,
         sigma_norm_sq_inv, blur_radius_px, faces, num_verts) = ctx.saved
        height, width = image_hw
        # dL/dacc = dL/dcov * (-exp(acc)) per pixel.
        grad_acc = grad_cov.reshape(-1).numpy() * (-np.exp(acc))
        grad_tri = raster_backward(
            tri, x0, y0, x1, y1, frame_of_face,
            grad_acc, height, width,
            sigma_norm_sq_inv, blur_radius_px * blur_radius_px,
        )
        grad_verts = np.zeros((num_verts, 2))
        np.add.at(grad_verts, faces.numpy().reshape(-1), grad_tri.reshape(-1, 2))
        return torch.from_numpy(grad_verts), None, None, None, None, None


def soft_silhouette(
    verts2d: torch.Tensor,
    faces: torch.Tensor,
    image_hw: tuple[int, int],
    sigma: float,
    blur_radius_px: float,
    num_frames: int,
) -> torch.Tensor:
    """Soft silhouette coverage (fast path); semantics match the reference."""
    height, width = image_hw
    norm_sq = (2.0 / max(height, width)) ** 2
    return _FastSoftSilhouette.apply(
        verts2d, faces, (height, width), norm_sq / sigma, blur_radius_px, num_frames
    )


def soft_centroid(coverage: torch.Tensor) -> torch.Tensor:
    """Coverage-weighted mean (x, y) of integer pixel indices; (T, 2)."""
    height, width = coverage.shape[-2:]
    xs = torch.arange(width, dtype=coverage.dtype)
    ys = torch.arange(height, dtype=coverage.dtype)
    mass = coverage.sum(dim=(-2, -1))
    cx = (coverage.sum(dim=-2) * xs).sum(dim=-1) / torch.clamp(mass, min=1e-12)
    cy = (coverage.sum(dim=-1) * ys).sum(dim=-1) / torch.clamp(mass, min=1e-12)
    return torch.stack([cx, cy], dim=-1)
