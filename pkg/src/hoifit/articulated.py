"""Canonical articulated objects and their differentiable forward kinematics.

Conventions
-----------
Canonical models are centered at the origin with the union bounding box
normalized so the longest axis spans exactly 1; the front faces +z and up is
+y. Part rotation follows the right-hand rule about the joint axis. Part
motion is expressed in degrees for revolute joints and centimeters for
prismatic joints at this surface; kernels convert to radians internally.

Object size is a (width, length, height) vector in cm: width scales the
canonical x extent, length the z extent, and height the y extent.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import _kernels as K
from .errors import DegenerateScaleError, InvalidInputError
from .meshes import TriMesh, concat_meshes
from .so3 import rotvec_to_matrix
from .validation import (
    check_finite,
    check_index,
    check_positive,
    check_rotation_matrix,
    check_unit_vector,
    check_vector,
)

FRONT_DIRECTION = np.array([0.0, 0.0, 1.0])
UP_DIRECTION = np.array([0.0, 1.0, 0.0])
MAX_TRIANGLES = 4000

JOINT_KINDS = ("revolute", "prismatic")


def size_to_xyz(size_cm) -> np.ndarray:
    """Map a (width, length, height) size vector to per-axis (x, y, z) scale."""
    s = check_positive(check_vector(size_cm, 3, "size"), "size")
    return np.array([s[0], s[2], s[1]])


@dataclass(frozen=True)
class JointSpec:
    """Single-parameter joint: axis and origin in canonical coordinates.

    Limits are degrees for revolute joints, cm for prismatic ones.
    """

    kind: str
    axis: np.ndarray
    origin: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise InvalidInputError(f"joint kind must be one of {JOINT_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "axis", check_unit_vector(self.axis, "joint axis"))
        object.__setattr__(self, "origin", check_vector(self.origin, 3, "joint origin"))
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not np.isfinite([lo, hi]).all() or lo > hi:
            raise InvalidInputError(f"joint limits must satisfy min <= max, got ({lo}, {hi})")
        object.__setattr__(self, "limits", (lo, hi))

    @property
    def mid_motion(self) -> float:
        return 0.5 * (self.limits[0] + self.limits[1])


def scale_joint(spec: JointSpec, scale_xyz) -> JointSpec:
    """Joint in anisotropically scaled coordinates.

    The origin scales componentwise; the axis scales componentwise and is
    renormalized, keeping hinge lines attached to the scaled geometry.
    """
    scale_xyz = check_positive(check_vector(scale_xyz, 3, "scale"), "scale")
    scaled_axis = spec.axis * scale_xyz
    norm = float(np.linalg.norm(scaled_axis))
    if norm < 1e-12:
        raise DegenerateScaleError(f"scaled joint axis collapsed: axis={spec.axis}, scale={scale_xyz}")
    return replace(spec, axis=scaled_axis / norm, origin=spec.origin * scale_xyz)


@dataclass(frozen=True)
class MovablePart:
    mesh: TriMesh
    joint: JointSpec
    contact_candidates: tuple[int, ...] = ()

    def __post_init__(self):
        for i in self.contact_candidates:
            check_index(i, self.mesh.num_vertices, "contact candidate")
        object.__setattr__(self, "contact_candidates", tuple(int(i) for i in self.contact_candidates))


@dataclass(frozen=True)
class ArticulatedModel:
    """Rigid base plus movable parts, each with one joint."""

    model_id: str
    category: str
    base: TriMesh
    parts: tuple[MovablePart, ...]
    nominal_size_cm: np.ndarray | None = None
    _tensors: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if self.nominal_size_cm is not None:
            object.__setattr__(
                self, "nominal_size_cm", check_positive(self.nominal_size_cm, "nominal size")
            )
        self.validate()

    def validate(self) -> None:
        all_verts = np.concatenate([self.base.vertices] + [p.mesh.vertices for p in self.parts])
        lo, hi = all_verts.min(axis=0), all_verts.max(axis=0)
        center = (lo + hi) / 2.0
        if np.abs(center).max() > 1e-6:
            raise InvalidInputError(f"canonical bounding box not centered: center={center}")
        extent = float((hi - lo).max())
        if abs(extent - 1.0) > 1e-6:
            raise InvalidInputError(f"canonical longest extent must be 1, got {extent}")
        tris = self.base.num_faces + sum(p.mesh.num_faces for p in self.parts)
        if tris > MAX_TRIANGLES:
            raise InvalidInputError(f"{tris} triangles exceeds the {MAX_TRIANGLES} budget")

    @property
    def num_parts(self) -> int:
        return len(self.parts)

    @property
    def num_vertices(self) -> int:
        return self.base.num_vertices + sum(p.mesh.num_vertices for p in self.parts)

    def vertex_offset(self, part_index: int) -> int:
        """Offset of a part's vertices inside the combined vertex array."""
        check_index(part_index, self.num_parts, "part index")
        off = self.base.num_vertices
        for p in self.parts[:part_index]:
            off += p.mesh.num_vertices
        return off

    def part_slices(self) -> list[tuple[int, int]]:
        slices = []
        for i, p in enumerate(self.parts):
            off = self.vertex_offset(i)
            slices.append((off, off + p.mesh.num_vertices))
        return slices

    def combined_mesh(self) -> TriMesh:
        return concat_meshes([self.base] + [p.mesh for p in self.parts])

    def contact_global_index(self, part_index: int, local_index: int) -> int:
        part = self.parts[check_index(part_index, self.num_parts, "part index")]
        check_index(local_index, part.mesh.num_vertices, "contact vertex index")
        return self.vertex_offset(part_index) + local_index

    def tensors(self):
        """Cached torch constants consumed by the kernels."""
        if not self._tensors:
            combined = self.combined_mesh()
            self._tensors.update(
                verts=K.as_tensor(combined.vertices),
                faces=torch.tensor(np.asarray(combined.faces), dtype=torch.int64),
                slices=self.part_slices(),
                kinds=[p.joint.kind for p in self.parts],
                axes=K.as_tensor(np.stack([p.joint.axis for p in self.parts]))
                if self.parts
                else torch.zeros((0, 3), dtype=K.DTYPE),
                origins=K.as_tensor(np.stack([p.joint.origin for p in self.parts]))
                if self.parts
                else torch.zeros((0, 3), dtype=K.DTYPE),
            )
        return self._tensors


@dataclass(frozen=True)
class ObjectParams:
    """Pose, size and per-frame part motion of one object.

    ``size_cm`` is (width, length, height); ``part_motion`` holds one value per
    frame for the ``active_part`` (degrees if revolute, cm if prismatic).
    """

    translation_cm: np.ndarray
    rotation: np.ndarray
    size_cm: np.ndarray
    part_motion: np.ndarray
    active_part: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "translation_cm", check_vector(self.translation_cm, 3, "translation")
        )
        object.__setattr__(self, "rotation", check_rotation_matrix(self.rotation))
        object.__setattr__(
            self, "size_cm", check_positive(check_vector(self.size_cm, 3, "size"), "size")
        )
        pm = check_finite(self.part_motion, "part motion")
        if pm.ndim != 1:
            raise InvalidInputError(f"part motion must be a 1-d sequence, got shape {pm.shape}")
        object.__setattr__(self, "part_motion", pm)

    @property
    def num_frames(self) -> int:
        return len(self.part_motion)

    @classmethod
    def from_rotvec(cls, translation_cm, rotvec, size_cm, part_motion, active_part=0):
        return cls(translation_cm, rotvec_to_matrix(rotvec), size_cm, part_motion, active_part)


def dimensions(params: ObjectParams) -> np.ndarray:
    """(width, length, height) in cm: the size vector through the box mapping."""
    return params.size_cm.copy()


def _motion_to_native(kind: str, value):
    return np.deg2rad(value) if kind == "revolute" else value


def _native_motion_matrix(model: ArticulatedModel, params: ObjectParams, frames) -> np.ndarray:
    """(T, P) kernel-native motion; inactive parts rest at zero."""
    motion = np.zeros((len(frames), model.num_parts))
    if model.num_parts:
        active = check_index(params.active_part, model.num_parts, "active part")
        kind = model.parts[active].joint.kind
        motion[:, active] = _motion_to_native(kind, params.part_motion[list(frames)])
    return motion


def _pose_tensor(model: ArticulatedModel, params: ObjectParams, frames) -> torch.Tensor:
    t = model.tensors()
    return K.pose_vertices(
        t["verts"],
        t["slices"],
        t["kinds"],
        t["axes"],
        t["origins"],
        K.as_tensor(params.translation_cm),
        K.as_tensor(params.rotation),
        K.as_tensor(size_to_xyz(params.size_cm)),
        K.as_tensor(_native_motion_matrix(model, params, frames)),
    )


def pose_mesh(model: ArticulatedModel, params: ObjectParams, frame: int) -> TriMesh:
    """World-space mesh at one frame.

    Base vertices map to R (s * v) + x; movable-part vertices additionally pass
    through the joint transform (rotation about, or translation along, the
    scaled joint axis) before the global pose. Face topology is unchanged.
    """
    check_index(frame, params.num_frames, "frame")
    world = _pose_tensor(model, params, [frame])[0].numpy()
    return model.combined_mesh().with_vertices(world)


@dataclass(frozen=True)
class PoseJacobian:
    """Derivatives of every posed vertex; shapes lead with (V, 3).

    ``d_rotation`` is taken w.r.t. the axis-angle vector of the global
    rotation (radians); ``d_part_motion`` w.r.t. the API motion unit (degrees
    for revolute joints, cm for prismatic).
    """

    d_translation: np.ndarray  # (V, 3, 3)
    d_rotation: np.ndarray  # (V, 3, 3)
    d_size: np.ndarray  # (V, 3, 3)
    d_part_motion: np.ndarray  # (V, 3)


def pose_mesh_jacobian(model: ArticulatedModel, params: ObjectParams, frame: int) -> PoseJacobian:
    """Exact derivatives of :func:`pose_mesh` output vertices.

    Rotation derivatives are taken w.r.t. the axis-angle vector r with
    R = exp(skew(r)), the same parameterization the optimizer uses.
    """
    check_index(frame, params.num_frames, "frame")
    from .so3 import matrix_to_rotvec

    t = model.tensors()
    active = params.active_part if model.num_parts else 0
    kind = model.parts[active].joint.kind if model.num_parts else "prismatic"
    motion0 = K.as_tensor(_native_motion_matrix(model, params, [frame]))
    if model.num_parts:
        one_hot = torch.zeros_like(motion0)
        one_hot[0, active] = 1.0

    def posed(x, rotvec, size, dtheta):
        motion = motion0 + one_hot * dtheta if model.num_parts else motion0
        size_xyz = torch.stack([size[0], size[2], size[1]])
        return K.pose_vertices(
            t["verts"], t["slices"], t["kinds"], t["axes"], t["origins"],
            x, K.rotvec_to_matrix(rotvec), size_xyz, motion,
        )[0]

    inputs = (
        K.as_tensor(params.translation_cm),
        K.as_tensor(matrix_to_rotvec(params.rotation)),
        K.as_tensor(params.size_cm),
        K.as_tensor(0.0),
    )
    jac = torch.autograd.functional.jacobian(posed, inputs)
    d_theta = jac[3].numpy()
    if model.num_parts and kind == "revolute":
        d_theta = d_theta * (np.pi / 180.0)  # API surface uses degrees
    return PoseJacobian(
        d_translation=jac[0].numpy(),
        d_rotation=jac[1].numpy(),
        d_size=jac[2].numpy(),
        d_part_motion=d_theta,
    )
