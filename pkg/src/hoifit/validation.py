"""Input validation helpers shared by every module.

All helpers return the validated value as a float64 numpy array so callers
can keep working with the checked copy.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def check_finite(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_vector(x, size: int, name: str) -> np.ndarray:
    arr = check_finite(x, name)
    if arr.shape != (size,):
        raise InvalidInputError(f"{name} must have shape ({size},), got {arr.shape}")
    return arr


def check_unit_vector(x, name: str, tol: float = 1e-9) -> np.ndarray:
    arr = check_vector(x, 3, name)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > tol:
        raise InvalidInputError(f"{name} must be unit length (norm={norm!r})")
    return arr


def check_positive(x, name: str) -> np.ndarray:
    arr = check_finite(x, name)
    if not np.all(arr > 0):
        raise InvalidInputError(f"{name} must be strictly positive, got {arr}")
    return arr


def check_rotation_matrix(x, name: str = "rotation", tol: float = 1e-6) -> np.ndarray:
    arr = check_finite(x, name)
    if arr.shape != (3, 3):
        raise InvalidInputError(f"{name} must be 3x3, got {arr.shape}")
    err = float(np.abs(arr @ arr.T - np.eye(3)).max())
    if err > tol:
        raise InvalidInputError(f"{name} is not orthonormal (max |R R^T - I| = {err:.3e})")
    det = float(np.linalg.det(arr))
    if abs(det - 1.0) > tol:
        raise InvalidInputError(f"{name} must have determinant +1, got {det!r}")
    return arr


def check_vertices(x, name: str = "vertices") -> np.ndarray:
    arr = check_finite(x, name)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (V, 3), got {arr.shape}")
    return arr


def check_faces(x, num_vertices: int, name: str = "faces") -> np.ndarray:
    arr = np.asarray(x)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidInputError(f"{name} must be integer indices")
    arr = arr.astype(np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (F, 3), got {arr.shape}")
    if arr.min() < 0 or arr.max() >= num_vertices:
        raise InvalidInputError(f"{name} reference vertices outside [0, {num_vertices})")
    return arr


def check_index(i, size: int, name: str) -> int:
    i = int(i)
    if not 0 <= i < size:
        raise InvalidInputError(f"{name} out of range: {i} not in [0, {size})")
    return i
