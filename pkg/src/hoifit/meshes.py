"""Triangle mesh container and ASCII OBJ round trip."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .validation import check_faces, check_vertices


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangle mesh: float64 vertices (V, 3), int64 faces (F, 3)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", check_vertices(self.vertices))
        object.__setattr__(self, "faces", check_faces(self.faces, len(self.vertices)))
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces.copy())

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (E, 2) index pairs."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


def concat_meshes(meshes: list[TriMesh]) -> TriMesh:
    """Stack meshes into one, offsetting face indices; order preserved."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.num_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces))


def read_obj(path) -> TriMesh:
    """Read an ASCII OBJ containing only v/f records with triangular faces."""
    path = Path(path)
    verts, faces = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0] in ("#", "vn", "vt", "o", "g", "s", "mtllib", "usemtl"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise DataFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append([float(c) for c in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: only triangular faces supported")
            idx = [int(tok.split("/")[0]) for tok in parts[1:4]]
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        else:
            raise DataFormatError(f"{path}:{lineno}: unsupported OBJ record {parts[0]!r}")
    if not verts:
        raise DataFormatError(f"{path}: no vertices found")
    return TriMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64))


def write_obj(mesh: TriMesh, path) -> None:
    """Write vertices at 9 significant digits; format is stable across runs."""
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")
