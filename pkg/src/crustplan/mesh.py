"""Triangle meshes, convex parts and surface sampling."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import trimesh
from scipy.spatial import ConvexHull

from .errors import GeometryError

logger = logging.getLogger(__name__)

AREA_EPS = 1e-14


def oriented_simplices(hull: ConvexHull) -> np.ndarray:
    """Hull triangles wound counter-clockwise when seen from outside."""
    pts = hull.points
    tri = hull.simplices.copy()
    n = np.cross(pts[tri[:, 1]] - pts[tri[:, 0]], pts[tri[:, 2]] - pts[tri[:, 0]])
    flip = np.einsum("ij,ij->i", n, hull.equations[:, :3]) < 0
    tri[flip] = tri[flip][:, ::-1]
    return tri


@dataclass(frozen=True, eq=False)
class ConvexPart:
    """Convex piece of a mesh in the mesh's local frame.

    ``normals @ x <= offsets`` describes the interior; ``triangles`` index ``vertices``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_points(cls, points: np.ndarray) -> ConvexPart:
        hull = ConvexHull(points)
        used = np.unique(hull.simplices)
        remap = np.full(len(points), -1)
        remap[used] = np.arange(len(used))
        return cls(
            vertices=np.ascontiguousarray(points[used]),
            triangles=remap[oriented_simplices(hull)],
            normals=hull.equations[:, :3].copy(),
            offsets=-hull.equations[:, 3].copy(),
        )

    @property
    def lo(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def hi(self) -> np.ndarray:
        return self.vertices.max(axis=0)


class TriMesh:
    """Immutable triangle mesh in meters.

    Degenerate (zero-area) triangles are dropped on construction; closed meshes are
    re-oriented so the signed volume is positive.
    """

    def __init__(self, vertices, triangles, name: str = "mesh") -> None:
        self.name = name
        v = np.asarray(vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(v) == 0 or len(f) == 0:
            raise GeometryError(name, "empty mesh")
        if not np.all(np.isfinite(v)):
            raise GeometryError(name, "non-finite vertex coordinates")
        if f.min() < 0 or f.max() >= len(v):
            raise GeometryError(name, "triangle index out of range")
        area = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
        f = f[area > AREA_EPS]
        if len(f) == 0:
            raise GeometryError(name, "all triangles are degenerate")
        tm = trimesh.Trimesh(v, f, process=False)
        self.watertight = bool(tm.is_watertight and tm.is_winding_consistent)
        if self.watertight and tm.volume < 0:
            f = f[:, ::-1]
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.triangles = f

    def __repr__(self) -> str:
        return f"TriMesh({self.name!r}, {len(self.vertices)} vertices, {len(self.triangles)} triangles)"

    @property
    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    @functools.cached_property
    def parts(self) -> list[ConvexPart]:
        """Convex decomposition by connected component; each component must be convex."""
        if not self.watertight:
            raise GeometryError(self.name, "mesh is not watertight")
        tm = trimesh.Trimesh(self.vertices, self.triangles, process=False)
        labels = trimesh.graph.connected_component_labels(tm.face_adjacency, node_count=len(tm.faces))
        parts = []
        for lab in np.unique(labels):
            faces = self.triangles[labels == lab]
            idx = np.unique(faces)
            pts = self.vertices[idx]
            try:
                part = ConvexPart.from_points(pts)
            except Exception as exc:  # qhull raises on flat input
                raise GeometryError(self.name, f"component {lab} has no volume") from exc
            a, b, c = (self.vertices[faces[:, i]] for i in range(3))
            vol = abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
            hull_vol = ConvexHull(pts).volume
            if abs(hull_vol - vol) > 1e-6 * hull_vol + 1e-12:
                raise GeometryError(
                    self.name, f"component {lab} is not convex; supply the mesh as convex parts"
                )
            parts.append(part)
        return parts

    @functools.lru_cache(maxsize=4)
    def surface_samples(self, spacing: float = 0.005) -> np.ndarray:
        """All vertices plus a grid on every triangle stepping at most ``spacing`` along both legs."""
        out = [self.vertices]
        for tri in self.triangles:
            p = self.vertices[tri]
            edges = [np.linalg.norm(p[(k + 2) % 3] - p[(k + 1) % 3]) for k in range(3)]
            k = int(np.argmax(edges))  # grid from the corner opposite the longest edge
            a, b, c = p[k], p[(k + 1) % 3], p[(k + 2) % 3]
            n1 = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
            n2 = max(1, int(np.ceil(np.linalg.norm(c - a) / spacing)))
            i, j = np.meshgrid(np.arange(n1 + 1), np.arange(n2 + 1), indexing="ij")
            keep = i * n2 + j * n1 <= n1 * n2
            s = i[keep][:, None] / n1
            t = j[keep][:, None] / n2
            out.append(a + s * (b - a) + t * (c - a))
        pts = np.vstack(out)
        key = np.round(pts / 1e-9).astype(np.int64)
        _, first = np.unique(key, axis=0, return_index=True)
        pts = pts[np.sort(first)]
        pts.setflags(write=False)
        return pts


def box_mesh(extents, name: str = "box", center=(0.0, 0.0, 0.0)) -> TriMesh:
    tm = trimesh.creation.box(extents=extents)
    return TriMesh(tm.vertices + np.asarray(center, dtype=float), tm.faces, name=name)


def merge_meshes(meshes: list[TriMesh], name: str) -> TriMesh:
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.triangles + off)
        off += len(m.vertices)
    return TriMesh(np.vstack(verts), np.vstack(faces), name=name)


def load_mesh(path: str | Path, name: str | None = None) -> TriMesh:
    """Load an ASCII/binary STL or OBJ file (units: meters)."""
    path = Path(path)
    name = name or path.stem
    try:
        tm = trimesh.load(str(path), force="mesh", process=True)
    except Exception as exc:
        raise GeometryError(name, f"cannot read {path}: {exc}") from exc
    if not isinstance(tm, trimesh.Trimesh) or len(tm.faces) == 0:
        raise GeometryError(name, f"no triangles in {path}")
    return TriMesh(np.asarray(tm.vertices), np.asarray(tm.faces), name=name)


def save_obj(mesh: TriMesh, path: str | Path) -> None:
    lines = [f"# {mesh.name}"]
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
