"""Crust contact model: signed separation, classification and contact extraction.

Classification thresholds the exact signed distance between the object and the
environment, which is equivalent to testing the original mesh and its Minkowski
dilation by a ball of radius ``thickness`` for overlap.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import trimesh
from scipy.spatial import ConvexHull, QhullError

from .errors import ContractViolation, GeometryError
from .mesh import ConvexPart, TriMesh, oriented_simplices
from .transforms import Pose

DEFAULT_MU = 0.5
DEFAULT_MAX_CONTACTS = 16
SAMPLE_SPACING = 0.005


class WorldPart(NamedTuple):
    vertices: np.ndarray
    tris: np.ndarray  # (T, 3, 3) triangle corners
    normals: np.ndarray
    offsets: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def world_part(part: ConvexPart, pose: Pose) -> WorldPart:
    v = pose.apply(part.vertices)
    n = part.normals @ pose.rotation.T
    return WorldPart(
        vertices=v,
        tris=v[part.triangles],
        normals=n,
        offsets=part.offsets + n @ pose.translation,
        lo=v.min(axis=0),
        hi=v.max(axis=0),
    )


@dataclass(frozen=True, eq=False)
class Body:
    """A static environment obstacle."""

    mesh: TriMesh
    pose: Pose = field(default_factory=Pose.identity)
    mu: float = DEFAULT_MU
    name: str = ""

    def __post_init__(self) -> None:
        if self.mu < 0:
            raise ValueError(f"friction coefficient must be non-negative, got {self.mu}")
        if not self.name:
            object.__setattr__(self, "name", self.mesh.name)

    @functools.cached_property
    def world_parts(self) -> list[WorldPart]:
        return [world_part(p, self.pose) for p in self.mesh.parts]


def as_bodies(environment) -> list[Body]:
    """Accept ``Body`` objects or ``(TriMesh, Pose)`` pairs."""
    out = []
    for item in environment:
        if isinstance(item, Body):
            out.append(item)
        else:
            mesh, pose = item[0], item[1]
            mu = item[2] if len(item) > 2 else DEFAULT_MU
            out.append(Body(mesh, pose, mu))
    return out


def closest_points_on_triangles(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Closest point on each triangle for each query point.

    ``p`` is (N, 3), ``tris`` is (T, 3, 3); returns (N, T, 3).
    """
    p = p[:, None, :]
    a, b, c = tris[None, :, 0], tris[None, :, 1], tris[None, :, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1 = np.einsum("ntk,ntk->nt", ab, ap)
    d2 = np.einsum("ntk,ntk->nt", ac, ap)
    d3 = np.einsum("ntk,ntk->nt", ab, bp)
    d4 = np.einsum("ntk,ntk->nt", ac, bp)
    d5 = np.einsum("ntk,ntk->nt", ab, cp)
    d6 = np.einsum("ntk,ntk->nt", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.nan_to_num(d1 / (d1 - d3))
        w_ac = np.nan_to_num(d2 / (d2 - d6))
        w_bc = np.nan_to_num((d4 - d3) / ((d4 - d3) + (d5 - d6)))
        denom = va + vb + vc
        v_in = np.nan_to_num(vb / denom)
        w_in = np.nan_to_num(vc / denom)
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    shape = d1.shape + (3,)
    choices = [
        np.broadcast_to(a, shape),
        np.broadcast_to(b, shape),
        a + v_ab[..., None] * ab,
        np.broadcast_to(c, shape),
        a + w_ac[..., None] * ac,
        b + w_bc[..., None] * (c - b),
    ]
    out = a + v_in[..., None] * ab + w_in[..., None] * ac
    for cond, choice in zip(reversed(conds), reversed(choices)):
        out = np.where(cond[..., None], choice, out)
    return out


def pair_signed_distance(A: np.ndarray, B: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed distance between the convex hulls of point sets ``A`` and ``B``.

    Positive values are gaps, negative values are penetration depths (minimum
    translation). The returned unit vector points from ``B`` towards ``A``: moving
    ``A`` along it increases the separation.
    """
    D = (A[:, None, :] - B[None, :, :]).reshape(-1, 3)
    hull = ConvexHull(D)
    eq = hull.equations
    k = int(np.argmax(eq[:, 3]))
    smax = float(eq[k, 3])
    if smax <= 0.0:
        return smax, -eq[k, :3].copy()
    visible = eq[:, 3] > 0.0
    tris = D[hull.simplices[visible]]
    cp = closest_points_on_triangles(np.zeros((1, 3)), tris)[0]
    d = np.linalg.norm(cp, axis=1)
    j = int(np.argmin(d))
    return float(d[j]), cp[j] / d[j]


def _aabb_gap(lo_a, hi_a, lo_b, hi_b) -> float:
    gap = np.maximum(np.maximum(lo_a - hi_b, lo_b - hi_a), 0.0)
    g = float(np.linalg.norm(gap))
    return g if g > 0.0 else -np.inf


class Separation(NamedTuple):
    distance: float
    direction: np.ndarray  # unit, from the environment into the object
    body: int  # index of the closest environment body (-1 if none)


def separation_query(object: TriMesh, object_pose: Pose, environment) -> Separation:
    """Minimum signed separation with direction, using AABB pruning over part pairs."""
    bodies = as_bodies(environment)
    if not bodies:
        raise ContractViolation("environment must contain at least one body")
    try:
        obj_parts = [world_part(p, object_pose) for p in object.parts]
    except QhullError as exc:  # pragma: no cover - parts are validated at load
        raise GeometryError(object.name, str(exc)) from exc
    pairs = []
    for bi, body in enumerate(bodies):
        for ep in body.world_parts:
            for op in obj_parts:
                pairs.append((_aabb_gap(op.lo, op.hi, ep.lo, ep.hi), bi, op, ep))
    pairs.sort(key=lambda x: x[0])
    best = Separation(np.inf, np.array([0.0, 0.0, 1.0]), -1)
    for bound, bi, op, ep in pairs:
        if bound >= best.distance:
            break
        d, n = pair_signed_distance(op.vertices, ep.vertices)
        if d < best.distance:
            best = Separation(d, n, bi)
    return best


def signed_separation(object: TriMesh, object_pose: Pose, environment) -> float:
    """Minimum signed separation (m) between the object and any environment body."""
    return separation_query(object, object_pose, environment).distance


class ContactState(enum.Enum):
    FREE = "free"
    CONTACT = "contact"
    COLLISION = "collision"


@dataclass(frozen=True)
class ContactClassification:
    state: ContactState
    min_separation: float


def classify_separation(distance: float, thickness: float) -> ContactState:
    if distance <= 0.0:
        return ContactState.COLLISION
    if distance <= thickness:
        return ContactState.CONTACT
    return ContactState.FREE


def classify(object: TriMesh, object_pose: Pose, environment, thickness: float) -> ContactClassification:
    if thickness < 0:
        raise ValueError(f"thickness must be non-negative, got {thickness}")
    d = signed_separation(object, object_pose, environment)
    return ContactClassification(classify_separation(d, thickness), d)


@dataclass(frozen=True, eq=False)
class ContactSet:
    """Contact points on the object surface (world frame) with environment normals."""

    points: np.ndarray
    normals: np.ndarray
    mu: np.ndarray
    distances: np.ndarray
    bodies: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> ContactSet:
        z = np.zeros((0, 3))
        return cls(z, z.copy(), np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def from_arrays(cls, points, normals, mu) -> ContactSet:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (len(points),)).copy()
        return cls(points, normals, mu, np.zeros(len(points)), np.zeros(len(points), dtype=int))

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "normals": self.normals.tolist(),
            "mu": self.mu.tolist(),
            "distances": self.distances.tolist(),
            "bodies": self.bodies.tolist(),
        }


def _point_distances(points: np.ndarray, part: WorldPart) -> tuple[np.ndarray, np.ndarray]:
    """Exact distance and outward unit direction from a convex part to each point."""
    h = points @ part.normals.T - part.offsets
    k = np.argmax(h, axis=1)
    hmax = h[np.arange(len(points)), k]
    dist = hmax.copy()
    dirs = part.normals[k].copy()
    # projection onto the nearest facet plane stays inside the part: plane distance is exact
    proj = points - hmax[:, None] * dirs
    on_face = np.all(proj @ part.normals.T - part.offsets <= 1e-12, axis=1)
    out = (hmax > 0.0) & ~on_face
    if np.any(out):
        cp = closest_points_on_triangles(points[out], part.tris)
        diff = points[out][:, None, :] - cp
        d = np.linalg.norm(diff, axis=2)
        j = np.argmin(d, axis=1)
        rows = np.arange(len(j))
        dmin = d[rows, j]
        dist[out] = dmin
        good = dmin > 1e-12
        sub = dirs[out]
        sub[good] = diff[rows, j][good] / dmin[good][:, None]
        dirs[out] = sub
    return dist, dirs


def _extreme_indices(P: np.ndarray) -> list[int]:
    """Indices of the extreme points of a (possibly flat or collinear) point patch."""
    n = len(P)
    if n <= 2:
        return list(range(n))
    stride = max(1, n // 2000)
    c = P[::stride].mean(axis=0)
    _, _, Vt = np.linalg.svd(P[::stride] - c, full_matrices=False)
    Y = (P - c) @ Vt.T
    extent = np.ptp(Y, axis=0)
    if extent[0] < 1e-9:
        return [0]
    if extent[1] < 1e-6:
        return sorted({int(np.argmin(Y[:, 0])), int(np.argmax(Y[:, 0]))})
    try:
        if extent[2] < 1e-6:
            verts = list(ConvexHull(Y[:, :2]).vertices)
            # drop hull vertices that sit on a straight run of the boundary
            keep = []
            m = len(verts)
            for i in range(m):
                a, b, cc = Y[verts[i - 1], :2], Y[verts[i], :2], Y[verts[(i + 1) % m], :2]
                e = cc - a
                L = np.linalg.norm(e)
                off = abs(e[0] * (b - a)[1] - e[1] * (b - a)[0]) / L if L > 0 else 0.0
                if off > 1e-7:
                    keep.append(int(verts[i]))
            return sorted(keep) if keep else [int(v) for v in verts]
        return sorted(int(v) for v in ConvexHull(Y).vertices)
    except QhullError:
        return sorted({int(np.argmin(Y[:, 0])), int(np.argmax(Y[:, 0]))})


def _voxel_representatives(P: np.ndarray, k: int, cells_per_axis: int = 24) -> np.ndarray:
    """First point (by index) in each voxel of a grid sized to the patch extent."""
    extent = float(np.ptp(P, axis=0).max()) if len(P) else 0.0
    if len(P) <= 4 * k * cells_per_axis or extent <= 0.0:
        return np.arange(len(P))
    cell = np.floor((P - P.min(axis=0)) / (extent / cells_per_axis)).astype(np.int64)
    m = cells_per_axis + 1
    key = (cell[:, 0] * m + cell[:, 1]) * m + cell[:, 2]
    _, first = np.unique(key, return_index=True)
    return np.sort(first)


def farthest_point_order(P: np.ndarray, seeds: list[int], k: int) -> list[int]:
    """Greedy farthest-point selection continuing from ``seeds`` up to ``k`` points."""
    chosen = list(seeds)
    if not chosen:
        chosen = [0]
    d = np.min(np.linalg.norm(P[:, None, :] - P[chosen][None], axis=2), axis=1)
    while len(chosen) < min(k, len(P)):
        j = int(np.argmax(d))
        if d[j] <= 1e-9:
            break
        chosen.append(j)
        d = np.minimum(d, np.linalg.norm(P - P[j], axis=1))
    return chosen


def extract_contacts(
    object: TriMesh,
    object_pose: Pose,
    environment,
    thickness: float,
    mu: float | None = None,
    max_points: int = DEFAULT_MAX_CONTACTS,
    spacing: float = SAMPLE_SPACING,
    check_state: bool = True,
) -> ContactSet:
    """Representative contact points of the object within ``thickness`` of the environment.

    Candidates are the object's surface samples (all vertices plus a grid of at most
    ``spacing``) whose distance to an environment body is at most ``thickness``. The
    extreme points of every body's contact patch are kept first; the remaining slots are
    filled by farthest-point sampling. ``mu`` overrides the per-body friction.
    """
    bodies = as_bodies(environment)
    if check_state:
        cls = classify(object, object_pose, bodies, thickness)
        if cls.state is not ContactState.CONTACT:
            raise ContractViolation(f"extract_contacts requires a Contact state, got {cls.state.value}")
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    samples = object_pose.apply(object.surface_samples(spacing))
    obj_v = object_pose.apply(object.vertices)
    lo_o, hi_o = obj_v.min(axis=0), obj_v.max(axis=0)
    idx, nrm, dst, bid = [], [], [], []
    for bi, body in enumerate(bodies):
        for part in body.world_parts:
            if np.any(part.lo - thickness > hi_o) or np.any(part.hi + thickness < lo_o):
                continue
            lo, hi = part.lo - thickness, part.hi + thickness
            inbox = np.flatnonzero(np.all((samples >= lo) & (samples <= hi), axis=1))
            if len(inbox) == 0:
                continue
            h = np.max(samples[inbox] @ part.normals.T - part.offsets, axis=1)
            inbox = inbox[h <= thickness]
            if len(inbox) == 0:
                continue
            d, n = _point_distances(samples[inbox], part)
            ok = d <= thickness
            idx.append(inbox[ok])
            nrm.append(n[ok])
            dst.append(d[ok])
            bid.append(np.full(int(ok.sum()), bi))
    if not idx or sum(len(i) for i in idx) == 0:
        return ContactSet.empty()
    I = np.concatenate(idx)
    N = np.vstack(nrm)
    Dd = np.concatenate(dst)
    B = np.concatenate(bid)
    if len(idx) > 1:
        # a sample near several parts keeps its closest feature
        order = np.lexsort((Dd, I))
        first = np.ones(len(order), dtype=bool)
        first[1:] = I[order][1:] != I[order][:-1]
        keep = np.sort(order[first])
        I, N, Dd, B = I[keep], N[keep], Dd[keep], B[keep]
    P = samples[I]

    seeds: list[int] = []
    for bi in np.unique(B):
        idx = np.flatnonzero(B == bi)
        seeds.extend(int(idx[i]) for i in _extreme_indices(P[idx]))
    if len(seeds) > max_points:
        sub = farthest_point_order(P[seeds], [0], max_points)
        chosen = np.array([seeds[i] for i in sub])
    else:
        pool = np.union1d(_voxel_representatives(P, max_points), seeds)
        local = farthest_point_order(P[pool], [int(np.searchsorted(pool, s)) for s in seeds], max_points)
        chosen = pool[local]
    mus = np.array([bodies[b].mu for b in B[chosen]]) if mu is None else np.full(len(chosen), float(mu))
    return ContactSet(P[chosen], N[chosen], mus, Dd[chosen], B[chosen])


@functools.lru_cache(maxsize=4)
def _sphere_directions(subdivisions: int) -> np.ndarray:
    v = trimesh.creation.icosphere(subdivisions=subdivisions).vertices
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def emit_crust_mesh(object: TriMesh, thickness: float, subdivisions: int = 2) -> TriMesh:
    """Dilated copy of the object (debug/visual output only; never used to classify)."""
    if thickness <= 0:
        raise ValueError("crust thickness must be positive")
    if not object.watertight:
        raise GeometryError(object.name, "crust requires a watertight mesh")
    dirs = _sphere_directions(subdivisions)
    verts, faces, off = [], [], 0
    for part in object.parts:
        pts = (part.vertices[:, None, :] + thickness * dirs[None]).reshape(-1, 3)
        hull = ConvexHull(pts)
        used = np.unique(hull.simplices)
        remap = np.full(len(pts), -1)
        remap[used] = np.arange(len(used))
        verts.append(pts[used])
        faces.append(remap[oriented_simplices(hull)] + off)
        off += len(used)
    return TriMesh(np.vstack(verts), np.vstack(faces), name=f"{object.name}_crust")
