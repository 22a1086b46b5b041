"""RRT over object poses that stays inside the crust contact band.

Every accepted node is in contact under its crust thickness and needs a hand force
below the payload. The grasp is rigid, so the hand pose is always the object pose
composed with the grasp offset.
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .contact import (
    DEFAULT_MAX_CONTACTS,
    Body,
    ContactSet,
    ContactState,
    as_bodies,
    classify,
    classify_separation,
    extract_contacts,
    separation_query,
    signed_separation,
)
from .errors import ConfigError, NoFeasibleGrasp, NoSolution, PlanFailure
from .kinematics import KinematicModel, crust_thickness, ik_solve
from .mesh import TriMesh
from .quasistatics import GravityLoad, HandForceSolution, build_cones, solve_min_hand_force
from .transforms import Pose, angle_between, interpolate, orthonormalize

logger = logging.getLogger(__name__)

BISECTION_STEPS = 32
GOAL_IK_RESTARTS = 20


@dataclass(frozen=True)
class GraspCandidate:
    id: str
    pose: Pose  # hand pose in the object frame

    def to_dict(self) -> dict:
        return {"id": self.id, "pose": self.pose.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> GraspCandidate:
        return cls(str(d["id"]), Pose.from_dict(d["pose"]))


def load_grasps(path: str | Path) -> list[GraspCandidate]:
    try:
        data = json.loads(Path(path).read_text())
        grasps = [GraspCandidate.from_dict(d) for d in data]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read grasp file {path}: {exc}") from exc
    ids = [g.id for g in grasps]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate grasp identifiers in {path}")
    return grasps


@dataclass
class PlannerParams:
    """RRT settings. ``thickness`` is ``"dynamic"`` or a fixed crust thickness in meters."""

    max_iterations: int = 10000
    smoothing_iterations: int = 350
    max_time: float = 100.0
    goal_bias: float = 0.1
    step_translation: float = 0.05
    step_rotation: float = 0.1
    seed: int = 0
    thickness: str | float = "dynamic"
    rot_weight: float = 1.0
    rotation_spread: float = math.pi
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    bounds_margin: float = 0.25
    goal_radius: tuple[float, float] | None = None  # (m, rad); None means one steering step
    max_contacts: int = DEFAULT_MAX_CONTACTS
    cone_edges: int = 8
    eps_p: float = 0.005
    eps_r: float = math.radians(2.0)
    ik_restarts: int = 2
    ik_steps: int = 60
    locked_joints: tuple[int, ...] = (1, 2)

    def __post_init__(self) -> None:
        positive = {
            "max_iterations": self.max_iterations,
            "max_time": self.max_time,
            "step_translation": self.step_translation,
            "step_rotation": self.step_rotation,
            "rot_weight": self.rot_weight,
            "eps_p": self.eps_p,
            "eps_r": self.eps_r,
        }
        for name, v in positive.items():
            if not v > 0:
                raise ConfigError(f"planner parameter {name} must be positive, got {v}")
        if self.smoothing_iterations < 0:
            raise ConfigError("smoothing_iterations must be non-negative")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ConfigError(f"goal_bias must lie in [0, 1], got {self.goal_bias}")
        if self.thickness != "dynamic":
            try:
                self.thickness = float(self.thickness)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"thickness must be 'dynamic' or a number, got {self.thickness!r}") from exc
            if self.thickness < 0:
                raise ConfigError("fixed thickness must be non-negative")

    @property
    def policy_name(self) -> str:
        return "dynamic" if self.thickness == "dynamic" else f"fixed_{self.thickness:g}"

    @classmethod
    def from_dict(cls, d: dict) -> PlannerParams:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown planner parameters: {sorted(unknown)}")
        d = dict(d)
        if "step_rotation_deg" in d:
            raise ConfigError("use step_rotation in radians")
        for key in ("bounds", "goal_radius", "locked_joints"):
            if key in d and d[key] is not None:
                d[key] = tuple(tuple(x) if isinstance(x, list) else x for x in d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PlanNode:
    object_pose: Pose
    hand_pose: Pose
    solution: HandForceSolution
    thickness: float
    parent: int = -1
    q: np.ndarray | None = None

    def to_dict(self, t: int) -> dict:
        return {
            "t": t,
            "object_pose": self.object_pose.to_dict(),
            "hand_pose": self.hand_pose.to_dict(),
            "F_h": self.solution.F_h.tolist(),
            "thickness": self.thickness,
        }


@dataclass
class ObjectPath:
    nodes: list[PlanNode]
    grasp: GraspCandidate
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def object_poses(self) -> list[Pose]:
        return [n.object_pose for n in self.nodes]

    def translation_length(self) -> float:
        p = np.array([n.object_pose.translation for n in self.nodes])
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0

    def to_dict(self) -> dict:
        return {"grasp": self.grasp.to_dict(), "nodes": [n.to_dict(t + 1) for t, n in enumerate(self.nodes)]}


def path_nodes_from_dict(d: dict) -> tuple[GraspCandidate, list[dict]]:
    """Grasp and raw node records of a path JSON document."""
    grasp = GraspCandidate.from_dict(d["grasp"])
    nodes = []
    for rec in d["nodes"]:
        nodes.append(
            {
                "object_pose": Pose.from_dict(rec["object_pose"]),
                "hand_pose": Pose.from_dict(rec["hand_pose"]),
                "F_h": np.asarray(rec["F_h"], dtype=float),
                "thickness": float(rec["thickness"]),
            }
        )
    return grasp, nodes


def _random_rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = max_angle * rng.random() ** (1.0 / 3.0) if max_angle < math.pi else None
    if angle is None:
        return Rotation.random(random_state=rng).as_matrix()
    return Rotation.from_rotvec(axis * angle).as_matrix()


def steer(a: Pose, b: Pose, step_t: float, step_r: float) -> Pose:
    """Move from ``a`` toward ``b`` by at most ``step_t`` meters and ``step_r`` radians."""
    dt = float(np.linalg.norm(b.translation - a.translation))
    dr = angle_between(a.rotation, b.rotation)
    s = 1.0
    if dt > step_t:
        s = min(s, step_t / dt)
    if dr > step_r:
        s = min(s, step_r / dr)
    return interpolate(a, b, s)


class _Context:
    """Everything one plan() call needs, with the node checks shared by planner and validator."""

    def __init__(self, scene, object: TriMesh, grasp, load, model, params, F_max):
        self.env: list[Body] = as_bodies(scene)
        self.object = object
        self.grasp = grasp
        self.load = load
        self.model = model
        self.params = params
        self.F_max = F_max

    def hand_pose(self, pose: Pose) -> Pose:
        return pose @ self.grasp.pose

    def solve_ik(self, pose: Pose, seed: np.ndarray, restarts: int | None = None) -> np.ndarray | None:
        p = self.params
        try:
            return ik_solve(
                self.model,
                self.hand_pose(pose),
                seed,
                eps_p=p.eps_p,
                eps_r=p.eps_r,
                restarts=p.ik_restarts if restarts is None else restarts,
                steps=p.ik_steps,
                rng=0,
            )
        except NoSolution:
            return None

    def thickness_at(self, q: np.ndarray) -> float:
        if self.params.thickness == "dynamic":
            return crust_thickness(self.model, q)
        return float(self.params.thickness)

    def force_check(self, pose: Pose, thickness: float, allow_free: bool = False):
        """Returns (cause, solution); cause is None when the pose passes both constraints."""
        cls = classify(self.object, pose, self.env, thickness)
        if cls.state is ContactState.COLLISION:
            return "collision", None
        if cls.state is ContactState.FREE:
            if not allow_free:
                return "free", None
            contacts = ContactSet.empty()
        else:
            contacts = extract_contacts(
                self.object, pose, self.env, thickness, max_points=self.params.max_contacts, check_state=False
            )
        cones = build_cones(contacts, self.params.cone_edges) if len(contacts) else None
        sol = solve_min_hand_force(
            contacts, cones, self.load, self.hand_pose(pose).translation, self.F_max, object_pose=pose
        )
        if not sol.balanced:
            return "unbalanced", sol
        if not sol.feasible:
            return "payload", sol
        return None, sol

    def make_node(self, pose: Pose, seed_q, parent: int, allow_free=False, ik_restarts=None):
        """Full check of an exact pose (no projection). Returns (node, cause)."""
        q = self.solve_ik(pose, seed_q, ik_restarts)
        if q is None:
            return None, "ik"
        t = self.thickness_at(q)
        cause, sol = self.force_check(pose, t, allow_free=allow_free)
        if cause:
            return None, cause
        return PlanNode(pose, self.hand_pose(pose), sol, t, parent, q), None

    def midpoint_ok(self, a: PlanNode, b: PlanNode) -> str | None:
        mid = interpolate(a.object_pose, b.object_pose, 0.5)
        cause, _ = self.force_check(mid, min(a.thickness, b.thickness))
        return cause

    def project(self, pose: Pose, thickness: float) -> Pose | None:
        """Translate ``pose`` along the separation direction until it lies in the band."""
        sep = separation_query(self.object, pose, self.env)
        state = classify_separation(sep.distance, thickness)
        if state is ContactState.CONTACT:
            return pose
        if thickness <= 0.0:
            return None
        u = sep.direction
        if state is ContactState.FREE:
            # alpha = 0 is free, alpha = distance reaches the surface
            u = -u
            free_a, coll_a = 0.0, sep.distance
        else:
            coll_a, free_a = 0.0, -sep.distance + thickness
        guess = (-sep.distance + 0.5 * thickness) if state is ContactState.COLLISION else sep.distance - 0.5 * thickness
        for k in range(BISECTION_STEPS):
            a = guess if k == 0 else 0.5 * (free_a + coll_a)
            cand = pose.translated(a * u)
            st = classify_separation(signed_separation(self.object, cand, self.env), thickness)
            if st is ContactState.CONTACT:
                return cand
            if st is ContactState.COLLISION:
                coll_a = a
            else:
                free_a = a
        return None


def _stats_template() -> dict:
    return {"iterations": 0, "nodes": 0, "rejections": {}, "thickness_min": None, "thickness_max": None}


def sample_contact_pose(
    current: PlanNode,
    ctx: _Context,
    rng: np.random.Generator,
    target: Pose | None = None,
) -> tuple[PlanNode | None, str | None]:
    """Perturb ``current`` toward ``target`` (random when None) and project into the band.

    The crust thickness used for projection comes from an IK estimate at the perturbed
    pose seeded with the parent's configuration; after projection IK is re-solved and
    the node is accepted only if it is in contact under the recomputed thickness and
    the hand force is feasible. Returns ``(node, None)`` or ``(None, cause)``.
    """
    p = ctx.params
    if target is None:
        R = _random_rotation(rng, p.step_rotation) @ current.object_pose.rotation
        d = rng.normal(size=3)
        d *= p.step_translation * 0.5 * rng.random() / max(np.linalg.norm(d), 1e-12)
        target = Pose(orthonormalize(R), current.object_pose.translation + d)
    cand = steer(current.object_pose, target, 0.5 * p.step_translation, p.step_rotation)
    q_est = ctx.solve_ik(cand, current.q)
    if q_est is None:
        return None, "ik"
    t_est = ctx.thickness_at(q_est)
    proj = ctx.project(cand, t_est)
    if proj is None:
        return None, "projection"
    if np.linalg.norm(proj.translation - current.object_pose.translation) > p.step_translation:
        return None, "step"
    node, cause = ctx.make_node(proj, q_est, -1)
    return node, cause


class _Tree:
    def __init__(self, rot_weight: float) -> None:
        self.nodes: list[PlanNode] = []
        self._p: list[np.ndarray] = []
        self._R: list[np.ndarray] = []
        self.w = rot_weight

    def add(self, node: PlanNode) -> int:
        self.nodes.append(node)
        self._p.append(node.object_pose.translation)
        self._R.append(node.object_pose.rotation)
        return len(self.nodes) - 1

    def nearest(self, pose: Pose) -> int:
        P = np.asarray(self._p)
        R = np.asarray(self._R)
        dt = np.linalg.norm(P - pose.translation, axis=1)
        c = (np.einsum("nij,ij->n", R, pose.rotation) - 1.0) * 0.5
        dr = np.arccos(np.clip(c, -1.0, 1.0))
        return int(np.argmin(dt + self.w * dr))

    def path_to(self, i: int) -> list[PlanNode]:
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.nodes[i].parent
        return out[::-1]


def _with_parent(node: PlanNode, parent: int) -> PlanNode:
    return PlanNode(node.object_pose, node.hand_pose, node.solution, node.thickness, parent, node.q)


def _close(a: Pose, b: Pose, tol: tuple[float, float]) -> bool:
    return (
        float(np.linalg.norm(a.translation - b.translation)) <= tol[0] and angle_between(a.rotation, b.rotation) <= tol[1]
    )


def plan(
    scene,
    object: TriMesh,
    grasp: GraspCandidate,
    load: GravityLoad,
    start: Pose,
    goal: Pose,
    model: KinematicModel,
    params: PlannerParams,
    q_init=None,
    F_max: float | None = None,
) -> ObjectPath:
    """Plan an object path from ``start`` to ``goal`` that keeps contact and payload feasibility.

    ``q_init`` seeds IK at the start and fixes the locked base joints. Raises
    ``PlanFailure`` with cause ``timeout``, ``iterations``, ``start_invalid`` or
    ``goal_invalid``.
    """
    t0 = time.perf_counter()
    F_max = model.max_hand_force if F_max is None else F_max
    q_init = np.zeros(model.dof) if q_init is None else np.asarray(q_init, dtype=float)
    plan_model = model.locked_at(q_init, params.locked_joints) if params.locked_joints else model
    ctx = _Context(scene, object, grasp, load, plan_model, params, F_max)
    rng = np.random.default_rng(params.seed)
    stats = _stats_template()
    rejections: Counter = Counter()

    def finish(nodes: list[PlanNode]) -> ObjectPath:
        ts = [n.thickness for n in nodes]
        stats.update(
            nodes=len(tree.nodes),
            rejections=dict(sorted(rejections.items())),
            thickness_min=min(ts),
            thickness_max=max(ts),
            path_nodes=len(nodes),
            planning_time_s=time.perf_counter() - t0,
        )
        return ObjectPath(nodes, grasp, stats)

    def fail(cause: str) -> PlanFailure:
        stats.update(
            nodes=len(tree.nodes) if tree else 0,
            rejections=dict(sorted(rejections.items())),
            planning_time_s=time.perf_counter() - t0,
        )
        return PlanFailure(cause, stats)

    tree = _Tree(params.rot_weight)
    start_node, cause = ctx.make_node(start, q_init, -1, allow_free=True, ik_restarts=GOAL_IK_RESTARTS)
    if start_node is None:
        stats["start_cause"] = cause
        raise fail("start_invalid")
    tree.add(start_node)
    if _close(start, goal, (1e-12, 1e-12)):
        return finish([start_node])
    goal_node, cause = ctx.make_node(goal, start_node.q, -1, allow_free=True, ik_restarts=GOAL_IK_RESTARTS)
    if goal_node is None:
        stats["goal_cause"] = cause
        raise fail("goal_invalid")

    if params.bounds is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in params.bounds)
    else:
        both = np.vstack([start.translation, goal.translation])
        lo, hi = both.min(axis=0) - params.bounds_margin, both.max(axis=0) + params.bounds_margin

    radius = params.goal_radius or (params.step_translation, params.step_rotation)
    found = -1
    for it in range(params.max_iterations):
        stats["iterations"] = it + 1
        if time.perf_counter() - t0 > params.max_time:
            raise fail("timeout")
        if rng.random() < params.goal_bias:
            target = goal
        else:
            u = rng.random()
            base = interpolate(start, goal, u).rotation
            R = orthonormalize(_random_rotation(rng, params.rotation_spread) @ base)
            target = Pose(R, rng.uniform(lo, hi))
        i_near = tree.nearest(target)
        near = tree.nodes[i_near]
        node, cause = sample_contact_pose(near, ctx, rng, target)
        if node is None:
            rejections[cause] += 1
            continue
        if angle_between(node.object_pose.rotation, near.object_pose.rotation) > params.step_rotation + 1e-12:
            rejections["step"] += 1
            continue
        mid = ctx.midpoint_ok(near, node)
        if mid:
            rejections["midpoint_" + mid] += 1
            continue
        i_new = tree.add(_with_parent(node, i_near))
        if _close(node.object_pose, goal, radius):
            # direct connection to the (already validated) goal node
            if _close(node.object_pose, goal, (1e-12, 1e-12)):
                found = i_new
                break
            mid = ctx.midpoint_ok(tree.nodes[i_new], goal_node)
            if mid:
                rejections["goal_midpoint_" + mid] += 1
                continue
            found = tree.add(_with_parent(goal_node, i_new))
            break
    if found < 0:
        raise fail("iterations")
    nodes = tree.path_to(found)
    nodes = _smooth(nodes, ctx, rng, params, t0, stats)
    return finish(nodes)


def _smooth(nodes: list[PlanNode], ctx: _Context, rng, params: PlannerParams, t0: float, stats: dict) -> list[PlanNode]:
    """Shortcut smoothing; every shortcut is re-validated node by node and at midpoints."""
    accepted = 0
    t_cap = max(n.thickness for n in nodes)
    for _ in range(params.smoothing_iterations):
        if len(nodes) < 3 or time.perf_counter() - t0 > params.max_time:
            break
        i, j = sorted(rng.choice(len(nodes), size=2, replace=False))
        if j - i < 2:
            continue
        a, b = nodes[i].object_pose, nodes[j].object_pose
        dt = float(np.linalg.norm(b.translation - a.translation))
        dr = angle_between(a.rotation, b.rotation)
        n_seg = max(1, math.ceil(max(dt / params.step_translation, dr / params.step_rotation) - 1e-9))
        if n_seg - 1 >= j - i - 1:
            continue
        poses = [interpolate(a, b, k / n_seg) for k in range(1, n_seg)]
        # cheap screen before any IK: the shortcut must stay in the band of the thickest node
        if any(
            classify(ctx.object, p, ctx.env, t_cap).state is not ContactState.CONTACT for p in poses
        ):
            continue
        new, prev, ok = [], nodes[i], True
        for p in poses:
            node, _ = ctx.make_node(p, prev.q, -1)
            if node is None or ctx.midpoint_ok(prev, node):
                ok = False
                break
            new.append(node)
            prev = node
        if not ok or ctx.midpoint_ok(prev, nodes[j]):
            continue
        nodes = nodes[: i + 1] + new + nodes[j:]
        accepted += 1
    stats["smoothing_accepted"] = accepted
    return nodes


def filter_grasps(
    candidates: Sequence[GraspCandidate],
    start: Pose,
    goal: Pose,
    model: KinematicModel,
    scene,
    hand_mesh: TriMesh | None = None,
    eps_p: float = 0.005,
    eps_r: float = math.radians(2.0),
    q_seed=None,
    ik_restarts: int = 20,
    locked_joints: Sequence[int] = (1, 2),
) -> list[GraspCandidate]:
    """Grasps whose hand is collision-free and IK-reachable at both the start and goal poses.

    The input order is kept. Raises ``NoFeasibleGrasp`` when nothing survives.
    """
    if not candidates:
        raise ValueError("grasp candidate set is empty")
    env = as_bodies(scene)
    q_seed = np.zeros(model.dof) if q_seed is None else np.asarray(q_seed, dtype=float)
    m = model.locked_at(q_seed, locked_joints) if locked_joints else model
    keep = []
    for g in candidates:
        ok = True
        q = q_seed
        for obj_pose in (start, goal):
            hand = obj_pose @ g.pose
            if hand_mesh is not None and signed_separation(hand_mesh, hand, env) <= 0.0:
                logger.info("grasp %s collides at %s", g.id, "start" if obj_pose is start else "goal")
                ok = False
                break
            try:
                q = ik_solve(m, hand, q, eps_p=eps_p, eps_r=eps_r, restarts=ik_restarts, rng=0)
            except NoSolution:
                logger.info("grasp %s unreachable", g.id)
                ok = False
                break
        if ok:
            keep.append(g)
    if not keep:
        raise NoFeasibleGrasp("no grasp candidate is collision-free and reachable at start and goal")
    return keep


@dataclass
class PathViolation:
    index: int
    location: str  # "node" | "midpoint"
    kind: str
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PathReport:
    violations: list[PathViolation]
    max_hand_force: float
    nodes: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "nodes": self.nodes,
            "max_hand_force": self.max_hand_force,
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_path(
    path: ObjectPath | dict,
    scene,
    object: TriMesh,
    load: GravityLoad,
    F_max: float,
    max_contacts: int = DEFAULT_MAX_CONTACTS,
    cone_edges: int = 8,
) -> PathReport:
    """Independent re-check of a path: contact and hand force at every node and segment midpoint.

    Nodes use their recorded thickness; a midpoint uses the smaller thickness of its two
    endpoints. The first and last node may be free when the object balances on the hand
    alone within ``F_max``.
    """
    if isinstance(path, ObjectPath):
        grasp = path.grasp
        recs = [{"object_pose": n.object_pose, "hand_pose": n.hand_pose, "thickness": n.thickness} for n in path.nodes]
    else:
        grasp, recs = path_nodes_from_dict(path)
    if not recs:
        raise ValueError("path is empty")
    env = as_bodies(scene)
    violations: list[PathViolation] = []
    peak = 0.0

    def check(pose: Pose, thickness: float, index: int, location: str, allow_free: bool) -> None:
        nonlocal peak
        cls = classify(object, pose, env, thickness)
        if cls.state is ContactState.COLLISION:
            violations.append(PathViolation(index, location, "collision", f"separation {cls.min_separation:.3e}"))
            return
        if cls.state is ContactState.FREE and not allow_free:
            violations.append(PathViolation(index, location, "free", f"separation {cls.min_separation:.3e}"))
            return
        if cls.state is ContactState.CONTACT:
            contacts = extract_contacts(object, pose, env, thickness, max_points=max_contacts, check_state=False)
        else:
            contacts = ContactSet.empty()
        cones = build_cones(contacts, cone_edges) if len(contacts) else None
        r_h = (pose @ grasp.pose).translation
        sol = solve_min_hand_force(contacts, cones, load, r_h, F_max, object_pose=pose)
        peak = max(peak, sol.magnitude)
        if not sol.balanced:
            violations.append(PathViolation(index, location, "unbalanced"))
        elif not sol.feasible:
            violations.append(PathViolation(index, location, "force", f"|F_h| = {sol.magnitude:.4f} N"))

    last = len(recs) - 1
    for k, rec in enumerate(recs):
        expected = rec["object_pose"] @ grasp.pose
        if not (
            np.array_equal(expected.rotation, rec["hand_pose"].rotation)
            and np.array_equal(expected.translation, rec["hand_pose"].translation)
        ):
            err = float(np.linalg.norm(expected.translation - rec["hand_pose"].translation))
            if err > 1e-12 or angle_between(expected.rotation, rec["hand_pose"].rotation) > 1e-12:
                violations.append(PathViolation(k, "node", "hand_pose", f"offset error {err:.3e}"))
        check(rec["object_pose"], rec["thickness"], k, "node", allow_free=k in (0, last))
        if k < last:
            nxt = recs[k + 1]
            mid = interpolate(rec["object_pose"], nxt["object_pose"], 0.5)
            check(mid, min(rec["thickness"], nxt["thickness"]), k, "midpoint", allow_free=False)
    return PathReport(violations, peak, len(recs))


def save_path(path: ObjectPath, file: str | Path) -> None:
    Path(file).write_text(json.dumps(path.to_dict(), indent=2) + "\n")
