"""Serial-chain model of a mobile manipulator.

Joint 0 is the base translation along x, joints 1 and 2 the base y translation and yaw,
the remaining joints the arm. Each joint carries an explicit fixed transform from its
parent frame, so the base and the arm share one representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, NoSolution
from .transforms import Pose, rotation_angle, rotation_log, skew

GRAVITY = 9.80665


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    type: str  # "revolute" | "prismatic"
    axis: np.ndarray
    origin: Pose
    lower: float
    upper: float
    effort_lower: float
    effort_upper: float

    def __post_init__(self) -> None:
        if self.type not in ("revolute", "prismatic"):
            raise ConfigError(f"joint {self.name}: unknown type {self.type!r}")
        axis = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ConfigError(f"joint {self.name}: axis must be unit length")
        if self.lower > self.upper or self.effort_lower > self.effort_upper:
            raise ConfigError(f"joint {self.name}: limits are inverted")
        object.__setattr__(self, "axis", axis)
        K = skew(axis)
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_K2", K @ K)

    @property
    def locked(self) -> bool:
        return self.lower == self.upper

    def motion(self, value: float) -> tuple[np.ndarray, np.ndarray]:
        if self.type == "revolute":
            R = np.eye(3) + math.sin(value) * self._K + (1.0 - math.cos(value)) * self._K2
            return R, np.zeros(3)
        return np.eye(3), self.axis * value


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Immutable robot description.

    ``base_pivot`` is expressed in the child frame of joint ``base_frame_joint`` (the
    mobile base frame); ``compliance`` holds the virtual-joint rotation ranges
    (x, y) in radians; ``max_hand_force`` is the payload cap in newtons.
    """

    joints: tuple[Joint, ...]
    tcp: Pose = field(default_factory=Pose.identity)
    base_frame_joint: int = 2
    base_pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    compliance: tuple[float, float] = (0.0, 0.0)
    max_hand_force: float = np.inf
    name: str = "robot"

    def __post_init__(self) -> None:
        if len(self.joints) < 1:
            raise ConfigError("a kinematic model needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "base_pivot", np.asarray(self.base_pivot, dtype=float))
        object.__setattr__(self, "lower", np.array([j.lower for j in self.joints]))
        object.__setattr__(self, "upper", np.array([j.upper for j in self.joints]))
        object.__setattr__(self, "effort_lower", np.array([j.effort_lower for j in self.joints]))
        object.__setattr__(self, "effort_upper", np.array([j.effort_upper for j in self.joints]))
        object.__setattr__(self, "locked_mask", np.array([j.locked for j in self.joints]))
        object.__setattr__(self, "revolute_mask", np.array([j.type == "revolute" for j in self.joints]))

    @property
    def dof(self) -> int:
        return len(self.joints)

    def within_limits(self, q: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clip(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def with_limits(self, overrides: dict[int, tuple[float, float]]) -> KinematicModel:
        """Copy with some position limits replaced; equal bounds lock a joint."""
        joints = list(self.joints)
        for k, (lo, hi) in overrides.items():
            joints[k] = replace(joints[k], lower=float(lo), upper=float(hi))
        return replace(self, joints=tuple(joints))

    def locked_at(self, q: np.ndarray, indices: Sequence[int]) -> KinematicModel:
        return self.with_limits({k: (q[k], q[k]) for k in indices})

    def _check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint values, got shape {q.shape}")
        return q

    def chain(self, q) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """World joint positions and axes, TCP (R, p), and the mobile base frame (R, p)."""
        q = self._check(q)
        R = np.eye(3)
        p = np.zeros(3)
        pos = np.empty((self.dof, 3))
        axes = np.empty((self.dof, 3))
        base_R, base_p = R, p
        for k, j in enumerate(self.joints):
            p = R @ j.origin.translation + p
            R = R @ j.origin.rotation
            pos[k] = p
            axes[k] = R @ j.axis
            dR, dp = j.motion(q[k])
            p = R @ dp + p
            R = R @ dR
            if k == self.base_frame_joint:
                base_R, base_p = R, p
        tcp_p = R @ self.tcp.translation + p
        tcp_R = R @ self.tcp.rotation
        return pos, axes, (tcp_R, tcp_p), (base_R, base_p)

    @classmethod
    def from_dict(cls, d: dict) -> KinematicModel:
        try:
            joints = []
            for jd in d["joints"]:
                lim = jd.get("limits", [-np.inf, np.inf])
                eff = jd.get("effort", [-np.inf, np.inf])
                if np.isscalar(eff):
                    eff = [-float(eff), float(eff)]
                joints.append(
                    Joint(
                        name=jd["name"],
                        type=jd["type"],
                        axis=np.asarray(jd["axis"], dtype=float),
                        origin=Pose.from_dict(jd.get("origin", {})),
                        lower=float(lim[0]),
                        upper=float(lim[1]),
                        effort_lower=float(eff[0]),
                        effort_upper=float(eff[1]),
                    )
                )
            if "compliance_rad" in d:
                comp = tuple(float(x) for x in d["compliance_rad"])
            else:
                comp = tuple(math.radians(float(x)) for x in d.get("compliance_deg", [0.0, 0.0]))
            if "max_hand_force" in d:
                fmax = float(d["max_hand_force"])
            elif "payload_kg" in d:
                fmax = float(d["payload_kg"]) * GRAVITY
            else:
                fmax = np.inf
            return cls(
                joints=tuple(joints),
                tcp=Pose.from_dict(d.get("tcp", {})),
                base_frame_joint=int(d.get("base_frame_joint", 2)),
                base_pivot=np.asarray(d.get("base_pivot", [0.0, 0.0, 0.0]), dtype=float),
                compliance=comp,
                max_hand_force=fmax,
                name=d.get("name", "robot"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid robot model: {exc}") from exc


def load_model(path: str | Path) -> KinematicModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read robot model {path}: {exc}") from exc
    return KinematicModel.from_dict(data)


def fk(model: KinematicModel, q) -> Pose:
    """TCP pose in the world frame."""
    _, _, (R, p), _ = model.chain(q)
    return Pose(R, p)


def _jacobian_from_chain(model, pos, axes, tcp_p) -> np.ndarray:
    rev = model.revolute_mask
    r = tcp_p - pos
    J = np.zeros((6, model.dof))
    # explicit a x r; np.cross is slow for small arrays
    lin = np.stack(
        [
            axes[:, 1] * r[:, 2] - axes[:, 2] * r[:, 1],
            axes[:, 2] * r[:, 0] - axes[:, 0] * r[:, 2],
            axes[:, 0] * r[:, 1] - axes[:, 1] * r[:, 0],
        ]
    )
    J[:3] = np.where(rev, lin, axes.T)
    J[3:] = np.where(rev, axes.T, 0.0)
    J[:, model.locked_mask] = 0.0
    return J


def jacobian(model: KinematicModel, q) -> np.ndarray:
    """Geometric 6 x d Jacobian at the TCP, linear rows on top, world frame."""
    pos, axes, (_, tcp_p), _ = model.chain(q)
    return _jacobian_from_chain(model, pos, axes, tcp_p)


def fk_and_jacobian(model: KinematicModel, q) -> tuple[Pose, np.ndarray]:
    pos, axes, (R, p), _ = model.chain(q)
    return Pose(R, p), _jacobian_from_chain(model, pos, axes, p)


def torque_jacobian(model: KinematicModel, q, F) -> np.ndarray:
    """``d tau / d q`` for ``tau = J_v(q)^T F`` with a constant world-frame force ``F``.

    Moving joint ``j`` rotates (or shifts) everything downstream of it, so for ``j < k``
    the axis and lever of joint ``k`` change, while for ``j >= k`` only the TCP moves.
    """
    pos, axes, (_, p), _ = model.chain(q)
    return _torque_jacobian_from_chain(model, pos, axes, p, _jacobian_from_chain(model, pos, axes, p), F)


def _torque_jacobian_from_chain(model, pos, axes, p, J, F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    Jv = J[:3]
    rev = model.revolute_mask
    free = ~model.locked_mask
    r = p - pos
    # j >= k: d tau_k = z_k . (dp_j x F), only for revolute k
    down = axes @ np.cross(Jv.T, F).T
    # j < k, revolute j: d tau_k = z_j . v_k
    v = np.where(
        rev[:, None],
        np.cross(axes, np.cross(r, F)) + np.cross(r, np.cross(F, axes)),
        np.cross(axes, F),
    )
    up = v @ axes.T
    D = np.triu(down) * rev[:, None] + np.tril(up, -1) * rev[None, :]
    D[~free] = 0.0
    D[:, ~free] = 0.0
    return D


def kinematic_state(model: KinematicModel, q, F=None):
    """TCP pose, Jacobian, and (when ``F`` is given) joint torques and their derivative."""
    pos, axes, (R, p), _ = model.chain(q)
    J = _jacobian_from_chain(model, pos, axes, p)
    if F is None:
        return Pose(R, p), J, None, None
    return Pose(R, p), J, J[:3].T @ F, _torque_jacobian_from_chain(model, pos, axes, p, J, F)


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    """Twist (world frame) that moves ``current`` onto ``target``."""
    e = np.empty(6)
    e[:3] = target.translation - current.translation
    e[3:] = rotation_log(target.rotation @ current.rotation.T)
    return e


def reach_bound(model: KinematicModel) -> tuple[int, float]:
    """First joint after the base and an upper bound on its distance to the TCP."""
    start = model.base_frame_joint + 1
    total = float(np.linalg.norm(model.tcp.translation))
    for j in model.joints[start:]:
        total += float(np.linalg.norm(j.origin.translation))
        if j.type == "prismatic":
            total += max(abs(j.lower), abs(j.upper))
    return start, total


def _outside_workspace(model: KinematicModel, target: Pose, seed: np.ndarray, eps_p: float) -> bool:
    start, bound = reach_bound(model)
    if start >= model.dof or not np.all(model.locked_mask[:start]):
        return False
    pos, _, _, _ = model.chain(seed)
    return float(np.linalg.norm(target.translation - pos[start])) > bound + eps_p


def ik_solve(
    model: KinematicModel,
    target: Pose,
    seed,
    eps_p: float = 0.005,
    eps_r: float = math.radians(2.0),
    restarts: int = 200,
    steps: int = 100,
    damping: float = 0.05,
    rng: np.random.Generator | int | None = 0,
) -> np.ndarray:
    """Damped least-squares IK with random restarts and joint-limit clamping.

    The first attempt starts from ``seed``; later attempts start from random
    configurations (prismatic joints stay within 1 m of the seed). Raises
    ``NoSolution`` when the budget is exhausted.
    """
    if eps_p <= 0 or eps_r <= 0:
        raise ValueError("IK tolerances must be positive")
    seed = model.clip(model._check(seed))
    if _outside_workspace(model, target, seed, eps_p):
        raise NoSolution("target lies outside the arm workspace")
    rng = np.random.default_rng(rng)
    lo = model.lower.copy()
    hi = model.upper.copy()
    for k, j in enumerate(model.joints):
        if j.type == "prismatic":
            lo[k] = max(lo[k], seed[k] - 1.0)
            hi[k] = min(hi[k], seed[k] + 1.0)
        else:
            lo[k] = max(lo[k], -2 * math.pi)
            hi[k] = min(hi[k], 2 * math.pi)
    lam2 = damping**2
    for attempt in range(restarts):
        q = seed.copy() if attempt == 0 else rng.uniform(lo, hi)
        for _ in range(steps):
            pos, axes, (R, p), _ = model.chain(q)
            dp = target.translation - p
            dR = target.rotation @ R.T
            if np.linalg.norm(dp) <= eps_p and rotation_angle(dR) <= eps_r:
                return q
            e = np.concatenate([dp, rotation_log(dR)])
            J = _jacobian_from_chain(model, pos, axes, p)
            dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
            big = np.abs(dq).max()
            if big > 0.5:
                dq *= 0.5 / big
            q = model.clip(q + dq)
        pos, axes, (R, p), _ = model.chain(q)
        if np.linalg.norm(target.translation - p) <= eps_p and rotation_angle(target.rotation @ R.T) <= eps_r:
            return q
    raise NoSolution(f"no IK solution after {restarts} restarts x {steps} steps")


def pivot_to_tcp_distance(model: KinematicModel, q) -> float:
    _, _, (_, tcp_p), (bR, bp) = model.chain(q)
    return float(np.linalg.norm(tcp_p - (bR @ model.base_pivot + bp)))


def crust_thickness(model: KinematicModel, q, reachable: bool = True) -> float:
    """Crust thickness ``L(q) * tan(max(dtheta_x, dtheta_y))``; zero when out of reach."""
    if not reachable:
        return 0.0
    dtheta = max(model.compliance)
    if dtheta <= 0.0:
        return 0.0
    return pivot_to_tcp_distance(model, q) * math.tan(dtheta)
