"""Rigid transforms on SE(3)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.spatial.transform import Rotation

ORTHO_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, accurate near zero and near pi."""
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(s, c))


def angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    return rotation_angle(Ra.T @ Rb)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) < 0:
        U[:, -1] *= -1
        out = U @ Vt
    return out


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit axis."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_log(R: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(R).as_rotvec()


def rotation_exp(w: np.ndarray) -> np.ndarray:
    return Rotation.from_rotvec(w).as_matrix()


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation`` (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        p = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(p))):
            raise ValueError("pose contains non-finite values")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, p) -> Pose:
        return cls(np.eye(3), p)

    @classmethod
    def from_rpy(cls, xyz, rpy) -> Pose:
        """Fixed-axis roll/pitch/yaw (URDF convention)."""
        R = Rotation.from_euler("xyz", rpy).as_matrix()
        return cls(orthonormalize(R), xyz)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Pose:
        """Parse ``{"translation"|"xyz": [...], "rotation": 3x3 | "quat": [x,y,z,w] | "rpy": [...]}``.

        Rotations read from text are re-orthonormalized when they are within 1e-6 of SO(3);
        anything further off is rejected.
        """
        p = d.get("translation", d.get("xyz", [0.0, 0.0, 0.0]))
        if "rotation" in d:
            R = np.asarray(d["rotation"], dtype=float)
        elif "quat" in d:
            R = Rotation.from_quat(d["quat"]).as_matrix()
        elif "rpy" in d:
            R = Rotation.from_euler("xyz", d["rpy"]).as_matrix()
        else:
            R = np.eye(3)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) <= 0:
            raise ValueError("rotation is not orthonormal")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            R = orthonormalize(R)
        return cls(R, p)

    def to_dict(self) -> dict:
        return {
            "translation": [float(x) for x in self.translation],
            "rotation": [[float(x) for x in row] for row in self.rotation],
        }

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: Pose) -> Pose:
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> Pose:
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def translated(self, v) -> Pose:
        return Pose(self.rotation, self.translation + np.asarray(v, dtype=float))


def pose_distance(a: Pose, b: Pose, rot_weight: float = 1.0) -> float:
    """Translation distance plus weighted geodesic rotation angle (1 m ~ ``1/rot_weight`` rad)."""
    return float(np.linalg.norm(a.translation - b.translation)) + rot_weight * angle_between(
        a.rotation, b.rotation
    )


def interpolate(a: Pose, b: Pose, s: float) -> Pose:
    """Linear translation and geodesic (slerp) rotation, ``s`` in [0, 1]."""
    if s <= 0.0:
        return a
    if s >= 1.0:
        return b
    w = rotation_log(a.rotation.T @ b.rotation)
    R = orthonormalize(a.rotation @ rotation_exp(s * w))
    return Pose(R, (1.0 - s) * a.translation + s * b.translation)
