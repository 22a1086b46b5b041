"""Minimum hand force under quasistatic balance, and hand-force to joint-torque mapping.

The hand applies a pure force ``F_h`` at the grasp point ``r_h``. Contacts push with
forces inside linearized friction cones, ``F_s = sum_j lam_j e_j`` with ``lam >= 0``.
Eliminating ``F_h = -G - E lam`` from the force balance leaves

    min ||E lam + G||^2   s.t.   M lam = c,   lam >= 0

with ``M`` stacking ``(r_s - r_h) x e_j`` and ``c = (r_h - r_g) x G``. It is solved with
a primal active-set method started from an NNLS feasibility solve.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, nnls

from .contact import ContactSet
from .errors import SolverError
from .kinematics import GRAVITY, KinematicModel
from .transforms import Pose

logger = logging.getLogger(__name__)

DEFAULT_CONE_EDGES = 8
RIDGE = 1e-6  # makes the QP strictly convex; bias on ||F_h|| is ~1e-12 mg
BALANCE_TOL = 1e-7  # normalized torque residual above which balance is declared impossible


def tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(a, n)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


@dataclass(frozen=True, eq=False)
class FrictionConeBasis:
    """Unit edge vectors, shape (contacts, m, 3)."""

    edges: np.ndarray
    normals: np.ndarray
    mu: np.ndarray

    @property
    def m(self) -> int:
        return self.edges.shape[1]

    def __len__(self) -> int:
        return self.edges.shape[0]


def build_cones(contacts: ContactSet, m: int = DEFAULT_CONE_EDGES) -> FrictionConeBasis:
    """Linearize each friction cone with ``m`` edges tilted by ``atan(mu)`` from the normal."""
    if m < 4:
        raise ValueError(f"friction cones need at least 4 edges, got {m}")
    if len(contacts) == 0:
        raise ValueError("cannot build cones for an empty contact set")
    mu = np.asarray(contacts.mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("friction coefficient must be non-negative")
    ang = 2.0 * np.pi * np.arange(m) / m
    edges = np.empty((len(contacts), m, 3))
    for i, (n, u) in enumerate(zip(contacts.normals, mu)):
        t1, t2 = tangent_basis(n)
        t = np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2
        edges[i] = (n + u * t) / math.sqrt(1.0 + u * u)
    return FrictionConeBasis(edges, contacts.normals.copy(), mu.copy())


@dataclass(frozen=True)
class GravityLoad:
    """Object weight; ``com`` is in the object frame, ``direction`` is the unit gravity direction."""

    mass: float
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    g: float = GRAVITY
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def __post_init__(self) -> None:
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", d / np.linalg.norm(d))

    @property
    def weight(self) -> np.ndarray:
        return self.mass * self.g * self.direction

    def scaled(self, factor: float) -> GravityLoad:
        return GravityLoad(self.mass * factor, self.com, self.g, self.direction)


@dataclass(frozen=True, eq=False)
class HandForceSolution:
    F_h: np.ndarray
    lam: np.ndarray  # (contacts, m)
    force_residual: np.ndarray
    torque_residual: np.ndarray
    balanced: bool
    feasible: bool
    F_max: float

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.F_h))

    def to_dict(self) -> dict:
        return {
            "F_h": self.F_h.tolist(),
            "magnitude": self.magnitude,
            "lambda": self.lam.tolist(),
            "force_residual": self.force_residual.tolist(),
            "torque_residual": self.torque_residual.tolist(),
            "balanced": self.balanced,
            "feasible": self.feasible,
            "F_max": None if math.isinf(self.F_max) else self.F_max,
        }


def _feasible_start(M, c):
    """Some ``lam >= 0`` with ``M lam = c`` to working precision, or None.

    NNLS occasionally stalls on wide systems; a simplex feasibility LP is the second
    opinion. Both return sparse (vertex) solutions, which keeps the active-set phase short.
    """
    n = M.shape[1]
    for attempt in range(2):
        if attempt == 0:
            lam, _ = nnls(M, c, maxiter=10 * n)
        else:
            res = linprog(np.zeros(n), A_eq=M, b_eq=c, bounds=(0.0, None), method="highs-ds")
            if res.x is None:
                return None
            lam = np.maximum(res.x, 0.0)
        S = lam > 0
        if S.any():
            corr = np.linalg.lstsq(M[:, S], c - M @ lam, rcond=None)[0]
            lam[S] = np.maximum(lam[S] + corr, 0.0)
        if np.linalg.norm(M @ lam - c) <= BALANCE_TOL:
            return lam
    return None


def _objective(E, G, lam, ridge):
    return float(np.sum((E @ lam + G) ** 2) + ridge**2 * np.sum(lam**2))


def _min_norm_balance(E, G, M, c, ridge=RIDGE, max_iter=None):
    """Solve ``min ||E lam + G||^2 + ridge^2 ||lam||^2  s.t.  M lam = c, lam >= 0``.

    Primal active-set method. The start point is a non-negative solution of
    ``M lam = c``; every step lies in the null space of the free columns
    of ``M``, so the equality holds throughout. Returns ``(lam, balanced)``; without a
    feasible start the least-squares compromise is returned with ``balanced=False``.
    """
    n = E.shape[1]
    max_iter = max_iter or 10 * n + 50
    lam = _feasible_start(M, c)
    if lam is None:
        lam, _ = nnls(M, c, maxiter=10 * n)
        return lam, False
    free = lam > 0
    for it in range(max_iter):
        idx = np.flatnonzero(free)
        lam_f = lam[idx]
        MF = M[:, idx]
        p = np.zeros(len(idx))
        if len(idx):
            _, sv, Vt = np.linalg.svd(MF)
            r = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if len(sv) else 0.0)))
            N = Vt[r:].T
            if N.shape[1]:
                K = np.vstack([E[:, idx] @ N, ridge * N])
                rhs = np.concatenate([-G - E[:, idx] @ lam_f, -ridge * lam_f])
                z, *_ = np.linalg.lstsq(K, rhs, rcond=None)
                p = N @ z
        stalled = np.linalg.norm(p) <= 1e-9 * (1.0 + np.linalg.norm(lam_f))
        if not stalled:
            cur = _objective(E, G, lam, ridge)
            trial = lam.copy()
            trial[idx] = lam_f + p
            stalled = cur - _objective(E, G, trial, ridge) <= 1e-15 * max(cur, 1e-12)
        if stalled:
            g = E.T @ (E @ lam + G) + ridge**2 * lam
            y = np.linalg.lstsq(MF.T, -g[idx], rcond=None)[0] if len(idx) else np.zeros(M.shape[0])
            mult = g + M.T @ y
            mult[idx] = np.inf
            j = int(np.argmin(mult))
            if mult[j] >= -1e-9:
                return lam, True
            free[j] = True
            continue
        alpha, block = 1.0, -1
        neg = np.flatnonzero(p < 0)
        if len(neg):
            ratios = -lam_f[neg] / p[neg]
            i = int(np.argmin(ratios))
            if ratios[i] < 1.0:
                alpha, block = float(ratios[i]), int(idx[neg[i]])
        lam[idx] = np.maximum(lam_f + alpha * p, 0.0)
        if block >= 0:
            lam[block] = 0.0
            free[block] = False
    raise SolverError(
        "active-set iteration limit reached",
        max_iter,
        {"n": n, "free": int(free.sum()), "E": E.tolist(), "M": M.tolist(), "c": c.tolist()},
    )


def solve_min_hand_force(
    contacts: ContactSet,
    cones: FrictionConeBasis | None,
    load: GravityLoad,
    r_h,
    F_max: float = math.inf,
    object_pose: Pose | None = None,
) -> HandForceSolution:
    """Smallest hand force that balances the object together with the contact forces.

    Everything is in the world frame; when ``object_pose`` is given the load's centre of
    mass is mapped through it. ``F_h`` is reported even when the cap ``F_max`` fails. If
    no balance exists the returned solution is the least-squares compromise with
    ``balanced=False``.
    """
    G = load.weight
    mg = float(np.linalg.norm(G))
    r_g = load.com if object_pose is None else object_pose.apply(load.com)
    r_h = np.asarray(r_h, dtype=float)
    n = len(contacts)
    solvable = True
    if n == 0:
        lam = np.zeros((0, cones.m if cones is not None else DEFAULT_CONE_EDGES))
        F_h = -G
        L = max(1.0, float(np.linalg.norm(r_g - r_h)))
    else:
        if cones is None:
            cones = build_cones(contacts)
        m = cones.m
        E = cones.edges.reshape(-1, 3).T
        arms = np.repeat(contacts.points - r_h, m, axis=0)
        M = np.cross(arms, E.T).T
        c = np.cross(r_h - r_g, G)
        L = max(
            1e-3,
            float(np.linalg.norm(contacts.points - r_h, axis=1).max()),
            float(np.linalg.norm(r_g - r_h)),
        )
        lam_n, solvable = _min_norm_balance(E, G / mg, M / L, c / (mg * L))
        lam_flat = lam_n * mg
        lam = lam_flat.reshape(n, m)
        F_h = -G - E @ lam_flat
    contact_force = np.einsum("ij,ijk->k", lam, cones.edges) if n else np.zeros(3)
    contact_torque = (
        np.cross(contacts.points, np.einsum("ij,ijk->ik", lam, cones.edges)).sum(axis=0) if n else np.zeros(3)
    )
    force_res = contact_force + F_h + G
    torque_res = contact_torque + np.cross(r_h, F_h) + np.cross(r_g, G)
    # residuals are taken about the grasp point so the check does not depend on the world origin
    torque_about_h = torque_res - np.cross(r_h, force_res)
    balanced = bool(
        solvable
        and np.linalg.norm(force_res) <= 1e-6 * max(1.0, mg)
        and np.linalg.norm(torque_about_h) <= 1e-6 * max(1.0, mg * L)
    )
    feasible = balanced and float(np.linalg.norm(F_h)) <= F_max
    return HandForceSolution(
        F_h=F_h,
        lam=lam,
        force_residual=force_res,
        torque_residual=torque_about_h,
        balanced=balanced,
        feasible=bool(feasible),
        F_max=float(F_max),
    )


def solve_record(contacts: ContactSet, cones: FrictionConeBasis, load: GravityLoad, r_h, solution) -> dict:
    """JSON-ready record of one solve, for debugging."""
    return {
        "contacts": contacts.to_dict(),
        "cone_edges": cones.edges.tolist() if cones is not None else [],
        "load": {"mass": load.mass, "com": load.com.tolist(), "g": load.g, "direction": load.direction.tolist()},
        "r_h": np.asarray(r_h, dtype=float).tolist(),
        "solution": solution.to_dict(),
    }


def dump_solve(path: str | Path, contacts, cones, load, r_h, solution) -> None:
    Path(path).write_text(json.dumps(solve_record(contacts, cones, load, r_h, solution), indent=2))


def joint_torques(J: np.ndarray, F_h) -> np.ndarray:
    """Joint torques ``J^T (F_h, 0)`` for a pure hand force."""
    return J[:3].T @ np.asarray(F_h, dtype=float)


@dataclass(frozen=True, eq=False)
class TorqueReport:
    within: bool
    ratios: np.ndarray
    flagged: tuple[int, ...]

    @property
    def worst_joint(self) -> int:
        return int(np.argmax(self.ratios)) if len(self.ratios) else -1

    @property
    def worst_ratio(self) -> float:
        return float(self.ratios.max(initial=0.0))


def torque_ratios(model: KinematicModel, tau: np.ndarray) -> np.ndarray:
    """|tau_k| over the limit on the side tau_k points to (0 for unlimited joints)."""
    tau = np.asarray(tau, dtype=float)
    lim = np.where(tau >= 0, model.effort_upper, -model.effort_lower)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.isinf(lim), 0.0, np.abs(tau) / lim)
    r = np.where((lim == 0) & (tau == 0), 0.0, r)
    return np.where(np.isnan(r), np.inf, r)


def torque_within_limits(model: KinematicModel, tau) -> TorqueReport:
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.dof,):
        raise ValueError(f"expected {model.dof} torques, got shape {tau.shape}")
    inside = (tau >= model.effort_lower) & (tau <= model.effort_upper)
    flagged = tuple(int(k) for k in np.flatnonzero(~inside))
    return TorqueReport(within=not flagged, ratios=torque_ratios(model, tau), flagged=flagged)
