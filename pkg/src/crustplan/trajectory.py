"""Joint trajectories that follow a planned hand path under torque limits.

Each step solves ``min ||q(t+1) - q(t)||`` subject to joint limits, the hand pose
tolerance, ``J^T (F_h, 0)`` inside the torque limits, and the base rule: base y and yaw
frozen, base x moving at most ``d_x``. The solver projects onto the pose constraint with
damped least squares and descends on displacement plus a torque penalty in the null
space, restarted from a grid of base-x offsets.

The secondary objective is ``0.5 ||q - q(t)||^2 + w_reg * 0.5 * sum(r_k^2)`` plus a steep
penalty once a torque ratio ``r_k`` passes 0.95, so among near-equal motions the solver
leans toward the one that loads the joints less.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NoSolution, StepFailure, TrajFailure
from .kinematics import KinematicModel, fk, ik_solve, jacobian, kinematic_state, pose_error
from .quasistatics import joint_torques, torque_ratios
from .transforms import Pose, angle_between, rotation_exp

logger = logging.getLogger(__name__)

BASE_X, BASE_Y, BASE_YAW = 0, 1, 2
N_STARTS = 11
TORQUE_MARGIN = 0.95  # penalty switches on above this ratio
TORQUE_PENALTY = 20.0
TORQUE_REG = 0.01
SLACK = 0.8  # share of the pose tolerance the solver may use


@dataclass(frozen=True)
class Tolerances:
    eps_p: float = 0.005
    eps_r: float = math.radians(2.0)
    d_x: float = 0.05

    def __post_init__(self) -> None:
        if not (self.eps_p > 0 and self.eps_r > 0):
            raise ValueError("pose tolerances must be positive")
        if self.d_x < 0:
            raise ValueError("d_x must be non-negative")


@dataclass(frozen=True, eq=False)
class StepProblem:
    q: np.ndarray
    target: Pose
    F_h: np.ndarray
    tol: Tolerances = field(default_factory=Tolerances)


@dataclass
class JointTrajectory:
    q: np.ndarray  # (T, d)
    tau: np.ndarray  # (T, d)
    ratios: np.ndarray  # (T, d)
    pose_errors: np.ndarray  # (T, 2): meters, radians
    forces: np.ndarray  # (T, 3)

    def __len__(self) -> int:
        return len(self.q)

    @property
    def peak_ratio(self) -> float:
        return float(self.ratios.max(initial=0.0))

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "t": t + 1,
                    "q": self.q[t].tolist(),
                    "tau": self.tau[t].tolist(),
                    "torque_ratio": self.ratios[t].tolist(),
                    "pose_error": self.pose_errors[t].tolist(),
                    "F_h": self.forces[t].tolist(),
                }
                for t in range(len(self.q))
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointTrajectory:
        steps = d["steps"]
        return cls(
            q=np.array([s["q"] for s in steps], dtype=float),
            tau=np.array([s["tau"] for s in steps], dtype=float),
            ratios=np.array([s["torque_ratio"] for s in steps], dtype=float),
            pose_errors=np.array([s["pose_error"] for s in steps], dtype=float),
            forces=np.array([s["F_h"] for s in steps], dtype=float),
        )

    def csv_text(self, names: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["t"]
            + [f"q_{n}" for n in names]
            + [f"tau_{n}" for n in names]
            + [f"ratio_{n}" for n in names]
            + ["pos_err_m", "rot_err_rad"]
        )
        for t in range(len(self.q)):
            w.writerow(
                [t + 1]
                + [repr(float(x)) for x in self.q[t]]
                + [repr(float(x)) for x in self.tau[t]]
                + [repr(float(x)) for x in self.ratios[t]]
                + [repr(float(x)) for x in self.pose_errors[t]]
            )
        return buf.getvalue()


def _errors(model: KinematicModel, q: np.ndarray, target: Pose) -> tuple[float, float]:
    T = fk(model, q)
    return float(np.linalg.norm(T.translation - target.translation)), angle_between(T.rotation, target.rotation)


def _signed_limits(model: KinematicModel, tau: np.ndarray) -> np.ndarray:
    lim = np.where(tau >= 0, model.effort_upper, -model.effort_lower)
    return np.where(np.isfinite(lim) & (lim > 0), lim, np.inf)


def step_objective(model: KinematicModel, q, x, F, w_reg: float = TORQUE_REG) -> float:
    """Value minimized by each restart (the torque penalty is zero on feasible points)."""
    tau = joint_torques(jacobian(model, x), F)
    r = np.abs(tau) / _signed_limits(model, tau)
    excess = np.maximum(r - TORQUE_MARGIN, 0.0)
    d = np.asarray(x) - np.asarray(q)
    return float(0.5 * d @ d + 0.5 * w_reg * r @ r + 0.5 * TORQUE_PENALTY * excess @ excess)


def _objective_grad(model, q, x, tau, D, w_reg):
    lim = _signed_limits(model, tau)
    r = np.abs(tau) / lim
    excess = np.maximum(r - TORQUE_MARGIN, 0.0)
    coef = (w_reg * r + TORQUE_PENALTY * excess) * np.sign(tau) / lim
    return x - q + coef @ D


def _blocked(model, x, dq):
    """Joints sitting on a bound that ``dq`` pushes further out."""
    return ((x <= model.lower + 1e-12) & (dq < 0)) | ((x >= model.upper - 1e-12) & (dq > 0))


def _clip_ball(v: np.ndarray, radius: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v if n <= radius else v * (radius / n)


def _descend(model, q, x, target, F, tol, w_reg=TORQUE_REG, iters=200, damping=0.01, eta=0.5):
    """One restart: track a shifted hand target and slide along the pose manifold.

    The hand target is ``target`` moved by a twist ``delta`` kept inside ``SLACK`` times
    the pose tolerance; ``delta`` follows the objective gradient pulled back through the
    pseudo-inverse, so the tolerance is spent where it lowers displacement or torque,
    and the configuration follows the shift to first order. Null-space steps only start
    once the configuration sits on the shifted target, so they never fight the
    projection. Joints pinned at a bound are dropped from the Jacobian for that
    iteration.
    """
    lam2 = damping**2
    rp, rr = SLACK * tol.eps_p, SLACK * tol.eps_r
    delta = np.zeros(6)
    for _ in range(iters):
        goal = Pose(rotation_exp(delta[3:]) @ target.rotation, target.translation + delta[:3])
        T, J0, tau, D = kinematic_state(model, x, F)
        e = pose_error(T, goal)
        near = np.linalg.norm(e[:3]) <= 0.1 * rp and np.linalg.norm(e[3:]) <= 0.1 * rr
        g = _objective_grad(model, q, x, tau, D, w_reg) if near else None
        frozen = model.locked_mask.copy()
        new_delta = delta
        for _ in range(3):
            J = J0.copy()
            J[:, frozen] = 0.0
            Jp = J.T @ np.linalg.inv(J @ J.T + lam2 * np.eye(6))
            dq = Jp @ e
            if near:
                # exact projector; the damped one leaks g into the pose directions
                U, sv, Vt = np.linalg.svd(J, full_matrices=False)
                keep = sv > 1e-9 * max(sv[0], 1e-12)
                Vr = Vt[keep]
                gn = g - Vr.T @ (Vr @ g)
                gn[frozen] = 0.0
                # d(objective)/d(target twist) = pinv(J)^T g
                step = -eta * (U[:, keep] @ ((Vr @ g) / sv[keep]))
                new_delta = np.concatenate(
                    [
                        _clip_ball(delta[:3] + _clip_ball(step[:3], 0.25 * rp), rp),
                        _clip_ball(delta[3:] + _clip_ball(step[3:], 0.25 * rr), rr),
                    ]
                )
                dq = dq - eta * gn + Jp @ (new_delta - delta)
            dq[frozen] = 0.0
            block = _blocked(model, x, dq) & ~frozen
            if not block.any():
                break
            frozen |= block
        big = np.abs(dq).max()
        if big > 0.3:
            dq *= 0.3 / big
        x_new = model.clip(x + dq)
        moved = max(float(np.abs(x_new - x).max()), float(np.abs(new_delta - delta).max()))
        x, delta = x_new, new_delta
        if near and moved < 1e-7:
            break
        if not near and moved < 1e-12:
            break  # stuck against limits
    # final projection onto the last shifted target
    goal = Pose(rotation_exp(delta[3:]) @ target.rotation, target.translation + delta[:3])
    for _ in range(5):
        T, J, _, _ = kinematic_state(model, x)
        e = pose_error(T, goal)
        if np.linalg.norm(e[:3]) <= 1e-9 and np.linalg.norm(e[3:]) <= 1e-9:
            break
        x = model.clip(x + J.T @ np.linalg.solve(J @ J.T + 1e-10 * np.eye(6), e))
    return x


def _without_torque_limits(model: KinematicModel) -> KinematicModel:
    joints = tuple(replace(j, effort_lower=-np.inf, effort_upper=np.inf) for j in model.joints)
    return replace(model, joints=joints)


def _candidate_report(model, x, target, F, tol):
    ep, er = _errors(model, x, target)
    tau = joint_torques(jacobian(model, x), F)
    ratios = torque_ratios(model, tau)
    pose_ok = ep <= tol.eps_p and er <= tol.eps_r
    return pose_ok, ratios, (ep, er)


def optimize_step(
    model: KinematicModel, problem: StepProblem, n_starts: int = N_STARTS, w_reg: float = TORQUE_REG
) -> np.ndarray:
    """Minimum-displacement configuration for the next hand pose; raises ``StepFailure``.

    Restarts begin at base-x offsets evenly spaced in ``[-d_x, d_x]``; the winner is the
    feasible restart with the lowest ``step_objective`` (ties: lowest start index).
    ``w_reg = 0`` gives the pure displacement objective.
    """
    q = np.asarray(problem.q, dtype=float)
    tol = problem.tol
    F = np.asarray(problem.F_h, dtype=float)
    if not model.within_limits(q, tol=1e-9):
        raise ValueError("current configuration violates joint limits")
    x_lo = max(model.lower[BASE_X], q[BASE_X] - tol.d_x)
    x_hi = min(model.upper[BASE_X], q[BASE_X] + tol.d_x)
    step_model = model.with_limits(
        {BASE_X: (x_lo, x_hi), BASE_Y: (q[BASE_Y], q[BASE_Y]), BASE_YAW: (q[BASE_YAW], q[BASE_YAW])}
    )
    offsets = np.linspace(-tol.d_x, tol.d_x, n_starts) if tol.d_x > 0 else np.zeros(1)
    order = np.argsort(np.abs(offsets), kind="stable")  # zero offset first
    candidates = []
    best_pose_err = (np.inf, None)
    worst_torque = (np.inf, -1)
    for k in order:
        x0 = q.copy()
        x0[BASE_X] = np.clip(q[BASE_X] + offsets[k], x_lo, x_hi)
        x = _descend(step_model, q, x0, problem.target, F, tol, w_reg)
        x[BASE_Y], x[BASE_YAW] = q[BASE_Y], q[BASE_YAW]
        pose_ok, ratios, errs = _candidate_report(model, x, problem.target, F, tol)
        if not pose_ok:
            if errs[0] / tol.eps_p + errs[1] / tol.eps_r < best_pose_err[0]:
                best_pose_err = (errs[0] / tol.eps_p + errs[1] / tol.eps_r, errs)
            continue
        peak = float(ratios.max(initial=0.0))
        if peak >= 1.0:
            if peak < worst_torque[0]:
                worst_torque = (peak, int(np.argmax(ratios)))
            continue
        candidates.append((step_objective(model, q, x, F, w_reg), int(k), x))
    if not candidates:
        if worst_torque[1] >= 0:
            name = model.joints[worst_torque[1]].name
            raise StepFailure("torque_infeasible", f"{name} ratio {worst_torque[0]:.3f}")
        # is the pose itself out of reach, or only out of reach under the torque limits?
        x = _descend(_without_torque_limits(step_model), q, q.copy(), problem.target, F, tol, 0.0)
        pose_ok, ratios, _ = _candidate_report(model, x, problem.target, F, tol)
        if pose_ok and ratios.max(initial=0.0) >= 1.0:
            k = int(np.argmax(ratios))
            raise StepFailure("torque_infeasible", f"{model.joints[k].name} ratio {ratios[k]:.3f} without torque limits")
        ep, er = best_pose_err[1] if best_pose_err[1] else (np.inf, np.inf)
        raise StepFailure("pose_unreachable", f"best pose error {ep:.4f} m / {math.degrees(er):.2f} deg")
    return min(candidates, key=lambda c: (c[0], c[1]))[2]


def _fill(model: KinematicModel, qs, targets, forces) -> JointTrajectory:
    qs = np.asarray(qs, dtype=float)
    F = np.asarray(forces, dtype=float)
    tau = np.array([joint_torques(jacobian(model, q), f) for q, f in zip(qs, F)])
    ratios = np.array([torque_ratios(model, t) for t in tau])
    errs = np.array([_errors(model, q, T) for q, T in zip(qs, targets)])
    return JointTrajectory(qs, tau, ratios, errs, F)


def optimize_trajectory(
    model: KinematicModel,
    targets: Sequence[Pose],
    forces: Sequence[np.ndarray],
    q_init,
    tol: Tolerances = Tolerances(),
    w_reg: float = TORQUE_REG,
) -> JointTrajectory:
    """Chain ``optimize_step`` along hand targets; raises ``TrajFailure`` with the failing step."""
    q_init = np.asarray(q_init, dtype=float)
    ep, er = _errors(model, q_init, targets[0])
    if ep > tol.eps_p or er > tol.eps_r:
        raise ValueError("q_init does not realize the first hand pose")
    qs = [q_init]
    for t in range(1, len(targets)):
        try:
            qs.append(optimize_step(model, StepProblem(qs[-1], targets[t], np.asarray(forces[t]), tol), w_reg=w_reg))
        except StepFailure as exc:
            raise TrajFailure(t + 1, exc.cause, exc.binding) from exc
    traj = _fill(model, qs, targets, forces)
    if traj.peak_ratio >= 1.0:
        t = int(np.argmax(traj.ratios.max(axis=1)))
        raise TrajFailure(t + 1, "torque_infeasible", "initial configuration")
    return traj


def initial_configuration(
    model: KinematicModel, target: Pose, F_h, q_seed, tol: Tolerances = Tolerances(), locked=(BASE_Y, BASE_YAW)
) -> np.ndarray:
    """IK for the first hand pose, then a zero-base-motion torque repair if needed."""
    m = model.locked_at(np.asarray(q_seed, dtype=float), locked)
    q = ik_solve(m, target, q_seed, eps_p=0.5 * tol.eps_p, eps_r=0.5 * tol.eps_r)
    ratios = torque_ratios(model, joint_torques(jacobian(model, q), F_h))
    if ratios.max(initial=0.0) < 1.0:
        return q
    return optimize_step(model, StepProblem(q, target, np.asarray(F_h), tol))


def ik_only_trajectory(
    model: KinematicModel,
    targets: Sequence[Pose],
    forces: Sequence[np.ndarray],
    q_init,
    tol: Tolerances = Tolerances(),
    locked=(BASE_Y, BASE_YAW),
) -> JointTrajectory:
    """Nearest-IK chaining without torque or base-step constraints; torques are only reported.

    Raises ``NoSolution`` if some hand pose cannot be reached.
    """
    q = np.asarray(q_init, dtype=float)
    m = model.locked_at(q, locked)
    qs = [q]
    for t in range(1, len(targets)):
        q = ik_solve(m, targets[t], q, eps_p=tol.eps_p, eps_r=tol.eps_r)
        qs.append(q)
    return _fill(model, qs, targets, forces)


@dataclass
class TrajectoryReport:
    violations: list[dict]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


def validate_trajectory(
    model: KinematicModel,
    traj: JointTrajectory,
    targets: Sequence[Pose],
    forces: Sequence[np.ndarray],
    tol: Tolerances = Tolerances(),
) -> TrajectoryReport:
    """Recompute FK, torques, limits and base rules from scratch and list every violation."""
    out: list[dict] = []
    if len(traj.q) != len(targets):
        out.append({"t": 0, "kind": "length", "detail": f"{len(traj.q)} configurations for {len(targets)} targets"})
        return TrajectoryReport(out)
    for t, (q, T, F) in enumerate(zip(traj.q, targets, forces)):
        if not model.within_limits(q, tol=1e-12):
            out.append({"t": t + 1, "kind": "joint_limit"})
        ep, er = _errors(model, q, T)
        if ep > tol.eps_p or er > tol.eps_r:
            out.append({"t": t + 1, "kind": "pose", "detail": f"{ep:.5f} m, {math.degrees(er):.3f} deg"})
        tau = joint_torques(jacobian(model, q), F)
        bad = np.flatnonzero((tau < model.effort_lower) | (tau > model.effort_upper))
        for k in bad:
            out.append({"t": t + 1, "kind": "torque", "detail": model.joints[k].name})
        if t > 0:
            prev = traj.q[t - 1]
            if q[BASE_Y] != prev[BASE_Y] or q[BASE_YAW] != prev[BASE_YAW]:
                out.append({"t": t + 1, "kind": "base_frozen"})
            if abs(q[BASE_X] - prev[BASE_X]) > tol.d_x + 1e-12:
                out.append({"t": t + 1, "kind": "base_step", "detail": f"{abs(q[BASE_X] - prev[BASE_X]):.4f} m"})
    return TrajectoryReport(out)


def save_trajectory(traj: JointTrajectory, path: str | Path) -> None:
    Path(path).write_text(json.dumps(traj.to_dict(), indent=2) + "\n")
