"""Scenario files, the grasp-retry pipeline, thickness sweeps and run artifacts.

A scenario is one JSON document; file references inside it are resolved relative to
the scenario's directory. Units are meters, kilograms and radians throughout.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .contact import DEFAULT_MU, Body, ContactSet
from .errors import ConfigError, NoFeasibleGrasp, NoSolution, PlanFailure, TrajFailure
from .kinematics import KinematicModel, load_model
from .mesh import TriMesh, box_mesh, load_mesh
from .planner import (
    GraspCandidate,
    ObjectPath,
    PlannerParams,
    filter_grasps,
    load_grasps,
    path_nodes_from_dict,
    plan,
    validate_path,
)
from .quasistatics import GravityLoad, solve_min_hand_force
from .trajectory import (
    JointTrajectory,
    Tolerances,
    ik_only_trajectory,
    initial_configuration,
    optimize_trajectory,
    validate_trajectory,
)
from .transforms import Pose

logger = logging.getLogger(__name__)

WORKERS_ENV = "CRUSTPLAN_MAX_WORKERS"

STATUS_SUCCESS = "success"
STATUS_EXHAUSTED = "all-grasps-exhausted"
STATUS_TIMEOUT = "timeout"


@dataclass(eq=False)
class Scenario:
    name: str
    object: TriMesh
    load: GravityLoad
    environment: list[Body]
    model: KinematicModel
    grasps: list[GraspCandidate]
    start: Pose
    goal: Pose
    q_init: np.ndarray
    params: PlannerParams
    tolerances: Tolerances = field(default_factory=Tolerances)
    hand_mesh: TriMesh | None = None
    path: Path | None = None

    @property
    def F_max(self) -> float:
        return self.model.max_hand_force

    def with_thickness(self, thickness) -> Scenario:
        return replace(self, params=replace(self.params, thickness=thickness))


def _mesh(desc: dict, base: Path, name: str) -> TriMesh:
    if "box" in desc:
        return box_mesh(desc["box"], name=name, center=desc.get("center", (0.0, 0.0, 0.0)))
    if "file" in desc:
        return load_mesh(base / desc["file"], name=name)
    raise ConfigError(f"mesh {name!r} needs either 'box' or 'file'")


def _pose(d: Any, what: str) -> Pose:
    try:
        return Pose.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad pose for {what}: {exc}") from exc


def _ref(base: Path, rel: str, what: str) -> Path:
    p = (base / rel).resolve()
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


def load_scenario(path: str | Path) -> Scenario:
    """Parse and resolve a scenario file; every problem surfaces as ``ConfigError``."""
    path = Path(path).resolve()
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    base = path.parent
    try:
        model = load_model(_ref(base, d["robot"], "robot model"))
        grasps = load_grasps(_ref(base, d["grasps"], "grasp"))
        obj = d["object"]
        mass = float(obj["mass"])
        if not mass > 0:
            raise ConfigError("object mass must be positive")
        mesh = _mesh(obj["mesh"], base, obj.get("name", "object"))
        load = GravityLoad(mass, obj.get("com", [0.0, 0.0, 0.0]))
        env = []
        for k, b in enumerate(d["environment"]):
            name = b.get("name", f"body{k}")
            mu = float(b.get("mu", DEFAULT_MU))
            if mu < 0:
                raise ConfigError(f"friction coefficient of {name} is negative")
            env.append(Body(_mesh(b["mesh"], base, name), _pose(b.get("pose", {}), name), mu, name))
        if not env:
            raise ConfigError("scenario has no environment bodies")
        planner = dict(d.get("planner", {}))
        if "thickness" in d:
            planner["thickness"] = d["thickness"]
        params = PlannerParams.from_dict(planner)
        tol = d.get("tolerances", {})
        tolerances = Tolerances(
            eps_p=float(tol.get("eps_p", 0.005)),
            eps_r=float(tol.get("eps_r", math.radians(2.0))),
            d_x=float(tol.get("d_x", 0.05)),
        )
        params = replace(params, eps_p=tolerances.eps_p, eps_r=tolerances.eps_r)
        q_init = np.asarray(d.get("q_init", np.zeros(model.dof)), dtype=float)
        if q_init.shape != (model.dof,):
            raise ConfigError(f"q_init needs {model.dof} values")
        if not model.within_limits(q_init):
            raise ConfigError("q_init violates joint limits")
        hand = _mesh(d["hand_mesh"], base, "hand") if "hand_mesh" in d else None
        return Scenario(
            name=d.get("name", path.stem),
            object=mesh,
            load=load,
            environment=env,
            model=model,
            grasps=grasps,
            start=_pose(d["start"], "start"),
            goal=_pose(d["goal"], "goal"),
            q_init=q_init,
            params=params,
            tolerances=tolerances,
            hand_mesh=hand,
            path=path,
        )
    except KeyError as exc:
        raise ConfigError(f"scenario {path} is missing key {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scenario {path}: {exc}") from exc


def calibrate_compliance(arm_length: float, displacement: float) -> float:
    """Rotation range (radians) from a tip displacement measured at a given arm length."""
    if not arm_length > 0:
        raise ValueError("arm length must be positive")
    if displacement < 0:
        raise ValueError("displacement must be non-negative")
    return math.atan(displacement / arm_length)


def max_workers(jobs: int) -> int:
    """Worker count: the CPU count, capped by the environment variable and the job count."""
    n = os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from exc
    return max(1, min(n, jobs))


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def path_targets(path: ObjectPath | dict) -> tuple[list[Pose], np.ndarray]:
    """Hand poses and hand forces along a path (object or JSON form)."""
    if isinstance(path, ObjectPath):
        return [n.hand_pose for n in path.nodes], np.array([n.solution.F_h for n in path.nodes])
    _, recs = path_nodes_from_dict(path)
    return [r["hand_pose"] for r in recs], np.array([r["F_h"] for r in recs])


def unsupported_forces(scn: Scenario, path: ObjectPath | dict) -> np.ndarray:
    """Hand force magnitudes along the path if every environment body were removed."""
    if isinstance(path, ObjectPath):
        poses = [(n.object_pose, n.hand_pose) for n in path.nodes]
    else:
        _, recs = path_nodes_from_dict(path)
        poses = [(r["object_pose"], r["hand_pose"]) for r in recs]
    out = []
    for obj_pose, hand_pose in poses:
        sol = solve_min_hand_force(ContactSet.empty(), None, scn.load, hand_pose.translation, scn.F_max, obj_pose)
        out.append(sol.magnitude)
    return np.array(out)


@dataclass
class RunReport:
    scenario: str
    seed: int
    status: str
    attempts: list[dict]
    files: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "status": self.status,
            "attempts": self.attempts,
            "files": self.files,
        }

    @property
    def ok(self) -> bool:
        return self.status == STATUS_SUCCESS


def run_pipeline(scn: Scenario, seed: int = 0, out_dir: str | Path | None = None) -> RunReport:
    """Select a grasp, plan the object path, optimize the joint trajectory; retry on failure.

    Grasps are tried in candidate-file order after filtering. Timings go to the log, not
    to the report, so reports of the same (scenario, seed) are byte-identical.
    """
    params = replace(scn.params, seed=seed)
    attempts: list[dict] = []
    files: dict[str, str] = {}
    try:
        grasps = filter_grasps(
            scn.grasps,
            scn.start,
            scn.goal,
            scn.model,
            scn.environment,
            hand_mesh=scn.hand_mesh,
            eps_p=scn.tolerances.eps_p,
            eps_r=scn.tolerances.eps_r,
            q_seed=scn.q_init,
            locked_joints=params.locked_joints,
        )
    except NoFeasibleGrasp:
        grasps = []
    any_timeout = False
    result = None
    for g in grasps:
        rec: dict[str, Any] = {"grasp": g.id, "plan": None, "trajectory": None}
        attempts.append(rec)
        t0 = time.perf_counter()
        try:
            path = plan(
                scn.environment, scn.object, g, scn.load, scn.start, scn.goal, scn.model, params, q_init=scn.q_init
            )
        except PlanFailure as exc:
            rec["plan"] = exc.cause
            any_timeout |= exc.cause == "timeout"
            logger.info("grasp %s: planning failed (%s) after %.2f s", g.id, exc.cause, time.perf_counter() - t0)
            continue
        rec["plan"] = "success"
        rec["path_nodes"] = len(path)
        logger.info("grasp %s: planned %d nodes in %.2f s", g.id, len(path), time.perf_counter() - t0)
        t1 = time.perf_counter()
        targets, forces = path_targets(path)
        try:
            q0 = initial_configuration(scn.model, targets[0], forces[0], scn.q_init, scn.tolerances)
            traj = optimize_trajectory(scn.model, targets, forces, q0, scn.tolerances)
        except TrajFailure as exc:
            rec["trajectory"] = f"{exc.cause} at t={exc.t}"
            rec["binding"] = exc.binding
            logger.info("grasp %s: trajectory failed: %s", g.id, exc)
            continue
        except Exception as exc:  # StepFailure/NoSolution from the first configuration
            cause = getattr(exc, "cause", type(exc).__name__)
            rec["trajectory"] = f"{cause} at t=1"
            logger.info("grasp %s: no initial configuration: %s", g.id, exc)
            continue
        rec["trajectory"] = "success"
        logger.info("grasp %s: trajectory optimized in %.2f s", g.id, time.perf_counter() - t1)
        try:
            baseline = ik_only_trajectory(scn.model, targets, forces, q0, scn.tolerances)
            rec["baseline_peak_ratio"] = baseline.peak_ratio
        except NoSolution:
            baseline = None
            rec["baseline_peak_ratio"] = None
        rec["peak_ratio"] = traj.peak_ratio
        rec["max_hand_force"] = float(np.linalg.norm(forces, axis=1).max())
        result = (path, traj, baseline)
        break
    if result is not None:
        status = STATUS_SUCCESS
    elif any_timeout:
        status = STATUS_TIMEOUT
    else:
        status = STATUS_EXHAUSTED
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if result is not None:
            path, traj, baseline = result
            names = [j.name for j in scn.model.joints]
            write_atomic(out / "path.json", _dumps(path.to_dict()))
            write_atomic(out / "trajectory.json", _dumps(traj.to_dict()))
            write_atomic(out / "trajectory.csv", traj.csv_text(names))
            files.update(path="path.json", trajectory="trajectory.json", trajectory_csv="trajectory.csv")
            if baseline is not None:
                write_atomic(out / "baseline.json", _dumps(baseline.to_dict()))
                files["baseline"] = "baseline.json"
        report = RunReport(str(scn.path) if scn.path else scn.name, seed, status, attempts, files)
        write_atomic(out / "report.json", _dumps(report.to_dict()))
        return report
    return RunReport(str(scn.path) if scn.path else scn.name, seed, status, attempts, files)


def validate_run(run_dir: str | Path, scn: Scenario | None = None) -> list[str]:
    """Re-check a run directory from its files alone; returns human-readable problems."""
    run_dir = Path(run_dir)
    try:
        report = json.loads((run_dir / "report.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {run_dir / 'report.json'}: {exc}") from exc
    if scn is None:
        scn = load_scenario(report["scenario"])
    problems: list[str] = []
    if report["status"] != STATUS_SUCCESS:
        return problems
    for key in ("path", "trajectory"):
        if key not in report["files"] or not (run_dir / report["files"][key]).is_file():
            problems.append(f"missing {key} file")
    if problems:
        return problems
    path = json.loads((run_dir / report["files"]["path"]).read_text())
    pr = validate_path(
        path, scn.environment, scn.object, scn.load, scn.F_max, scn.params.max_contacts, scn.params.cone_edges
    )
    problems += [f"path {v.location} {v.index}: {v.kind} {v.detail}".rstrip() for v in pr.violations]
    traj = JointTrajectory.from_dict(json.loads((run_dir / report["files"]["trajectory"]).read_text()))
    targets, forces = path_targets(path)
    tr = validate_trajectory(scn.model, traj, targets, forces, scn.tolerances)
    problems += [f"trajectory t={v['t']}: {v['kind']} {v.get('detail', '')}".rstrip() for v in tr.violations]
    return problems


# --- sweeps -----------------------------------------------------------------


def _policy_value(policy: str | float):
    if isinstance(policy, str) and policy.strip().lower() == "dynamic":
        return "dynamic"
    try:
        v = float(policy)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"thickness policy must be 'dynamic' or meters, got {policy!r}") from exc
    if v < 0:
        raise ConfigError("fixed thickness must be non-negative")
    return v


def _plan_once(args) -> dict:
    scn_path, policy, seed, overrides, path_dir = args
    scn = load_scenario(scn_path)
    params = replace(scn.params, thickness=policy, seed=seed, **overrides)
    grasps = filter_grasps(
        scn.grasps,
        scn.start,
        scn.goal,
        scn.model,
        scn.environment,
        hand_mesh=scn.hand_mesh,
        eps_p=scn.tolerances.eps_p,
        eps_r=scn.tolerances.eps_r,
        q_seed=scn.q_init,
        locked_joints=params.locked_joints,
    )
    t0 = time.perf_counter()
    row = {"policy": params.policy_name, "seed": seed, "grasp": grasps[0].id}
    try:
        path = plan(
            scn.environment, scn.object, grasps[0], scn.load, scn.start, scn.goal, scn.model, params, q_init=scn.q_init
        )
    except PlanFailure as exc:
        row.update(success=0, cause=exc.cause, time_s=time.perf_counter() - t0, iterations=exc.stats["iterations"])
        row.update(thickness_min="", thickness_max="", path_nodes="")
        return row
    row.update(
        success=1,
        cause="",
        time_s=time.perf_counter() - t0,
        iterations=path.stats["iterations"],
        thickness_min=path.stats["thickness_min"],
        thickness_max=path.stats["thickness_max"],
        path_nodes=len(path),
    )
    if path_dir is not None:
        write_atomic(Path(path_dir) / f"{params.policy_name}_seed{seed}.json", _dumps(path.to_dict()))
    return row


RUN_COLUMNS = ["policy", "seed", "grasp", "success", "cause", "time_s", "iterations", "thickness_min", "thickness_max", "path_nodes"]
SWEEP_COLUMNS = ["policy", "runs", "success_rate", "mean_time_s", "thickness_min", "thickness_max"]


def aggregate_sweep(rows: Sequence[dict]) -> list[dict]:
    """Per-policy success rate (percent), mean planning time of successful runs and thickness range."""
    out = []
    for policy in dict.fromkeys(r["policy"] for r in rows):
        rs = [r for r in rows if r["policy"] == policy]
        ok = [r for r in rs if int(r["success"])]
        out.append(
            {
                "policy": policy,
                "runs": len(rs),
                "success_rate": 100.0 * len(ok) / len(rs),
                "mean_time_s": float(np.mean([float(r["time_s"]) for r in ok])) if ok else "",
                "thickness_min": min(float(r["thickness_min"]) for r in ok) if ok else "",
                "thickness_max": max(float(r["thickness_max"]) for r in ok) if ok else "",
            }
        )
    return out


def _rows_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    return buf.getvalue()


def run_sweep(
    scenario_path: str | Path,
    policies: Sequence[str | float],
    seeds: Sequence[int],
    out_dir: str | Path | None = None,
    overrides: dict | None = None,
) -> tuple[list[dict], list[dict]]:
    """Planning-only sweep over thickness policies and seeds; returns (per-run rows, summary).

    Runs are independent and spread over worker processes (see ``max_workers``). With
    ``out_dir`` set, ``runs.csv`` and ``sweep.csv`` are written there, and every
    successful path goes to ``paths/<policy>_seed<N>.json``.
    """
    if not policies or not seeds:
        raise ConfigError("a sweep needs at least one policy and one seed")
    scenario_path = str(Path(scenario_path).resolve())
    load_scenario(scenario_path)  # fail fast on configuration problems
    path_dir = str(Path(out_dir) / "paths") if out_dir is not None else None
    jobs = [(scenario_path, _policy_value(p), int(s), dict(overrides or {}), path_dir) for p in policies for s in seeds]
    workers = max_workers(len(jobs))
    if workers == 1:
        rows = [_plan_once(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_plan_once, jobs))
    summary = aggregate_sweep(rows)
    if out_dir is not None:
        out = Path(out_dir)
        write_atomic(out / "runs.csv", _rows_csv(rows, RUN_COLUMNS))
        write_atomic(out / "sweep.csv", _rows_csv(summary, SWEEP_COLUMNS))
    return rows, summary


# --- plots ------------------------------------------------------------------

PLOT_SCRIPT = '''"""Plot hand force and torque ratios from the CSV files next to this script."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent


def read(name):
    with open(here / name) as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


head, rows = read("hand_force.csv")
t = [r[0] for r in rows]
f = [r[1] for r in rows]
fmax = rows[0][2]
fig, ax = plt.subplots()
ax.plot(t, f, label="|F_h|")
ax.axhline(fmax, ls="--", color="k", label="F_max")
k = max(range(len(f)), key=f.__getitem__)
ax.annotate(f"max {f[k]:.2f} N", (t[k], f[k]))
ax.set_xlabel("step")
ax.set_ylabel("N")
ax.legend()
fig.savefig(here / "hand_force.png", dpi=120)

head, rows = read("torque_ratio.csv")
base = None
if (here / "baseline_torque_ratio.csv").exists():
    _, base = read("baseline_torque_ratio.csv")
fig, axes = plt.subplots(len(head) - 1, 1, figsize=(6, 1.6 * (len(head) - 1)), sharex=True)
for j, ax in enumerate(axes, start=1):
    ax.plot([r[0] for r in rows], [r[j] for r in rows], label="optimized")
    if base:
        ax.plot([r[0] for r in base], [r[j] for r in base], label="IK only")
    ax.axhline(1.0, ls="--", color="k")
    ax.set_ylabel(head[j], fontsize=7)
axes[0].legend(fontsize=7)
axes[-1].set_xlabel("step")
fig.tight_layout()
fig.savefig(here / "torque_ratio.png", dpi=120)
'''


def _ratio_csv(traj: JointTrajectory, names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + list(names))
    for t, r in enumerate(traj.ratios, start=1):
        w.writerow([t] + [repr(float(x)) for x in r])
    return buf.getvalue()


def emit_plots(run_dir: str | Path, scn: Scenario | None = None) -> list[Path]:
    """Write plot data CSVs and a self-contained matplotlib script into ``run_dir/plots``."""
    run_dir = Path(run_dir)
    try:
        report = json.loads((run_dir / "report.json").read_text())
        traj = JointTrajectory.from_dict(json.loads((run_dir / report["files"]["trajectory"]).read_text()))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"run directory {run_dir} has no successful trajectory: {exc}") from exc
    if scn is None:
        scn = load_scenario(report["scenario"])
    names = [j.name for j in scn.model.joints]
    out = run_dir / "plots"
    written = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "hand_force_N", "F_max_N"])
    for t, f in enumerate(traj.forces, start=1):
        w.writerow([t, repr(float(np.linalg.norm(f))), repr(float(scn.F_max))])
    write_atomic(out / "hand_force.csv", buf.getvalue())
    write_atomic(out / "torque_ratio.csv", _ratio_csv(traj, names))
    written += [out / "hand_force.csv", out / "torque_ratio.csv"]
    if "baseline" in report["files"]:
        base = JointTrajectory.from_dict(json.loads((run_dir / report["files"]["baseline"]).read_text()))
        write_atomic(out / "baseline_torque_ratio.csv", _ratio_csv(base, names))
        written.append(out / "baseline_torque_ratio.csv")
    write_atomic(out / "plot.py", PLOT_SCRIPT)
    written.append(out / "plot.py")
    return written
