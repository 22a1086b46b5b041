"""End-to-end acceptance checks; each test prints one PASS/FAIL line for its criterion.

The lines are also collected into the terminal summary (see ``conftest.py``).
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
import trimesh
from scipy.spatial.transform import Rotation

from conftest import ACCEPTANCE, ROBOT, UNLOAD, random_model, random_q
from crustplan import cli
from crustplan.contact import Body, ContactSet, ContactState, classify, extract_contacts
from crustplan.kinematics import GRAVITY, fk, jacobian, load_model
from crustplan.mesh import TriMesh, box_mesh
from crustplan.planner import validate_path
from crustplan.quasistatics import GravityLoad, build_cones, joint_torques, solve_min_hand_force
from crustplan.scenario import (
    STATUS_SUCCESS,
    calibrate_compliance,
    load_scenario,
    path_targets,
    run_sweep,
    unsupported_forces,
)
from crustplan.trajectory import JointTrajectory, validate_trajectory
from crustplan.transforms import Pose
from oracles import dilation_state, lift3, planar_min_hand_force, random_planar_instance

pytestmark = pytest.mark.slow


@contextmanager
def criterion(n: int):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        ACCEPTANCE[n] = (False, info["detail"])
        print(f"criterion {n}: FAIL {info['detail']}")
        raise
    ACCEPTANCE[n] = (True, info["detail"])
    print(f"criterion {n}: PASS {info['detail']}")


def test_criterion_01_statics_matches_grid_search():
    with criterion(1) as info:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 4))
            pts, nrm, mus, r_h, r_g, mass = random_planar_instance(rng, n_contacts=n)
            ref = planar_min_hand_force(pts, nrm, mus, r_h, r_g, np.array([0.0, -mass * GRAVITY]))
            cs = ContactSet.from_arrays(lift3(pts), lift3(nrm), mus)
            sol = solve_min_hand_force(cs, build_cones(cs), GravityLoad(mass, lift3(r_g)[0]), lift3(r_h)[0])
            err = abs(sol.magnitude - ref)
            # relative error, with a micro-newton floor for optima that are exactly zero
            worst = max(worst, err / max(ref, 1e-6 * mass * GRAVITY / 0.02))
        elapsed = time.perf_counter() - t0
        info["detail"] = f"worst relative error {100 * worst:.3f}% over 50 instances, {elapsed:.1f} s"
        assert worst <= 0.02
        assert elapsed < 10.0


def test_criterion_02_analytic_statics():
    with criterion(2) as info:
        free = solve_min_hand_force(ContactSet.empty(), None, GravityLoad(2.5), [0.0, 0.0, 0.3])
        cube = box_mesh((0.3, 0.3, 0.3))
        slab = [Body(box_mesh((2, 2, 0.1)), Pose.from_translation((0, 0, -0.05)), 0.5)]
        pose = Pose.from_translation((0.0, 0.0, 0.152))
        cs = extract_contacts(cube, pose, slab, 0.01)
        supported = solve_min_hand_force(cs, build_cones(cs), GravityLoad(2.5), [0.15, 0.0, 0.25], object_pose=pose)
        rod_cs = ContactSet.from_arrays([[0, -0.01, 0], [0, 0.01, 0]], [[0, 0, 1]] * 2, 5.0)
        rod = solve_min_hand_force(rod_cs, build_cones(rod_cs), GravityLoad(2.5, com=[0.5, 0, 0]), [1.0, 0, 0])
        mg = 2.5 * GRAVITY
        info["detail"] = (
            f"free {free.magnitude:.4f} N (reported {free.magnitude:.2f}), "
            f"supported {supported.magnitude:.1e} N, rod {rod.magnitude:.4f} N"
        )
        # with g = 9.80665 the exact weight is 24.5166 N, printed to two decimals as 24.52
        assert abs(free.magnitude - mg) <= 1e-3 and f"{free.magnitude:.2f}" == "24.52"
        assert supported.magnitude <= 1e-6
        assert abs(rod.magnitude - mg / 2) <= 1e-3


def _rotation_log(R):
    return Rotation.from_matrix(R).as_rotvec()


def test_criterion_03_jacobian_and_virtual_work():
    with criterion(3) as info:
        rng = np.random.default_rng(33)
        shipped = load_model(ROBOT)
        h = 1e-6
        worst_J = worst_tau = 0.0
        for k in range(100):
            m = shipped if k % 2 else random_model(rng)
            q = random_q(m, rng)
            F = rng.normal(size=3) * 20.0
            J = jacobian(m, q)
            J_fd = np.zeros_like(J)
            tau_fd = np.zeros(m.dof)
            for i in range(m.dof):
                e = np.zeros(m.dof)
                e[i] = h
                a, b = fk(m, q + e), fk(m, q - e)
                J_fd[:3, i] = (a.translation - b.translation) / (2 * h)
                J_fd[3:, i] = _rotation_log(a.rotation @ b.rotation.T) / (2 * h)
                tau_fd[i] = (F @ a.translation - F @ b.translation) / (2 * h)  # virtual work
            worst_J = max(worst_J, np.abs(J - J_fd).max())
            worst_tau = max(worst_tau, np.abs(joint_torques(J, F) - tau_fd).max())
        info["detail"] = f"max |J - J_fd| {worst_J:.1e}, max |tau - tau_vw| {worst_tau:.1e} over 100 configurations"
        assert worst_J <= 1e-5
        assert worst_tau <= 1e-4


def _hull(rng, n):
    pts = rng.normal(size=(n, 3)) * rng.uniform(0.05, 0.25, 3)
    hull = trimesh.convex.convex_hull(pts)
    return TriMesh(hull.vertices, hull.faces)


def test_criterion_04_classification_matches_dilation_oracle():
    with criterion(4) as info:
        rng = np.random.default_rng(404)
        counts = {"collision": 0, "contact": 0, "free": 0}
        disagreements = 0
        for k in range(100):
            A, B = _hull(rng, int(rng.integers(8, 15))), _hull(rng, int(rng.integers(8, 15)))
            pa = Pose(Rotation.random(random_state=k).as_matrix(), rng.uniform(-0.4, 0.4, 3))
            pb = Pose(Rotation.random(random_state=1000 + k).as_matrix(), np.zeros(3))
            t = float(rng.uniform(0.005, 0.1))
            got = classify(A, pa, [Body(B, pb)], t).state
            want = dilation_state(pa.apply(A.vertices), pb.apply(B.vertices), t)
            counts[want] += 1
            disagreements += got.value != want
        info["detail"] = f"{disagreements} disagreements over 100 scenes {counts}"
        assert {s.value for s in ContactState} == set(counts)
        assert min(counts.values()) >= 10
        assert disagreements == 0


SWEEP_POLICIES = ["0.005", "0.015", "0.03", "dynamic"]


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    rows, summary = run_sweep(UNLOAD, SWEEP_POLICIES, list(range(10)), out_dir=out)
    return rows, {r["policy"]: r for r in summary}, out


def test_criterion_05_thickness_trend(sweep):
    with criterion(5) as info:
        rows, summary, _ = sweep
        rate = {p: summary[p]["success_rate"] for p in ("fixed_0.005", "fixed_0.015", "fixed_0.03", "dynamic")}
        cap = load_scenario(UNLOAD).params.max_time
        slowest = max(float(r["time_s"]) for r in rows)
        info["detail"] = ", ".join(f"{p} {v:.0f}%" for p, v in rate.items()) + f"; slowest attempt {slowest:.1f} s"
        assert all(summary[p]["runs"] == 10 for p in summary)
        assert rate["fixed_0.03"] >= rate["fixed_0.015"] >= rate["fixed_0.005"]
        assert abs(rate["dynamic"] - rate["fixed_0.03"]) <= 20.0
        assert slowest <= cap


def test_criterion_06_every_path_validates(sweep, pipeline_runs):
    with criterion(6) as info:
        scn = load_scenario(UNLOAD)
        _, _, out = sweep
        checked = bad = 0
        for f in sorted((out / "paths").glob("*.json")):
            report = validate_path(json.loads(f.read_text()), scn.environment, scn.object, scn.load, scn.F_max)
            checked += 1
            bad += not report.ok
        for s, report, run_dir in pipeline_runs.values():
            d = json.loads((run_dir / report.files["path"]).read_text())
            r = validate_path(d, s.environment, s.object, s.load, s.F_max, s.params.max_contacts, s.params.cone_edges)
            checked += 1
            bad += not r.ok
        info["detail"] = f"{checked} paths checked, {bad} with violations"
        assert checked >= 3
        assert bad == 0


def _load_run(scn, report, run_dir):
    path = json.loads((run_dir / report.files["path"]).read_text())
    traj = JointTrajectory.from_dict(json.loads((run_dir / report.files["trajectory"]).read_text()))
    base = JointTrajectory.from_dict(json.loads((run_dir / report.files["baseline"]).read_text()))
    return path, traj, base


def test_criterion_07_trajectory_invariants(pipeline_runs):
    with criterion(7) as info:
        peaks = {}
        for name, (scn, report, run_dir) in pipeline_runs.items():
            assert report.status == STATUS_SUCCESS, name
            path, traj, _ = _load_run(scn, report, run_dir)
            targets, forces = path_targets(path)
            tol = scn.tolerances
            peaks[name] = traj.peak_ratio
            assert np.all(traj.ratios < 1.0)
            assert np.all(traj.q[1:, 1] == traj.q[:-1, 1]) and np.all(traj.q[1:, 2] == traj.q[:-1, 2])
            assert np.all(np.abs(np.diff(traj.q[:, 0])) <= tol.d_x)
            assert np.all(traj.pose_errors[:, 0] <= tol.eps_p) and np.all(traj.pose_errors[:, 1] <= tol.eps_r)
            assert validate_trajectory(scn.model, traj, targets, forces, tol).ok
        info["detail"] = "peak ratios " + ", ".join(f"{k} {v:.3f}" for k, v in peaks.items())


def test_criterion_08_optimized_peak_below_baseline(pipeline_runs):
    with criterion(8) as info:
        rows = []
        for name, (scn, report, run_dir) in pipeline_runs.items():
            _, traj, base = _load_run(scn, report, run_dir)
            rows.append((name, traj.peak_ratio, base.peak_ratio))
        info["detail"] = "; ".join(f"{n}: optimized {a:.3f} vs IK-only {b:.3f}" for n, a, b in rows)
        assert all(a <= b for _, a, b in rows)
        assert any(b > 1.0 and a < 1.0 for _, a, b in rows)


def test_criterion_09_environment_support_needed(pipeline_runs):
    with criterion(9) as info:
        scn, report, run_dir = pipeline_runs["unload_slab"]
        path = json.loads((run_dir / report.files["path"]).read_text())
        alone = unsupported_forces(scn, path)
        _, forces = path_targets(path)
        with_env = np.linalg.norm(forces, axis=1)
        over = int(np.sum(alone > scn.F_max))
        info["detail"] = (
            f"without environment max |F_h| {alone.max():.2f} N > F_max {scn.F_max:.2f} N at {over}/{len(alone)} steps "
            f"(with environment max {with_env.max():.2f} N)"
        )
        assert over >= 1


def test_criterion_10_calibration():
    with criterion(10) as info:
        a = math.degrees(calibrate_compliance(1.718, 0.015))
        b = math.degrees(calibrate_compliance(1.667, 0.025))
        # both measured pairs must imply about the same arm length
        L_a = 0.015 / math.tan(math.radians(0.5))
        L_b = 0.025 / math.tan(math.radians(0.859))
        spread = abs(L_a - L_b) / (0.5 * (L_a + L_b))
        info["detail"] = f"{a:.3f} deg and {b:.3f} deg; implied arm lengths {L_a:.3f} m and {L_b:.3f} m ({100 * spread:.1f}% apart)"
        assert f"{a:.3f}" == "0.500" and f"{b:.3f}" == "0.859"
        assert spread <= 0.05


def test_criterion_11_determinism(pipeline_runs, tmp_path):
    with criterion(11) as info:
        _, report, first = pipeline_runs["unload_slab"]
        assert cli.main(["run", str(UNLOAD), "--seed", "0", "--out", str(tmp_path)]) == cli.EXIT_OK
        names = sorted(p.name for p in first.glob("*.json"))
        same = [n for n in names if (first / n).read_bytes() == (tmp_path / n).read_bytes()]
        info["detail"] = f"{len(same)}/{len(names)} JSON files byte-identical ({', '.join(names)})"
        assert len(names) >= 4 and same == names
