from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crustplan.kinematics import Joint, KinematicModel
from crustplan.transforms import Pose

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
UNLOAD = SCENARIOS / "unload_slab.json"
WEAK_ELBOW = SCENARIOS / "unload_slab_weak_elbow.json"
TWO_GRASPS = SCENARIOS / "unload_slab_two_grasps.json"
ROBOT = SCENARIOS / "robots" / "xarm7_mobile.json"

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def revolute(name, axis, xyz=(0.0, 0.0, 0.0), lim=(-math.pi, math.pi), effort=100.0):
    return Joint(name, "revolute", np.asarray(axis, float), Pose.from_translation(xyz), lim[0], lim[1], -effort, effort)


def prismatic(name, axis, lim=(-5.0, 5.0), effort=1000.0):
    return Joint(name, "prismatic", np.asarray(axis, float), Pose.identity(), lim[0], lim[1], -effort, effort)


def planar_2r(effort: float = 100.0) -> KinematicModel:
    """Two unit links turning about z; the TCP sits at the end of link 2."""
    return KinematicModel(
        joints=(revolute("j1", (0, 0, 1), effort=effort), revolute("j2", (0, 0, 1), (1, 0, 0), effort=effort)),
        tcp=Pose.from_translation((1.0, 0.0, 0.0)),
        base_frame_joint=-1,
    )


def random_model(rng: np.random.Generator, n_arm: int = 5, locked_base: bool = False) -> KinematicModel:
    """Mobile base (x, y, yaw) followed by ``n_arm`` revolute joints with random axes and offsets."""
    lim = (0.0, 0.0) if locked_base else (-5.0, 5.0)
    joints = [
        prismatic("base_x", (1, 0, 0), lim),
        prismatic("base_y", (0, 1, 0), lim),
        revolute("base_yaw", (0, 0, 1), lim=(lim[0], lim[1]) if locked_base else (-math.pi, math.pi)),
    ]
    for k in range(n_arm):
        axis = rng.normal(size=3)
        joints.append(revolute(f"a{k}", axis / np.linalg.norm(axis), rng.uniform(-0.3, 0.3, 3)))
    return KinematicModel(
        joints=tuple(joints),
        tcp=Pose.from_translation(rng.uniform(-0.1, 0.1, 3)),
        base_pivot=np.array([-0.2, 0.0, 0.1]),
        compliance=(math.radians(0.5), math.radians(0.859)),
    )


def random_q(model: KinematicModel, rng: np.random.Generator) -> np.ndarray:
    lo = np.maximum(model.lower, -math.pi)
    hi = np.minimum(model.upper, math.pi)
    return rng.uniform(lo, hi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """Seed-0 end-to-end runs of the shipped scenarios, shared by the scenario and acceptance tests."""
    from crustplan.scenario import load_scenario, run_pipeline

    runs = {}
    for path in (UNLOAD, WEAK_ELBOW, TWO_GRASPS):
        out = tmp_path_factory.mktemp(path.stem)
        scn = load_scenario(path)
        runs[path.stem] = (scn, run_pipeline(scn, seed=0, out_dir=out), out)
    return runs


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
