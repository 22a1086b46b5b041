from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import planar_2r
from crustplan.contact import Body, ContactSet, extract_contacts
from crustplan.kinematics import GRAVITY, Joint, KinematicModel, jacobian
from crustplan.mesh import box_mesh
from crustplan.quasistatics import (
    GravityLoad,
    build_cones,
    dump_solve,
    joint_torques,
    solve_min_hand_force,
    torque_within_limits,
)
from crustplan.transforms import Pose
from oracles import lift3, planar_min_hand_force, random_planar_instance

MG = 2.5 * GRAVITY


def single(points, normals, mu):
    return ContactSet.from_arrays(points, normals, mu)


# --- friction cones ---


def test_frictionless_cone_collapses_to_normal():
    n = np.array([0.3, -0.2, 0.9])
    cones = build_cones(single([[0, 0, 0]], [n], 0.0))
    np.testing.assert_allclose(cones.edges[0], np.tile(n / np.linalg.norm(n), (8, 1)), atol=1e-15)


def test_unit_friction_four_edges():
    cones = build_cones(single([[0, 0, 0]], [[0, 0, 1]], 1.0), m=4)
    e = cones.edges[0]
    np.testing.assert_allclose(np.degrees(np.arccos(e[:, 2])), 45.0, atol=1e-12)
    h = e[:, :2] / np.linalg.norm(e[:, :2], axis=1, keepdims=True)
    for k in range(4):
        assert h[k] @ h[(k + 1) % 4] == pytest.approx(0.0, abs=1e-12)
        assert h[k] @ h[(k + 2) % 4] == pytest.approx(-1.0, abs=1e-12)


def test_three_edges_rejected():
    with pytest.raises(ValueError):
        build_cones(single([[0, 0, 0]], [[0, 0, 1]], 0.5), m=3)


def test_negative_friction_rejected():
    cs = ContactSet(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), np.array([-0.1]), np.zeros(1), np.zeros(1, int))
    with pytest.raises(ValueError):
        build_cones(cs)


@given(
    normal=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1),
    mu=st.floats(0.0, 2.0),
    m=st.integers(4, 16),
)
def test_cone_edge_invariants(normal, mu, m):
    cones = build_cones(single([[0, 0, 0]], [normal], mu), m=m)
    n = cones.normals[0]
    e = cones.edges[0]
    np.testing.assert_allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(e @ n, math.cos(math.atan(mu)), atol=1e-9)


# --- minimum hand force ---


def test_free_floating_object():
    sol = solve_min_hand_force(ContactSet.empty(), None, GravityLoad(2.5), [0.0, 0.0, 0.3], F_max=30.0)
    np.testing.assert_allclose(sol.F_h, [0.0, 0.0, MG], atol=1e-12)
    assert sol.magnitude == pytest.approx(2.5 * 9.80665, abs=1e-3)
    assert round(sol.magnitude, 2) == 24.52
    assert sol.feasible
    assert not solve_min_hand_force(ContactSet.empty(), None, GravityLoad(2.5), [0, 0, 0], F_max=24.5).feasible


def test_cube_resting_on_slab():
    cube = box_mesh((0.3, 0.3, 0.3))
    slab = [Body(box_mesh((2, 2, 0.1)), Pose.from_translation((0, 0, -0.05)), 0.5)]
    pose = Pose.from_translation((0.0, 0.0, 0.15 + 0.002))
    cs = extract_contacts(cube, pose, slab, 0.01)
    sol = solve_min_hand_force(cs, build_cones(cs), GravityLoad(2.5), [0.15, 0.0, 0.25], object_pose=pose)
    assert sol.balanced
    assert sol.magnitude <= 1e-6


def test_lever_rod():
    """Uniform 1 m rod, one end on an edge, hand at the other end."""
    cs = single([[0, -0.01, 0], [0, 0.01, 0]], [[0, 0, 1]] * 2, 5.0)
    sol = solve_min_hand_force(cs, build_cones(cs), GravityLoad(2.5, com=[0.5, 0, 0]), [1.0, 0, 0])
    np.testing.assert_allclose(sol.F_h, [0.0, 0.0, MG / 2], atol=1e-3)


def test_unbalanceable_reports_compromise():
    # frictionless support far from the COM with the hand on the same vertical line as the support
    cs = single([[0, 0, 0]], [[0, 0, 1]], 0.0)
    sol = solve_min_hand_force(cs, build_cones(cs), GravityLoad(1.0, com=[1.0, 0, 0]), [0.0, 0.0, 0.5])
    assert not sol.balanced and not sol.feasible


def test_cap_is_post_check():
    cs = single([[0, -0.01, 0], [0, 0.01, 0]], [[0, 0, 1]] * 2, 5.0)
    load = GravityLoad(2.5, com=[0.5, 0, 0])
    a = solve_min_hand_force(cs, build_cones(cs), load, [1.0, 0, 0], F_max=12.0)
    b = solve_min_hand_force(cs, build_cones(cs), load, [1.0, 0, 0], F_max=13.0)
    np.testing.assert_array_equal(a.F_h, b.F_h)
    assert a.balanced and not a.feasible and b.feasible


@pytest.mark.parametrize("seed", range(10))
def test_matches_planar_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    pts, nrm, mus, r_h, r_g, mass = random_planar_instance(rng, n_contacts=3)
    ref = planar_min_hand_force(pts, nrm, mus, r_h, r_g, np.array([0.0, -mass * GRAVITY]))
    cs = single(lift3(pts), lift3(nrm), mus)
    sol = solve_min_hand_force(cs, build_cones(cs), GravityLoad(mass, lift3(r_g)[0]), lift3(r_h)[0])
    assert abs(sol.magnitude - ref) <= 0.02 * ref + 1e-6 * mass * GRAVITY


def _random_instance(rng, n):
    pts = rng.uniform(-0.3, 0.3, (n, 3))
    pts[:, 2] = rng.uniform(-0.02, 0.0, n)
    nrm = rng.normal(size=(n, 3)) * 0.3 + [0, 0, 1]
    load = GravityLoad(rng.uniform(0.5, 5.0), com=rng.uniform(-0.2, 0.2, 3))
    r_h = rng.uniform(-0.3, 0.3, 3)
    return pts, nrm, rng.uniform(0, 1, n), load, r_h


@given(seed=st.integers(0, 100_000))
def test_frictionless_single_support_scales_with_mass(seed):
    # a single frictionless point can only balance a planar instance
    rng = np.random.default_rng(seed)
    pts, nrm, mus, r_h, r_g, mass = random_planar_instance(rng, n_contacts=1, mu_range=(0.0, 0.0))
    cs = single(lift3(pts), lift3(nrm), mus)
    load = GravityLoad(mass, lift3(r_g)[0])
    a = solve_min_hand_force(cs, build_cones(cs), load, lift3(r_h)[0])
    b = solve_min_hand_force(cs, build_cones(cs), load.scaled(2.0), lift3(r_h)[0])
    assert a.balanced and b.balanced
    np.testing.assert_allclose(b.F_h, 2.0 * a.F_h, atol=1e-9 * mass * GRAVITY)


@given(seed=st.integers(0, 100_000), n=st.integers(1, 5))
def test_adding_a_contact_never_increases_force(seed, n):
    rng = np.random.default_rng(seed)
    pts, nrm, mus, load, r_h = _random_instance(rng, n + 1)
    fewer = single(pts[:n], nrm[:n], mus[:n])
    more = single(pts, nrm, mus)
    a = solve_min_hand_force(fewer, build_cones(fewer), load, r_h)
    b = solve_min_hand_force(more, build_cones(more), load, r_h)
    if a.balanced:
        assert b.balanced
        assert b.magnitude <= a.magnitude + 1e-6 * load.mass * GRAVITY


@given(seed=st.integers(0, 100_000), n=st.integers(1, 6))
def test_balance_residuals_by_substitution(seed, n):
    rng = np.random.default_rng(seed)
    pts, nrm, mus, load, r_h = _random_instance(rng, n)
    cs = single(pts, nrm, mus)
    cones = build_cones(cs)
    sol = solve_min_hand_force(cs, cones, load, r_h)
    if not sol.balanced:
        return
    assert np.all(sol.lam >= -1e-9)
    F_s = np.einsum("ij,ijk->ik", sol.lam, cones.edges)
    G = load.weight
    mg = load.mass * GRAVITY
    force = F_s.sum(axis=0) + sol.F_h + G
    torque = np.cross(pts - r_h, F_s).sum(axis=0) + np.cross(load.com - r_h, G)
    L = max(np.linalg.norm(pts - r_h, axis=1).max(), np.linalg.norm(load.com - r_h))
    assert np.linalg.norm(force) <= 1e-6 * max(1.0, mg)
    assert np.linalg.norm(torque) <= 1e-6 * max(1.0, mg * L)


@given(tilt=st.floats(-0.5, 0.5), n=st.integers(3, 6), seed=st.integers(0, 1000))
def test_frictionless_plane_cannot_hold_tangential_gravity(tilt, n, seed):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-0.3, 0.3, (n, 2)), np.zeros(n)])
    cs = single(pts, [[0, 0, 1]] * n, 0.0)
    g_dir = np.array([math.sin(tilt), 0.0, -math.cos(tilt)])
    load = GravityLoad(2.0, com=[0.0, 0.0, 0.05], direction=g_dir)
    sol = solve_min_hand_force(cs, build_cones(cs), load, [0.0, 0.0, 0.05])
    G = load.weight
    np.testing.assert_allclose(sol.F_h[:2], -G[:2], atol=1e-6)


def test_dump_solve(tmp_path):
    cs = single([[0, 0, 0]], [[0, 0, 1]], 0.5)
    cones = build_cones(cs)
    load = GravityLoad(1.0)
    sol = solve_min_hand_force(cs, cones, load, [0.1, 0, 0.1])
    dump_solve(tmp_path / "s.json", cs, cones, load, [0.1, 0, 0.1], sol)
    rec = json.loads((tmp_path / "s.json").read_text())
    assert rec["solution"]["F_h"] == pytest.approx(sol.F_h.tolist())
    assert len(rec["cone_edges"][0]) == 8


# --- joint torques ---


def test_zero_force_zero_torque():
    assert np.all(joint_torques(jacobian(planar_2r(), np.array([0.3, 0.4])), np.zeros(3)) == 0)


def test_single_link_moment_arm():
    link = KinematicModel(
        joints=(Joint("j", "revolute", np.array([0.0, 1.0, 0.0]), Pose.identity(), -3, 3, -50, 50),),
        tcp=Pose.from_translation((1.0, 0.0, 0.0)),
        base_frame_joint=-1,
    )
    tau = joint_torques(jacobian(link, np.zeros(1)), [0.0, 0.0, -10.0])
    assert abs(tau[0]) == pytest.approx(10.0, abs=1e-12)


def test_torque_limit_report():
    m = planar_2r(effort=10.0)
    r = torque_within_limits(m, np.zeros(2))
    assert r.within and np.all(r.ratios == 0)
    r = torque_within_limits(m, np.array([2.0, -10.1]))
    assert not r.within and r.flagged == (1,)
    assert r.worst_joint == 1 and r.worst_ratio == pytest.approx(1.01)
    with pytest.raises(ValueError):
        torque_within_limits(m, np.zeros(3))


@given(q=st.tuples(st.floats(-3, 3), st.floats(-3, 3)), F=st.tuples(*[st.floats(-20, 20)] * 3))
def test_ratios_linear_in_force(q, F):
    m = planar_2r(effort=10.0)
    J = jacobian(m, np.array(q))
    r1 = torque_within_limits(m, joint_torques(J, F)).ratios
    r2 = torque_within_limits(m, joint_torques(J, 2 * np.asarray(F))).ratios
    np.testing.assert_allclose(r2, 2 * r1, atol=1e-12)
