"""Independent reference computations used by the tests.

Nothing here calls into the package's solvers; the oracles are deliberately slow and
simple.
"""

from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

# --- planar statics by grid search ---


def _cross_y(r, f):
    """y component of r x f for vectors in the x-z plane, given as (x, z) pairs."""
    return r[..., 1] * f[..., 0] - r[..., 0] * f[..., 1]


def planar_generators(points, normals, mus, r_h):
    """Exact planar friction-cone edges and their moments about the grasp point.

    All inputs are (x, z) pairs; each contact contributes the two edges of its 2D cone.
    """
    E, M = [], []
    for p, n, mu in zip(points, normals, mus):
        n = np.asarray(n, float) / np.linalg.norm(n)
        t = np.array([-n[1], n[0]])
        for s in (1.0, -1.0):
            e = (n + s * mu * t) / math.hypot(1.0, mu)
            E.append(e)
            M.append(_cross_y(np.asarray(p, float) - r_h, e))
    return np.array(E), np.array(M)


def _grid_pair(Ea, Eb, Ed, ma, mb, md, G, c, lam_max, n0=201, levels=7, n=41):
    """min ||G + la Ea + lb Eb + ld Ed|| with ld fixed by the moment equation, all >= 0."""

    def evaluate(la, lb):
        A, B = np.meshgrid(la, lb, indexing="ij")
        D = (-c - ma * A - mb * B) / md
        F = G + A[..., None] * Ea + B[..., None] * Eb + D[..., None] * Ed
        val = np.linalg.norm(F, axis=-1)
        val[D < 0] = np.inf
        k = np.unravel_index(np.argmin(val), val.shape)
        return val[k], la[k[0]], lb[k[1]]

    grid = np.linspace(0.0, lam_max, n0)
    best, a, b = evaluate(grid, grid)
    if not np.isfinite(best):
        return np.inf
    h = lam_max / (n0 - 1)
    for _ in range(levels):
        la = np.clip(np.linspace(a - 2 * h, a + 2 * h, n), 0.0, None)
        lb = np.clip(np.linspace(b - 2 * h, b + 2 * h, n), 0.0, None)
        v, a2, b2 = evaluate(la, lb)
        if v < best:
            best, a, b = v, a2, b2
        h = 4 * h / (n - 1)
    return best


def planar_min_hand_force(points, normals, mus, r_h, r_g, weight, lam_max=None):
    """Brute-force minimum hand force for a planar (x-z) instance.

    ``weight`` is the gravity vector as (x, z). The reachable set of (contact force,
    contact moment) is a cone in R^3, so by Caratheodory every point of it uses at most
    three edges; each edge triple is searched on a refined 2D grid (the third coefficient
    follows from moment balance). Returns inf if no balance exists.
    """
    r_h = np.asarray(r_h, float)
    G = np.asarray(weight, float)
    mg = float(np.linalg.norm(G))
    c = float(_cross_y(np.asarray(r_g, float) - r_h, G))
    E, M = planar_generators(points, normals, mus, r_h)
    lam_max = 50.0 * mg if lam_max is None else lam_max
    best = mg if abs(c) <= 1e-12 * max(1.0, mg) else np.inf
    for trip in itertools.combinations(range(len(E)), min(3, len(E))):
        trip = list(trip)
        d = max(trip, key=lambda k: abs(M[k]))
        if abs(M[d]) < 1e-12:
            continue
        rest = [k for k in trip if k != d] + [None, None]  # pad with zero generators
        a, b = rest[:2]
        Ea, ma = (E[a], M[a]) if a is not None else (np.zeros(2), 0.0)
        Eb, mb = (E[b], M[b]) if b is not None else (np.zeros(2), 0.0)
        best = min(best, _grid_pair(Ea, Eb, E[d], ma, mb, M[d], G, c, lam_max))
    return best


def random_planar_instance(rng, n_contacts=3, mu_range=(0.0, 1.0), scale=0.5):
    """Random balanceable planar instance: contacts below and mostly behind the COM, hand above."""
    while True:
        pts = np.column_stack([rng.uniform(-scale, 0.3 * scale, n_contacts), rng.uniform(-0.1, 0.1, n_contacts) * scale])
        ang = rng.uniform(-0.6, 0.6, n_contacts)
        nrm = np.column_stack([np.sin(ang), np.cos(ang)])
        mus = rng.uniform(*mu_range, n_contacts)
        r_h = np.array([rng.uniform(-scale, scale), rng.uniform(0.05, 0.3) * scale])
        r_g = np.array([rng.uniform(0.0, 0.5) * scale, rng.uniform(0.0, 0.1) * scale])
        mass = rng.uniform(0.5, 5.0)
        G = np.array([0.0, -mass * 9.80665])
        E, M = planar_generators(pts, nrm, mus, r_h)
        c = _cross_y(r_g - r_h, G)
        if np.any(M * -c > 0) or abs(c) < 1e-12:
            return pts, nrm, mus, r_h, r_g, mass


def lift3(v2, y=0.0):
    v2 = np.atleast_2d(v2)
    return np.column_stack([v2[:, 0], np.full(len(v2), y), v2[:, 1]])


# --- convex overlap and dilation ---


def _halfspaces(points):
    eq = ConvexHull(points).equations
    return eq[:, :3], -eq[:, 3]  # n . x <= b


def interiors_overlap(A, B) -> bool:
    """LP: largest s with a point s deep inside both hulls; overlap iff s > 0."""
    na, ba = _halfspaces(A)
    nb, bb = _halfspaces(B)
    N = np.vstack([na, nb])
    b = np.concatenate([ba, bb])
    A_ub = np.column_stack([N, np.ones(len(N))])
    res = linprog([0, 0, 0, -1], A_ub=A_ub, b_ub=b, bounds=[(None, None)] * 3 + [(None, 1.0)], method="highs")
    return res.status == 0 and -res.fun > 1e-12


def hull_distance(A, B) -> float:
    """Euclidean distance between two convex hulls (0 if they intersect), as an SOCP."""
    a = cp.Variable(len(A), nonneg=True)
    b = cp.Variable(len(B), nonneg=True)
    prob = cp.Problem(cp.Minimize(cp.norm(A.T @ a - B.T @ b)), [cp.sum(a) == 1, cp.sum(b) == 1])
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def dilation_state(A, B, thickness) -> str:
    """'collision' if the originals overlap, 'contact' if only the dilated object does, else 'free'."""
    if interiors_overlap(A, B):
        return "collision"
    return "contact" if hull_distance(A, B) <= thickness else "free"
