"""Grasp wrench space and the epsilon / volume quality measures.

Wrenches are 6-vectors ``(force, torque / rho)`` with unit-norm forces on a
discretised friction cone; ``rho`` (the object's max radius about its center
of mass) makes torques scale-free.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull, QhullError
from scipy.special import ndtri
from scipy.stats import qmc

from . import _accel
from . import _kernels as nb
from . import _kernels_np as npk
from .errors import GeometryError, InputError
from .spatial import require_watertight, surface_distances

DEFAULT_DELTA = 0.003
DEFAULT_MU = 1.0
DEFAULT_CONE_EDGES = 8
PALM_MULTIPLIER = 3.0
EPSILON_FLOOR = 1e-12  # support values below this are round-off of a zero


@dataclass(frozen=True)
class Contact:
    position: np.ndarray
    normal: np.ndarray  # unit, pointing into the object
    vertex: int


@dataclass(frozen=True)
class WrenchSet:
    primitives: np.ndarray  # (n, 6)
    mu: float = DEFAULT_MU
    cone_edges: int = DEFAULT_CONE_EDGES
    rho: float = 1.0

    def __len__(self):
        return self.primitives.shape[0]


@dataclass(frozen=True)
class GraspQuality:
    epsilon: float
    volume_v: float
    volume_std_error: float
    n_phalanges: int
    palm_contact: bool
    score_G: float
    n_contacts: int = 0


def extract_contacts(hand, obj, delta=DEFAULT_DELTA, normals="face"):
    """One contact per hand vertex within ``delta`` of the object surface.

    Interior hand vertices count too (their distance is to the nearest
    surface point). The contact sits at that surface point; its normal is
    the inward normal of the closest face, or with ``normals="smooth"`` the
    inward barycentric interpolation of the area-weighted vertex normals.
    """
    require_watertight(obj)
    d, cp, f = surface_distances(hand.vertices, obj)
    sel = np.flatnonzero(d <= delta)
    if normals == "face":
        n = -obj.face_normals[f[sel]]
    elif normals == "smooth":
        n = -_interpolated_normals(obj, cp[sel], f[sel])
    else:
        raise ValueError(f"unknown normal mode {normals!r}")
    return [Contact(cp[i].copy(), n[k], int(i)) for k, i in enumerate(sel)]


def _interpolated_normals(obj, points, faces):
    t = obj.triangles[faces]
    vn = obj.vertex_normals[obj.faces[faces]]
    e0, e1 = t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]
    p = points - t[:, 0]
    d00 = np.einsum("ij,ij->i", e0, e0)
    d01 = np.einsum("ij,ij->i", e0, e1)
    d11 = np.einsum("ij,ij->i", e1, e1)
    d20 = np.einsum("ij,ij->i", p, e0)
    d21 = np.einsum("ij,ij->i", p, e1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    u = 1.0 - v - w
    n = u[:, None] * vn[:, 0] + v[:, None] * vn[:, 1] + w[:, None] * vn[:, 2]
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def tangent_basis(normal):
    n = np.asarray(normal, dtype=np.float64)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    t1 = helper - (helper @ n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def wrench_primitives(contacts, mu=DEFAULT_MU, cone_edges=DEFAULT_CONE_EDGES, center_of_mass=(0.0, 0.0, 0.0), rho=1.0):
    """Friction-cone edge wrenches for point contacts with Coulomb friction.

    Each contact contributes ``cone_edges`` unit forces at half-angle
    ``atan(mu)`` around its inward normal, paired with torque
    ``(position - center_of_mass) x force / rho``.
    """
    if mu < 0:
        raise ValueError("friction coefficient must be non-negative")
    if cone_edges < 3:
        raise ValueError("need at least 3 friction cone edges")
    if not rho > 0:
        raise ValueError("torque scale rho must be positive")
    com = np.asarray(center_of_mass, dtype=np.float64)
    phi = 2.0 * np.pi * np.arange(cone_edges) / cone_edges
    rows = []
    for c in contacts:
        n = np.asarray(c.normal, dtype=np.float64)
        nn = np.linalg.norm(n)
        if not abs(nn - 1.0) < 1e-6:
            raise GeometryError(f"contact normal for vertex {c.vertex} is degenerate (|n| = {nn:.3g})")
        n = n / nn
        t1, t2 = tangent_basis(n)
        f = n[None] + mu * (np.cos(phi)[:, None] * t1 + np.sin(phi)[:, None] * t2)
        f /= np.sqrt(1.0 + mu * mu)
        tau = np.cross(np.asarray(c.position) - com, f) / rho
        rows.append(np.hstack([f, tau]))
    prims = np.vstack(rows) if rows else np.zeros((0, 6))
    return WrenchSet(prims, float(mu), int(cone_edges), float(rho))


def _as_wrenches(ws):
    w = ws.primitives if isinstance(ws, WrenchSet) else np.asarray(ws, dtype=np.float64)
    return w.reshape(-1, 6)


def sphere_directions(n, dim=6, seed=0):
    """Scrambled Sobol points pushed through the normal quantile onto the unit sphere."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n)
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def support_min(w, u):
    """``min_k max_i w_i . u_k`` and the minimising direction index."""
    h = (u @ w.T).max(axis=1)
    k = int(np.argmin(h))
    return float(h[k]), k


def _refine_direction(w, u0, iters):
    # epigraph form: minimise t subject to w_i . u <= t and |u| = 1
    x0 = np.append(u0, (w @ u0).max())
    cons = [
        {"type": "ineq", "fun": lambda x: x[6] - w @ x[:6], "jac": lambda x: np.hstack([-w, np.ones((w.shape[0], 1))])},
        {"type": "eq", "fun": lambda x: x[:6] @ x[:6] - 1.0, "jac": lambda x: np.append(2.0 * x[:6], 0.0)},
    ]
    res = optimize.minimize(
        lambda x: x[6],
        x0,
        jac=lambda x: np.eye(7)[6],
        constraints=cons,
        method="SLSQP",
        options={"maxiter": iters, "ftol": 1e-12},
    )
    u = res.x[:6]
    nu = np.linalg.norm(u)
    if not np.isfinite(nu) or nu == 0:
        return u0
    return u / nu


def epsilon_metric(ws, n_dirs=4096, refine_iters=50, seed=0, n_starts=8):
    """Radius of the largest origin-centred ball inside the wrench hull.

    Minimises the support function ``h(u) = max_i w_i . u`` over unit
    directions: a Sobol sweep of ``n_dirs`` directions, then local SLSQP
    refinement from the ``n_starts`` best ones. Returns 0 when some
    direction has ``h(u) <= 0`` (no force closure).
    """
    w = _as_wrenches(ws)
    if w.shape[0] == 0:
        raise GeometryError("empty wrench set")
    u = sphere_directions(n_dirs, seed=seed)
    h = (u @ w.T).max(axis=1)
    best = float(h.min())
    if best <= EPSILON_FLOOR:
        return 0.0
    for k in np.argsort(h, kind="stable")[:n_starts]:
        v = _refine_direction(w, u[k], refine_iters)
        best = min(best, float((w @ v).max()))
    return best if best > EPSILON_FLOOR else 0.0


def _affine_rank(w, tol=1e-9):
    centered = w - w.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    scale = max(float(s[0]) if s.size else 0.0, 1e-300)
    return int((s > tol * scale).sum())


def _facet_order(eq, samples, pilot=256):
    # most-violated facets first, judged on a pilot batch; ties keep Qhull's order
    probe = samples[:pilot]
    hits = np.zeros(eq.shape[0], dtype=np.int64)
    block = max(1, (1 << 20) // max(1, probe.shape[0]))
    for start in range(0, eq.shape[0], block):
        e = eq[start : start + block]
        hits[start : start + block] = ((probe @ e[:, :-1].T + e[:, -1]) > 0).sum(axis=0)
    order = np.argsort(-hits, kind="stable")
    return np.ascontiguousarray(eq[order, :-1]), np.ascontiguousarray(eq[order, -1])


def _inner_polytope(vertices, samples, n_dirs=128):
    """Hull of the vertices extreme along a few directions: a cheap inside certificate."""
    empty = (np.zeros((0, 6)), np.zeros(0))
    if vertices.shape[0] <= 4 * n_dirs:
        return empty
    u = sphere_directions(n_dirs, seed=12345)
    pick = np.unique(np.concatenate([np.argmax(vertices @ u.T, axis=0), np.argmin(vertices @ u.T, axis=0)]))
    try:
        eq = ConvexHull(vertices[pick]).equations
    except QhullError:
        return empty
    return _facet_order(eq, samples)


def hull_membership(w, samples, method="halfspace", tol=1e-9, max_iter=2000):
    """Whether each sample lies in the convex hull of the rows of ``w``.

    ``halfspace`` tests against the Qhull facet inequalities; ``projection``
    finds each sample's nearest hull point (Wolfe's minimum-norm-point
    iteration) and accepts samples whose distance is at most ``tol``.
    """
    if method == "halfspace":
        hull = ConvexHull(w)
        normals, offsets = _facet_order(hull.equations, samples)
        in_n, in_o = _inner_polytope(w[hull.vertices], samples)
        kernel = nb.halfspace_inside if _accel.enabled() else npk.halfspace_inside
        return kernel(in_n, in_o, normals, offsets, np.ascontiguousarray(samples), tol)
    if method == "projection":
        dist_fn = nb.hull_distance if _accel.enabled() else npk.hull_distance
        return dist_fn(np.ascontiguousarray(w), np.ascontiguousarray(samples), max_iter, tol) <= tol
    raise ValueError(f"unknown membership method {method!r}")


def volume_metric(ws, n_samples=200_000, seed=0, method="halfspace"):
    """Monte Carlo volume of the 6-D wrench hull: ``(v, std_error)``.

    Uniform samples in the primitives' bounding box; ``v`` is the box volume
    times the hit fraction. Hulls that are not full-dimensional have volume
    exactly 0.
    """
    w = _as_wrenches(ws)
    if w.shape[0] < 7 or _affine_rank(w) < 6:
        return 0.0, 0.0
    lo, hi = w.min(axis=0), w.max(axis=0)
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((int(n_samples), 6))
    try:
        inside = hull_membership(w, x, method)
    except QhullError:
        return 0.0, 0.0
    p = float(inside.mean())
    return box * p, box * float(np.sqrt(p * (1.0 - p) / n_samples))


def grasp_score(epsilon, volume_v, n_phalanges, palm_contact):
    """``gamma_palm * sqrt(N_p) * |(epsilon, v)|`` with ``gamma_palm`` 3 or 1."""
    if epsilon < 0 or volume_v < 0:
        raise ValueError("epsilon and v must be non-negative")
    gamma = PALM_MULTIPLIER if palm_contact else 1.0
    return float(gamma * (np.sqrt(n_phalanges) * np.hypot(epsilon, volume_v)))


def count_phalanges(hand, obj, annotation, delta=DEFAULT_DELTA):
    """Number of phalanx sets with a vertex within ``delta`` of the surface, and palm contact."""
    annotation.validate(hand.n_vertices)
    if not annotation.phalanges:
        raise InputError("annotation has no phalanx sets")
    d, _, _ = surface_distances(hand.vertices, obj)
    near = d <= delta
    n_p = sum(bool(near[p].any()) for p in annotation.phalanges if p.size)
    palm = bool(annotation.palm.size and near[annotation.palm].any())
    return int(n_p), palm


def grasp_quality(
    hand,
    obj,
    annotation,
    delta=DEFAULT_DELTA,
    mu=DEFAULT_MU,
    cone_edges=DEFAULT_CONE_EDGES,
    seed=0,
    n_dirs=4096,
    n_samples=200_000,
):
    """Contacts, GWS, epsilon, v, phalanx count and the combined score for one grasp."""
    from .sim import mass_properties

    contacts = extract_contacts(hand, obj, delta)
    _, com, _ = mass_properties(obj, 1.0)
    rho = float(np.linalg.norm(obj.vertices - com, axis=1).max())
    n_p, palm = count_phalanges(hand, obj, annotation, delta)
    if contacts:
        ws = wrench_primitives(contacts, mu, cone_edges, com, rho)
        eps = epsilon_metric(ws, n_dirs=n_dirs, seed=seed)
        v, se = volume_metric(ws, n_samples=n_samples, seed=seed)
    else:
        eps, v, se = 0.0, 0.0, 0.0
    return GraspQuality(eps, v, se, n_p, palm, grasp_score(eps, v, n_p, palm), len(contacts))
