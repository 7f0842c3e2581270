"""Vectorised numpy versions of the compiled kernels.

Same contracts as ``_kernels``; brute force over all primitives in chunks
instead of BVH traversal. Selected when numba is disabled.
"""

import numpy as np

from ._kernels import EDGE_EPS, SURFACE_EPS

_CHUNK = 1 << 20  # elements per (queries x primitives) block


def _chunks(n_queries, n_prims):
    step = max(1, _CHUNK // max(1, n_prims))
    for s in range(0, n_queries, step):
        yield slice(s, min(n_queries, s + step))


def _dot(u, v):
    return np.einsum("...k,...k->...", u, v)


def closest_point_triangles(p, a, b, c):
    """Closest points from ``p`` (..., 3) to triangles ``a, b, c`` (broadcast)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    region = np.select(conds, np.arange(6), default=6)
    shape = np.broadcast_shapes(p.shape, a.shape)
    q = np.empty(shape)
    a_ = np.broadcast_to(a, shape)
    b_ = np.broadcast_to(b, shape)
    c_ = np.broadcast_to(c, shape)
    ab_ = np.broadcast_to(ab, shape)
    ac_ = np.broadcast_to(ac, shape)
    for r, pick in enumerate(
        (
            lambda m: a_[m],
            lambda m: b_[m],
            lambda m: a_[m] + v_ab[m][:, None] * ab_[m],
            lambda m: c_[m],
            lambda m: a_[m] + w_ac[m][:, None] * ac_[m],
            lambda m: b_[m] + w_bc[m][:, None] * (c_[m] - b_[m]),
            lambda m: a_[m] + (vb * denom)[m][:, None] * ab_[m] + (vc * denom)[m][:, None] * ac_[m],
        )
    ):
        m = region == r
        if m.any():
            q[m] = pick(m)
    diff = np.broadcast_to(p, shape) - q
    return q, _dot(diff, diff)


def closest_faces(tri_a, tri_b, tri_c, points):
    n = points.shape[0]
    out_d2 = np.empty(n)
    out_q = np.empty((n, 3))
    out_f = np.empty(n, dtype=np.int64)
    for sl in _chunks(n, tri_a.shape[0]):
        p = points[sl, None, :]
        q, d2 = closest_point_triangles(p, tri_a[None], tri_b[None], tri_c[None])
        f = np.argmin(d2, axis=1)
        rows = np.arange(f.size)
        out_f[sl] = f
        out_d2[sl] = d2[rows, f]
        out_q[sl] = q[rows, f]
    return out_d2, out_q, out_f


def nearest_points(cloud, queries):
    n = queries.shape[0]
    out_d2 = np.empty(n)
    out_i = np.empty(n, dtype=np.int64)
    for sl in _chunks(n, cloud.shape[0]):
        diff = queries[sl, None, :] - cloud[None]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        j = np.argmin(d2, axis=1)
        out_i[sl] = j
        out_d2[sl] = d2[np.arange(j.size), j]
    return out_d2, out_i


def _parity_codes(points, direction, tri_a, tri_e1, tri_e2):
    """Per point: 0/1 parity, 2 on surface, 3 grazing (single direction)."""
    n = points.shape[0]
    out = np.empty(n, dtype=np.int8)
    d = np.asarray(direction, dtype=np.float64)
    h = np.cross(d, tri_e2)
    det = _dot(tri_e1, h)
    scale = np.linalg.norm(tri_e1, axis=1) * np.linalg.norm(tri_e2, axis=1)
    parallel = np.abs(det) <= 1e-12 * scale
    nrm = np.cross(tri_e1, tri_e2)
    nn = np.linalg.norm(nrm, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(parallel, 0.0, 1.0 / det)
    for sl in _chunks(n, tri_a.shape[0]):
        s = points[sl, None, :] - tri_a[None]
        coplanar = parallel[None] & (np.abs(_dot(s, nrm[None])) <= SURFACE_EPS * nn[None])
        u = _dot(s, h[None]) * inv[None]
        q = np.cross(s, tri_e1[None])
        v = _dot(q, d) * inv[None]
        t = _dot(q, tri_e2[None]) * inv[None]
        within = (
            ~parallel[None]
            & (u >= -EDGE_EPS) & (u <= 1.0 + EDGE_EPS)
            & (v >= -EDGE_EPS) & (u + v <= 1.0 + EDGE_EPS)
            & (t >= -SURFACE_EPS)
        )
        near_edge = (u < EDGE_EPS) | (v < EDGE_EPS) | (u + v > 1.0 - EDGE_EPS)
        on_surface = (within & (t <= SURFACE_EPS)).any(axis=1)
        grazing = (within & near_edge).any(axis=1) | coplanar.any(axis=1)
        hits = (within & ~near_edge & (t > SURFACE_EPS)).sum(axis=1)
        code = (hits & 1).astype(np.int8)
        code[grazing] = 3
        code[on_surface] = 2
        out[sl] = code
    return out


def ray_parity(tri_a, tri_e1, tri_e2, points, directions):
    n = points.shape[0]
    out = np.full(n, 3, dtype=np.int8)
    todo = np.arange(n)
    for d in directions:
        if todo.size == 0:
            break
        codes = _parity_codes(points[todo], d, tri_a, tri_e1, tri_e2)
        done = codes != 3
        out[todo[done]] = codes[done]
        todo = todo[~done]
    return out


def voxel_columns(cx, cy, zc, tri_a, tri_b, tri_c):
    ncol = cx.shape[0]
    nz = zc.shape[0]
    occ = np.zeros((ncol, nz), dtype=bool)
    flagged = np.zeros(ncol, dtype=bool)
    e1 = (tri_b - tri_a)[:, :2]
    e2 = (tri_c - tri_a)[:, :2]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    keep = np.abs(det) > 1e-12 * scale
    a = tri_a[keep]
    za, zb, zcs = a[:, 2], tri_b[keep, 2], tri_c[keep, 2]
    e1, e2, det = e1[keep], e2[keep], det[keep]
    for sl in _chunks(ncol, a.shape[0]):
        px = cx[sl, None] - a[None, :, 0]
        py = cy[sl, None] - a[None, :, 1]
        u = (px * e2[None, :, 1] - py * e2[None, :, 0]) / det[None]
        v = (e1[None, :, 0] * py - e1[None, :, 1] * px) / det[None]
        w = 1.0 - u - v
        inside = (u >= -EDGE_EPS) & (v >= -EDGE_EPS) & (w >= -EDGE_EPS)
        edge = inside & ((u < EDGE_EPS) | (v < EDGE_EPS) | (w < EDGE_EPS))
        flagged[sl] = edge.any(axis=1)
        z = np.where(inside & ~edge, w * za[None] + u * zb[None] + v * zcs[None], np.inf)
        z.sort(axis=1)
        for i, col in enumerate(range(sl.start, sl.stop)):
            if flagged[col]:
                continue
            hz = z[i][np.isfinite(z[i])]
            below = np.searchsorted(hz, zc, side="left")
            occ[col] = (below & 1) == 1
    return occ, flagged


def _min_norm_point(pts, max_iter, tol):
    # same corral iteration as the compiled kernel, with array ops
    dim = pts.shape[1]
    norms = (pts * pts).sum(axis=1)
    scale = norms.max()
    corral = [int(np.argmin(norms))]
    lam = np.array([1.0])
    y = pts[corral[0]].copy()
    for _ in range(max_iter):
        yy = y @ y
        if yy <= tol * tol:
            break
        proj = pts @ y
        j = int(np.argmin(proj))
        if yy - proj[j] <= 1e-12 * scale or j in corral or len(corral) == dim + 1:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)
        while True:
            q = pts[corral]
            m = len(corral)
            a = np.zeros((m + 1, m + 1))
            a[:m, :m] = q @ q.T
            a[:m, m] = a[m, :m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            alpha = np.linalg.lstsq(a, rhs, rcond=None)[0][:m]
            if alpha.min() > 1e-12:
                lam = alpha
                break
            low = alpha <= 1e-12
            theta = min(1.0, float((lam[low] / (lam[low] - alpha[low])).min()))
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-12
            keep[int(np.argmin(lam))] = False
            corral = [c for c, k in zip(corral, keep) if k]
            lam = lam[keep] / lam[keep].sum()
            if len(corral) == 1:
                break
        y = lam @ pts[corral]
    return float(np.sqrt(y @ y))


def hull_distance(vertices, queries, max_iter, tol):
    return np.array([_min_norm_point(vertices - x, max_iter, tol) for x in queries])


def _survivors(normals, offsets, samples, idx, tol):
    block = max(1, _CHUNK // max(1, idx.size))
    for start in range(0, normals.shape[0], block):
        if idx.size == 0:
            break
        sl = slice(start, start + block)
        viol = (samples[idx] @ normals[sl].T + offsets[sl]).max(axis=1) > tol
        idx = idx[~viol]
    return idx


def halfspace_inside(inner_normals, inner_offsets, normals, offsets, samples, tol):
    """Facet-block elimination with an optional inner-polytope shortcut."""
    inside = np.zeros(samples.shape[0], dtype=bool)
    todo = np.arange(samples.shape[0])
    if inner_normals.shape[0] > 0:
        sure = _survivors(inner_normals, inner_offsets, samples, todo, -tol)
        inside[sure] = True
        todo = np.setdiff1d(todo, sure, assume_unique=True)
    inside[_survivors(normals, offsets, samples, todo, tol)] = True
    return inside
