"""Compiled inner loops: BVH traversal, closest points, ray parity, voxel columns.

Every function here is scalar-loop code for ``numba.njit``. The numpy
counterparts live in ``_kernels_np``; ``spatial`` dispatches between them.
"""

import numpy as np

from ._accel import njit

# ray-cast outcome codes
OUTSIDE = 0
INSIDE = 1
ON_SURFACE = 2
GRAZING = 3

EDGE_EPS = 1e-9
SURFACE_EPS = 1e-12


@njit
def closest_point_triangle(px, py, pz, a, b, c):
    """Closest point on triangle (a, b, c) to p. Returns (qx, qy, qz, d2)."""
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    abz = b[2] - a[2]
    acx = c[0] - a[0]
    acy = c[1] - a[1]
    acz = c[2] - a[2]
    apx = px - a[0]
    apy = py - a[1]
    apz = pz - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = a[0], a[1], a[2]
    else:
        bpx = px - b[0]
        bpy = py - b[1]
        bpz = pz - b[2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = b[0], b[1], b[2]
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                qx = a[0] + v * abx
                qy = a[1] + v * aby
                qz = a[2] + v * abz
            else:
                cpx = px - c[0]
                cpy = py - c[1]
                cpz = pz - c[2]
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = c[0], c[1], c[2]
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        qx = a[0] + w * acx
                        qy = a[1] + w * acy
                        qz = a[2] + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = b[0] + w * (c[0] - b[0])
                            qy = b[1] + w * (c[1] - b[1])
                            qz = b[2] + w * (c[2] - b[2])
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = a[0] + abx * v + acx * w
                            qy = a[1] + aby * v + acy * w
                            qz = a[2] + abz * v + acz * w
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    return qx, qy, qz, dx * dx + dy * dy + dz * dz


@njit
def _box_dist2(px, py, pz, lo, hi):
    d = 0.0
    if px < lo[0]:
        d += (lo[0] - px) ** 2
    elif px > hi[0]:
        d += (px - hi[0]) ** 2
    if py < lo[1]:
        d += (lo[1] - py) ** 2
    elif py > hi[1]:
        d += (py - hi[1]) ** 2
    if pz < lo[2]:
        d += (lo[2] - pz) ** 2
    elif pz > hi[2]:
        d += (pz - hi[2]) ** 2
    return d


@njit
def bvh_closest_faces(node_lo, node_hi, left, right, start, count, order, tri_a, tri_b, tri_c, points):
    """Nearest face per query point; ties resolved to the lowest face index."""
    n = points.shape[0]
    out_d2 = np.empty(n)
    out_q = np.empty((n, 3))
    out_f = np.empty(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        bf = -1
        bq0 = bq1 = bq2 = 0.0
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(px, py, pz, node_lo[node], node_hi[node]) > best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    f = order[k]
                    qx, qy, qz, d2 = closest_point_triangle(px, py, pz, tri_a[f], tri_b[f], tri_c[f])
                    if d2 < best or (d2 == best and f < bf):
                        best = d2
                        bf = f
                        bq0, bq1, bq2 = qx, qy, qz
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(px, py, pz, node_lo[l], node_hi[l])
                dr = _box_dist2(px, py, pz, node_lo[r], node_hi[r])
                # push the farther child first so the nearer one is popped next
                if dl <= dr:
                    stack[top] = r
                    stack[top + 1] = l
                else:
                    stack[top] = l
                    stack[top + 1] = r
                top += 2
        out_d2[i] = best
        out_f[i] = bf
        out_q[i, 0] = bq0
        out_q[i, 1] = bq1
        out_q[i, 2] = bq2
    return out_d2, out_q, out_f


@njit
def brute_closest_faces(tri_a, tri_b, tri_c, points):
    n = points.shape[0]
    m = tri_a.shape[0]
    out_d2 = np.empty(n)
    out_q = np.empty((n, 3))
    out_f = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        bf = -1
        bq0 = bq1 = bq2 = 0.0
        for f in range(m):
            qx, qy, qz, d2 = closest_point_triangle(points[i, 0], points[i, 1], points[i, 2], tri_a[f], tri_b[f], tri_c[f])
            if d2 < best:
                best = d2
                bf = f
                bq0, bq1, bq2 = qx, qy, qz
        out_d2[i] = best
        out_f[i] = bf
        out_q[i, 0] = bq0
        out_q[i, 1] = bq1
        out_q[i, 2] = bq2
    return out_d2, out_q, out_f


@njit
def bvh_nearest_points(node_lo, node_hi, left, right, start, count, order, cloud, queries):
    """Nearest cloud point per query; ties resolved to the lowest index."""
    n = queries.shape[0]
    out_d2 = np.empty(n)
    out_i = np.empty(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = queries[i, 0], queries[i, 1], queries[i, 2]
        best = np.inf
        bi = -1
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(px, py, pz, node_lo[node], node_hi[node]) > best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    j = order[k]
                    dx = px - cloud[j, 0]
                    dy = py - cloud[j, 1]
                    dz = pz - cloud[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best or (d2 == best and j < bi):
                        best = d2
                        bi = j
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(px, py, pz, node_lo[l], node_hi[l])
                dr = _box_dist2(px, py, pz, node_lo[r], node_hi[r])
                if dl <= dr:
                    stack[top] = r
                    stack[top + 1] = l
                else:
                    stack[top] = l
                    stack[top + 1] = r
                top += 2
        out_d2[i] = best
        out_i[i] = bi
    return out_d2, out_i


@njit
def brute_nearest_points(cloud, queries):
    n = queries.shape[0]
    out_d2 = np.empty(n)
    out_i = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        bi = -1
        for j in range(cloud.shape[0]):
            dx = queries[i, 0] - cloud[j, 0]
            dy = queries[i, 1] - cloud[j, 1]
            dz = queries[i, 2] - cloud[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
                bi = j
        out_d2[i] = best
        out_i[i] = bi
    return out_d2, out_i


@njit
def _ray_triangle(ox, oy, oz, dx, dy, dz, a, e1, e2):
    """Moller-Trumbore. Returns (code, t): code 0 miss, 1 hit, 2 grazing/ambiguous."""
    hx = dy * e2[2] - dz * e2[1]
    hy = dz * e2[0] - dx * e2[2]
    hz = dx * e2[1] - dy * e2[0]
    det = e1[0] * hx + e1[1] * hy + e1[2] * hz
    sx = ox - a[0]
    sy = oy - a[1]
    sz = oz - a[2]
    scale = np.sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2) * np.sqrt(e2[0] ** 2 + e2[1] ** 2 + e2[2] ** 2)
    if abs(det) <= 1e-12 * scale:
        # ray parallel to the plane: only ambiguous if the origin lies in it
        nx = e1[1] * e2[2] - e1[2] * e2[1]
        ny = e1[2] * e2[0] - e1[0] * e2[2]
        nz = e1[0] * e2[1] - e1[1] * e2[0]
        nn = np.sqrt(nx * nx + ny * ny + nz * nz)
        if abs(sx * nx + sy * ny + sz * nz) <= SURFACE_EPS * nn:
            return 2, 0.0
        return 0, 0.0
    inv = 1.0 / det
    u = (sx * hx + sy * hy + sz * hz) * inv
    if u < -EDGE_EPS or u > 1.0 + EDGE_EPS:
        return 0, 0.0
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -EDGE_EPS or u + v > 1.0 + EDGE_EPS:
        return 0, 0.0
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    if t < -SURFACE_EPS:
        return 0, t
    if u < EDGE_EPS or v < EDGE_EPS or u + v > 1.0 - EDGE_EPS:
        if t <= SURFACE_EPS:
            return 3, t
        return 2, t
    if t <= SURFACE_EPS:
        return 3, t
    return 1, t


@njit
def _slab_hit(ox, oy, oz, idx, idy, idz, lo, hi):
    t0 = 0.0
    t1 = np.inf
    for k in range(3):
        o = ox if k == 0 else (oy if k == 1 else oz)
        inv = idx if k == 0 else (idy if k == 1 else idz)
        if np.isinf(inv):
            if o < lo[k] or o > hi[k]:
                return False
            continue
        ta = (lo[k] - o) * inv
        tb = (hi[k] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@njit
def _parity_one(ox, oy, oz, dx, dy, dz, node_lo, node_hi, left, right, start, count, order, tri_a, tri_e1, tri_e2, stack):
    idx = 1.0 / dx if dx != 0.0 else np.inf
    idy = 1.0 / dy if dy != 0.0 else np.inf
    idz = 1.0 / dz if dz != 0.0 else np.inf
    hits = 0
    grazing = False
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(ox, oy, oz, idx, idy, idz, node_lo[node], node_hi[node]):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                f = order[k]
                code, t = _ray_triangle(ox, oy, oz, dx, dy, dz, tri_a[f], tri_e1[f], tri_e2[f])
                if code == 1:
                    hits += 1
                elif code == 2:
                    grazing = True
                elif code == 3:
                    return ON_SURFACE
        else:
            stack[top] = left[node]
            stack[top + 1] = right[node]
            top += 2
    if grazing:
        return GRAZING
    return hits & 1


@njit
def bvh_ray_parity(node_lo, node_hi, left, right, start, count, order, tri_a, tri_e1, tri_e2, points, directions):
    """Inside/outside by ray parity, retrying over ``directions`` on grazing hits.

    Returns per point: 0 outside, 1 inside, 2 on the surface, 3 all retries grazed.
    """
    n = points.shape[0]
    out = np.empty(n, dtype=np.int8)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        res = GRAZING
        for r in range(directions.shape[0]):
            code = _parity_one(
                points[i, 0], points[i, 1], points[i, 2],
                directions[r, 0], directions[r, 1], directions[r, 2],
                node_lo, node_hi, left, right, start, count, order, tri_a, tri_e1, tri_e2, stack,
            )
            if code != GRAZING:
                res = code
                break
        if res == GRAZING:
            out[i] = 3
        elif res == ON_SURFACE:
            out[i] = 2
        else:
            out[i] = res
    return out


@njit
def voxel_columns(cx, cy, zc, tri_a, tri_b, tri_c):
    """Occupancy of voxel centers along vertical columns by +z ray crossings.

    ``cx``/``cy`` are column center coordinates (flattened), ``zc`` the
    sorted center heights. A center is inside when an odd number of surface
    crossings lie below it. Columns whose ray passes within ``EDGE_EPS``
    (barycentric) of an edge are flagged and left for the robust per-point test.
    """
    ncol = cx.shape[0]
    nz = zc.shape[0]
    m = tri_a.shape[0]
    occ = np.zeros((ncol, nz), dtype=np.bool_)
    flagged = np.zeros(ncol, dtype=np.bool_)
    xmin = np.empty(m)
    xmax = np.empty(m)
    ymin = np.empty(m)
    ymax = np.empty(m)
    for f in range(m):
        xmin[f] = min(tri_a[f, 0], tri_b[f, 0], tri_c[f, 0])
        xmax[f] = max(tri_a[f, 0], tri_b[f, 0], tri_c[f, 0])
        ymin[f] = min(tri_a[f, 1], tri_b[f, 1], tri_c[f, 1])
        ymax[f] = max(tri_a[f, 1], tri_b[f, 1], tri_c[f, 1])
    hits = np.empty(m)
    for col in range(ncol):
        x = cx[col]
        y = cy[col]
        nh = 0
        bad = False
        for f in range(m):
            if x < xmin[f] or x > xmax[f] or y < ymin[f] or y > ymax[f]:
                continue
            ax, ay = tri_a[f, 0], tri_a[f, 1]
            e1x = tri_b[f, 0] - ax
            e1y = tri_b[f, 1] - ay
            e2x = tri_c[f, 0] - ax
            e2y = tri_c[f, 1] - ay
            det = e1x * e2y - e1y * e2x
            scale = np.sqrt(e1x * e1x + e1y * e1y) * np.sqrt(e2x * e2x + e2y * e2y)
            if abs(det) <= 1e-12 * scale:
                continue
            px = x - ax
            py = y - ay
            u = (px * e2y - py * e2x) / det
            v = (e1x * py - e1y * px) / det
            w = 1.0 - u - v
            if u < -EDGE_EPS or v < -EDGE_EPS or w < -EDGE_EPS:
                continue
            if u < EDGE_EPS or v < EDGE_EPS or w < EDGE_EPS:
                bad = True
                break
            hits[nh] = w * tri_a[f, 2] + u * tri_b[f, 2] + v * tri_c[f, 2]
            nh += 1
        if bad:
            flagged[col] = True
            continue
        h = np.sort(hits[:nh])
        j = 0
        for k in range(nz):
            while j < nh and h[j] < zc[k]:
                j += 1
            occ[col, k] = (j & 1) == 1
    return occ, flagged


@njit
def _min_norm_point(pts, max_iter, tol):
    """Distance from the origin to conv(rows of ``pts``) by Wolfe's algorithm.

    Keeps a corral of at most dim + 1 points with positive barycentric
    weights; each major step adds the point most opposed to the current
    iterate, minor steps drop points until the affine minimiser of the
    corral lies inside it. Finite, so interior queries reach distance 0.
    """
    n, dim = pts.shape
    cap = dim + 1
    corral = np.empty(cap, dtype=np.int64)
    lam = np.empty(cap)
    scale = 0.0
    j = 0
    best = np.inf
    for i in range(n):
        s = 0.0
        for k in range(dim):
            s += pts[i, k] * pts[i, k]
        if s < best:
            best = s
            j = i
        if s > scale:
            scale = s
    corral[0] = j
    lam[0] = 1.0
    m = 1
    y = pts[j].copy()
    for _ in range(max_iter):
        yy = 0.0
        for k in range(dim):
            yy += y[k] * y[k]
        if yy <= tol * tol:
            break
        proj = pts @ y
        j = int(np.argmin(proj))
        if yy - proj[j] <= 1e-12 * scale:
            break
        member = False
        for c in range(m):
            if corral[c] == j:
                member = True
        if member or m == cap:
            break
        corral[m] = j
        lam[m] = 0.0
        m += 1
        while True:
            a = np.zeros((m + 1, m + 1))
            rhs = np.zeros(m + 1)
            for r in range(m):
                for c in range(m):
                    s = 0.0
                    for k in range(dim):
                        s += pts[corral[r], k] * pts[corral[c], k]
                    a[r, c] = s
                a[r, m] = 1.0
                a[m, r] = 1.0
            rhs[m] = 1.0
            alpha = np.linalg.lstsq(a, rhs)[0][:m]
            if alpha.min() > 1e-12:
                lam[:m] = alpha
                break
            theta = 1.0
            for c in range(m):
                if alpha[c] <= 1e-12:
                    t = lam[c] / (lam[c] - alpha[c])
                    if t < theta:
                        theta = t
            for c in range(m):
                lam[c] += theta * (alpha[c] - lam[c])
            drop = int(np.argmin(lam[:m]))
            keep = 0
            for c in range(m):
                if c == drop or lam[c] <= 1e-12:
                    continue
                corral[keep] = corral[c]
                lam[keep] = lam[c]
                keep += 1
            m = keep
            total = lam[:m].sum()
            lam[:m] /= total
            if m == 1:
                break
        for k in range(dim):
            y[k] = 0.0
        for c in range(m):
            for k in range(dim):
                y[k] += lam[c] * pts[corral[c], k]
    s = 0.0
    for k in range(dim):
        s += y[k] * y[k]
    return np.sqrt(s)


@njit
def hull_distance(vertices, queries, max_iter, tol):
    """Euclidean distance from each query to the convex hull of ``vertices`` (rows)."""
    out = np.empty(queries.shape[0])
    for i in range(queries.shape[0]):
        out[i] = _min_norm_point(vertices - queries[i], max_iter, tol)
    return out


@njit
def _violates(normals, offsets, x, tol):
    nf, dim = normals.shape
    for f in range(nf):
        s = offsets[f]
        for k in range(dim):
            s += normals[f, k] * x[k]
        if s > tol:
            return True
    return False


@njit
def halfspace_inside(inner_normals, inner_offsets, normals, offsets, samples, tol):
    """Membership in the polytope ``normals . x + offsets <= tol``.

    ``inner_*`` describe a polytope contained in the outer one (possibly
    with zero facets, meaning no shortcut): samples inside it are accepted
    without scanning the outer facets. Each scan stops at the first violated
    facet, so the most frequently violated facets should come first.
    """
    n = samples.shape[0]
    use_inner = inner_normals.shape[0] > 0
    inside = np.empty(n, dtype=np.bool_)
    for i in range(n):
        x = samples[i]
        if use_inner and not _violates(inner_normals, inner_offsets, x, -tol):
            inside[i] = True
        else:
            inside[i] = not _violates(normals, offsets, x, tol)
    return inside
