"""Spatial queries over triangle meshes and point sets.

Two distance notions are kept apart on purpose: *vertex-set* distance (to
the nearest vertex of a discrete set, used by the contact losses) and
*surface* distance (to the nearest point on any triangle, used by the
physical metrics).
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from . import _kernels as nb
from . import _kernels_np as npk
from .errors import GeometryError, NotWatertightError, RayCastError
from .mesh import PointCloud, TriMesh, ensure_closed, is_watertight, watertight_diagnostics

DEFAULT_LEAF_SIZE = 4
DEFAULT_VOXEL = 0.005
RAY_RETRIES = 16


class Bvh:
    """Axis-aligned bounding box tree over primitives given by their boxes.

    Median split of the primitive centroids along the longest axis; leaves
    hold at most ``leaf_size`` primitives. Node arrays are flat so the
    compiled traversal kernels can consume them directly.
    """

    def __init__(self, lo, hi, leaf_size=DEFAULT_LEAF_SIZE):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        n = lo.shape[0]
        if n == 0:
            raise GeometryError("cannot build a BVH over zero primitives")
        self.leaf_size = int(leaf_size)
        centroids = 0.5 * (lo + hi)
        order = np.arange(n, dtype=np.int64)
        cap = 2 * n
        node_lo = np.empty((cap, 3))
        node_hi = np.empty((cap, 3))
        left = np.full(cap, -1, dtype=np.int64)
        right = np.full(cap, -1, dtype=np.int64)
        start = np.zeros(cap, dtype=np.int64)
        count = np.zeros(cap, dtype=np.int64)
        n_nodes = 1
        todo = [(0, 0, n)]
        while todo:
            node, s, e = todo.pop()
            idx = order[s:e]
            node_lo[node] = lo[idx].min(axis=0)
            node_hi[node] = hi[idx].max(axis=0)
            start[node] = s
            count[node] = e - s
            if e - s <= self.leaf_size:
                continue
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (e - s) // 2
            part = np.argpartition(c[:, axis], mid, kind="introselect")
            order[s:e] = idx[part]
            l, r = n_nodes, n_nodes + 1
            n_nodes += 2
            left[node], right[node] = l, r
            count[node] = 0
            todo.append((r, s + mid, e))
            todo.append((l, s, s + mid))
        # tiny padding keeps rays grazing a flat box face from being culled
        pad = 1e-10 * max(float(np.max(hi.max(axis=0) - lo.min(axis=0))), 1e-12)
        self.node_lo = node_lo[:n_nodes] - pad
        self.node_hi = node_hi[:n_nodes] + pad
        self.left = left[:n_nodes].copy()
        self.right = right[:n_nodes].copy()
        self.start = start[:n_nodes].copy()
        self.count = count[:n_nodes].copy()
        self.order = order

    @property
    def n_nodes(self):
        return self.left.shape[0]

    @property
    def arrays(self):
        return (self.node_lo, self.node_hi, self.left, self.right, self.start, self.count, self.order)

    @classmethod
    def from_mesh(cls, mesh, leaf_size=DEFAULT_LEAF_SIZE):
        t = mesh.triangles
        return cls(t.min(axis=1), t.max(axis=1), leaf_size)

    @classmethod
    def from_points(cls, points, leaf_size=DEFAULT_LEAF_SIZE):
        p = np.asarray(points, dtype=np.float64)
        return cls(p, p, leaf_size)


def _cached(mesh, key, build):
    # meshes are immutable, so derived structures can live on the instance
    d = mesh.__dict__
    if key not in d:
        d[key] = build()
    return d[key]


def face_bvh(mesh):
    return _cached(mesh, "_face_bvh", lambda: Bvh.from_mesh(mesh))


def vertex_bvh(mesh):
    return _cached(mesh, "_vertex_bvh", lambda: Bvh.from_points(mesh.vertices))


def _tri_arrays(mesh):
    def build():
        t = mesh.triangles
        a = np.ascontiguousarray(t[:, 0])
        b = np.ascontiguousarray(t[:, 1])
        c = np.ascontiguousarray(t[:, 2])
        return a, b, c, np.ascontiguousarray(b - a), np.ascontiguousarray(c - a)

    return _cached(mesh, "_tri_arrays", build)


def _watertight(mesh):
    return _cached(mesh, "_watertight", lambda: is_watertight(mesh))


def require_watertight(mesh, what="object mesh"):
    if not _watertight(mesh):
        raise NotWatertightError(f"{what} is not watertight", watertight_diagnostics(mesh))


def _as_points(target):
    if isinstance(target, TriMesh):
        return target.vertices
    if isinstance(target, PointCloud):
        return target.points
    return np.asarray(target, dtype=np.float64).reshape(-1, 3)


def _queries(points):
    return np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))


# ------------------------------------------------------------ vertex-set distance


def vertexset_distances(points, target, bvh=None):
    """Nearest-vertex distance and index for each query point.

    ``target`` is a mesh (its vertices), a :class:`PointCloud` or an (n, 3)
    array. Exact; ties go to the lowest vertex index.
    """
    cloud = np.ascontiguousarray(_as_points(target))
    if cloud.shape[0] == 0:
        raise GeometryError("distance to an empty point set")
    q = _queries(points)
    if _accel.enabled():
        if bvh is None:
            bvh = vertex_bvh(target) if isinstance(target, TriMesh) else Bvh.from_points(cloud)
        d2, idx = nb.bvh_nearest_points(*bvh.arrays, cloud, q)
    else:
        d2, idx = npk.nearest_points(cloud, q)
    return np.sqrt(d2), idx


def point_vertexset_distance(p, target):
    d, i = vertexset_distances(np.asarray(p, dtype=np.float64).reshape(1, 3), target)
    return float(d[0]), int(i[0])


def brute_vertexset_distances(points, target):
    """O(n*m) scan with the same tie rule; reference for the BVH path."""
    cloud = np.ascontiguousarray(_as_points(target))
    if cloud.shape[0] == 0:
        raise GeometryError("distance to an empty point set")
    if _accel.enabled():
        d2, idx = nb.brute_nearest_points(cloud, _queries(points))
    else:
        d2, idx = npk.nearest_points(cloud, _queries(points))
    return np.sqrt(d2), idx


# --------------------------------------------------------------- surface distance


def surface_distances(points, mesh):
    """Distance, closest point and face index on ``mesh`` for each query."""
    if mesh.n_faces == 0:
        raise GeometryError("distance to an empty mesh")
    q = _queries(points)
    a, b, c, _, _ = _tri_arrays(mesh)
    if _accel.enabled():
        d2, cp, f = nb.bvh_closest_faces(*face_bvh(mesh).arrays, a, b, c, q)
    else:
        d2, cp, f = npk.closest_faces(a, b, c, q)
    return np.sqrt(d2), cp, f


def point_surface_distance(p, mesh):
    d, cp, f = surface_distances(np.asarray(p, dtype=np.float64).reshape(1, 3), mesh)
    return float(d[0]), cp[0], int(f[0])


def brute_surface_distances(points, mesh):
    if mesh.n_faces == 0:
        raise GeometryError("distance to an empty mesh")
    a, b, c, _, _ = _tri_arrays(mesh)
    q = _queries(points)
    if _accel.enabled():
        d2, cp, f = nb.brute_closest_faces(a, b, c, q)
    else:
        d2, cp, f = npk.closest_faces(a, b, c, q)
    return np.sqrt(d2), cp, f


# ------------------------------------------------------------------- inside test


def retry_directions(seed=0, n=RAY_RETRIES):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    return np.ascontiguousarray(d / np.linalg.norm(d, axis=1, keepdims=True))


def ray_codes(points, mesh, seed=0, retries=RAY_RETRIES):
    """Raw ray-cast outcome per point: 0 out, 1 in, 2 on surface, 3 exhausted."""
    q = _queries(points)
    dirs = retry_directions(seed, retries)
    a, _, _, e1, e2 = _tri_arrays(mesh)
    if _accel.enabled():
        return nb.bvh_ray_parity(*face_bvh(mesh).arrays, a, e1, e2, q, dirs)
    return npk.ray_parity(a, e1, e2, q, dirs)


def inside_mask(points, mesh, seed=0, retries=RAY_RETRIES):
    """Ray-parity inside test for many points against a watertight mesh.

    Points on the surface (within 1e-12) count as outside. A ray that passes
    within 1e-9 (barycentric) of an edge or vertex is re-cast along the next
    seeded pseudo-random direction.
    """
    require_watertight(mesh)
    codes = ray_codes(points, mesh, seed, retries)
    if (codes == 3).any():
        i = int(np.argmax(codes == 3))
        raise RayCastError(f"all {retries} ray directions grazed an edge for point {i}")
    return codes == 1


def is_inside(p, mesh, seed=0, retries=RAY_RETRIES):
    return bool(inside_mask(np.asarray(p, dtype=np.float64).reshape(1, 3), mesh, seed, retries)[0])


def classify_hand_vertices(hand, obj, seed=0):
    """Boolean mask of hand vertices lying inside the object."""
    return inside_mask(hand.vertices, obj, seed)


# ------------------------------------------------------------------- voxelization


@dataclass(frozen=True)
class VoxelGrid:
    """Regular grid of cubic voxels; ``occupancy`` has shape ``dims``."""

    origin: np.ndarray
    h: float
    dims: tuple
    occupancy: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("grid dimensions must be >= 1 along each axis")
        occ = np.asarray(self.occupancy, dtype=bool).reshape(dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "h", float(self.h))

    @property
    def count(self):
        return int(self.occupancy.sum())

    @property
    def volume(self):
        return self.count * self.h**3

    def centers(self, axis):
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def to_json(self):
        """Debug form: origin, h, dims and run-length-encoded occupancy (C order).

        ``runs`` alternates counts of empty and occupied voxels, starting with
        empty.
        """
        flat = self.occupancy.ravel()
        change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs = [0] + runs
        return {
            "origin": self.origin.tolist(),
            "h": self.h,
            "dims": list(self.dims),
            "runs": runs,
        }

    @classmethod
    def from_json(cls, data):
        dims = tuple(data["dims"])
        flat = np.zeros(int(np.prod(dims)), dtype=bool)
        pos, value = 0, False
        for r in data["runs"]:
            flat[pos : pos + r] = value
            pos += r
            value = not value
        return cls(np.array(data["origin"]), data["h"], dims, flat.reshape(dims))


def grid_for_bounds(lo, hi, h, pad=0.0):
    lo = np.asarray(lo, dtype=np.float64) - pad
    hi = np.asarray(hi, dtype=np.float64) + pad
    dims = np.maximum(1, np.ceil((hi - lo) / h - 1e-9).astype(np.int64))
    return lo, tuple(int(d) for d in dims)


def voxelize_solid(mesh, h=DEFAULT_VOXEL, bounds=None, origin=None, dims=None, seed=0):
    """Occupancy of voxel centers inside ``mesh``.

    The grid is either given by ``origin``/``dims`` or derived from
    ``bounds`` (``(lo, hi)``, default the mesh bounding box). Open meshes are
    boundary-closed first. Centers are classified column by column with
    vertical rays; columns that graze an edge fall back to the robust
    per-point test.
    """
    if not h > 0:
        raise ValueError("voxel size must be positive")
    solid = ensure_closed(mesh)
    if origin is None or dims is None:
        if bounds is None:
            bounds = solid.bounds
        lo, hi = np.asarray(bounds[0], dtype=np.float64), np.asarray(bounds[1], dtype=np.float64)
        if (solid.bounds[0] < lo - 1e-12).any() or (solid.bounds[1] > hi + 1e-12).any():
            raise ValueError("bounds do not contain the mesh")
        origin, dims = grid_for_bounds(lo, hi, h)
    origin = np.asarray(origin, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    occ = np.zeros(dims, dtype=bool)

    # only columns/slabs overlapping the mesh box can be occupied
    mlo, mhi = solid.bounds
    i0 = np.clip(np.floor((mlo - origin) / h - 0.5).astype(np.int64), 0, np.array(dims))
    i1 = np.clip(np.ceil((mhi - origin) / h - 0.5).astype(np.int64) + 1, 0, np.array(dims))
    if (i1 <= i0).any():
        return VoxelGrid(origin, h, dims, occ)
    xs = origin[0] + (np.arange(i0[0], i1[0]) + 0.5) * h
    ys = origin[1] + (np.arange(i0[1], i1[1]) + 0.5) * h
    zs = origin[2] + (np.arange(i0[2], i1[2]) + 0.5) * h
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cx = np.ascontiguousarray(gx.ravel())
    cy = np.ascontiguousarray(gy.ravel())
    a, b, c, _, _ = _tri_arrays(solid)
    kernel = nb.voxel_columns if _accel.enabled() else npk.voxel_columns
    sub, flagged = kernel(cx, cy, np.ascontiguousarray(zs), a, b, c)
    if flagged.any():
        cols = np.flatnonzero(flagged)
        pts = np.stack(
            [np.repeat(cx[cols], zs.size), np.repeat(cy[cols], zs.size), np.tile(zs, cols.size)], axis=1
        )
        sub[cols] = inside_mask(pts, solid, seed).reshape(cols.size, zs.size)
    occ[i0[0] : i1[0], i0[1] : i1[1], i0[2] : i1[2]] = sub.reshape(xs.size, ys.size, zs.size)
    return VoxelGrid(origin, h, dims, occ)
