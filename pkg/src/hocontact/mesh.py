"""Indexed triangle meshes and the plumbing around them.

Vertices are in meters, faces are counter-clockwise seen from outside.
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateMeshError, GeometryError, ObjFormatError

DEGENERATE_AREA = 1e-12
MAX_ICOSPHERE_LEVEL = 7


def _readonly(a):
    a.setflags(write=False)
    return a


class TriMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions in meters.
    faces : array_like, shape (m, 3)
        Vertex indices per triangle, counter-clockwise = outward normal.
    validate : bool
        Check index bounds and reject degenerate faces. Internal callers that
        only move vertices of an already valid mesh pass ``False``.
    """

    def __init__(self, vertices, faces, validate=True):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if validate:
            _validate(v, f)
        self.vertices = _readonly(v)
        self.faces = _readonly(f)

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices):
        """Same connectivity, new positions (no validation)."""
        return TriMesh(vertices, self.faces, validate=False)

    def translated(self, offset):
        return self.with_vertices(self.vertices + np.asarray(offset, dtype=np.float64))

    def scaled(self, factor, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=np.float64)
        return self.with_vertices((self.vertices - c) * factor + c)

    def rotated(self, rotation, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=np.float64)
        r = np.asarray(rotation, dtype=np.float64)
        return self.with_vertices((self.vertices - c) @ r.T + c)

    @cached_property
    def triangles(self):
        """Vertex positions per face, shape (m, 3, 3)."""
        return _readonly(self.vertices[self.faces])

    @cached_property
    def face_cross(self):
        t = self.triangles
        return _readonly(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]))

    @cached_property
    def face_areas(self):
        return _readonly(0.5 * np.linalg.norm(self.face_cross, axis=1))

    @cached_property
    def face_normals(self):
        c = self.face_cross
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return _readonly(c / np.where(n > 0, n, 1.0))

    @cached_property
    def vertex_normals(self):
        """Area-weighted vertex normals (unit length)."""
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.faces[:, k], self.face_cross)
        n = np.linalg.norm(acc, axis=1, keepdims=True)
        return _readonly(acc / np.where(n > 0, n, 1.0))

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted index pairs, lexicographic order."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return _readonly(np.unique(e, axis=0))

    @cached_property
    def adjacency(self):
        """Symmetric 0/1 vertex adjacency matrix (CSR)."""
        e = self.edges
        n = self.n_vertices
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(rows.size, dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self):
        return _readonly(np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64))

    @cached_property
    def bounds(self):
        return _readonly(np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)]))

    @cached_property
    def signed_volume(self):
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def _validate(v, f):
    if not np.all(np.isfinite(v)):
        raise GeometryError("non-finite vertex coordinates")
    if f.size == 0:
        return
    if f.min() < 0 or f.max() >= v.shape[0]:
        bad = int(np.argmax((f < 0).any(axis=1) | (f >= v.shape[0]).any(axis=1)))
        raise GeometryError(f"face {bad} references a vertex outside 0..{v.shape[0] - 1}")
    repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
    if repeated.any():
        raise DegenerateMeshError(f"face {int(np.argmax(repeated))} repeats a vertex index")
    t = v[f]
    area = 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
    small = area < DEGENERATE_AREA
    if small.any():
        raise DegenerateMeshError(
            f"face {int(np.argmax(small))} has area {area[small][0]:.3e} m^2 < {DEGENERATE_AREA:g}"
        )


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        p = _readonly(np.array(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = _readonly(np.array(self.normals, dtype=np.float64).reshape(-1, 3))
            if n.shape != p.shape:
                raise ValueError("normals must match points")
            if n.size and np.abs(np.linalg.norm(n, axis=1) - 1.0).max() > 1e-9:
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", n)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class NormalizationTransform:
    """Maps object coordinates to the unit ball: ``(v - translation) / scale``."""

    translation: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale

    def inverse(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation


# --------------------------------------------------------------------------- OBJ


def load_obj(path):
    """Read the ``v``/``f`` records of an ASCII Wavefront OBJ file.

    Polygons are fan-triangulated around their first vertex. Texture and
    normal references (``f 1/2/3``) are ignored, negative indices are
    resolved relative to the vertices read so far.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ObjFormatError(f"cannot read file ({exc.strerror})", path=path) from exc
    except UnicodeDecodeError as exc:
        raise ObjFormatError("not an ASCII OBJ file", path=path) from exc

    vertices = []
    faces = []
    face_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjFormatError("vertex record needs 3 coordinates", path, lineno)
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ObjFormatError(f"bad vertex coordinate in {raw.strip()!r}", path, lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise ObjFormatError("face record needs at least 3 vertices", path, lineno)
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise ObjFormatError(f"bad face index {token!r}", path, lineno) from None
                if k == 0:
                    raise ObjFormatError("face index 0 is invalid (OBJ is 1-based)", path, lineno)
                k = k - 1 if k > 0 else len(vertices) + k
                idx.append(k)
            for j in range(1, len(idx) - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
                face_lines.append(lineno)
    n = len(vertices)
    for face, lineno in zip(faces, face_lines):
        if min(face) < 0 or max(face) >= n:
            raise ObjFormatError(f"face index out of range (file has {n} vertices)", path, lineno)
    try:
        return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    except GeometryError as exc:
        raise ObjFormatError(str(exc), path) from exc


def obj_text(mesh):
    """OBJ serialization with round-trip exact coordinates."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


def save_obj(mesh, path):
    Path(path).write_text(obj_text(mesh))


# --------------------------------------------------------------------- builders


def _icosahedron_arrays():
    phi = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v, f


def icosahedron():
    """Regular unit icosahedron (12 vertices, 20 faces), the level-0 icosphere."""
    v, f = _icosahedron_arrays()
    return TriMesh(v, f)


def icosphere(level=3):
    """Unit sphere from ``level`` rounds of 1-to-4 subdivision of an icosahedron.

    Has ``10 * 4**level + 2`` vertices; level 3 gives 642.
    """
    if not isinstance(level, (int, np.integer)) or not 0 <= level <= MAX_ICOSPHERE_LEVEL:
        raise ValueError(f"icosphere level must be an integer in 0..{MAX_ICOSPHERE_LEVEL}, got {level!r}")
    v, f = _icosahedron_arrays()
    for _ in range(level):
        v, f = _subdivide(v, f)
    return TriMesh(v, f, validate=False)


def _subdivide(v, f):
    # one midpoint per undirected edge, numbered after the existing vertices
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e_sorted = np.sort(e, axis=1)
    uniq, inv = np.unique(e_sorted, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = f.shape[0]
    m01 = inv[:nf] + v.shape[0]
    m12 = inv[nf : 2 * nf] + v.shape[0]
    m20 = inv[2 * nf :] + v.shape[0]
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new_f = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([v, mid]), new_f


def sphere(radius=1.0, center=(0.0, 0.0, 0.0), level=3):
    s = icosphere(level)
    return s.with_vertices(s.vertices * radius + np.asarray(center, dtype=np.float64))


def box(half_extents, center=(0.0, 0.0, 0.0), rotation=None, divisions=1):
    """Closed box whose faces are split into regular grids.

    ``divisions`` is the number of cells along each local axis (an int for
    all three, or a 3-sequence).
    """
    ks = np.broadcast_to(np.asarray(divisions, dtype=np.int64), (3,))
    if ks.min() < 1:
        raise ValueError("divisions must be >= 1")
    grids = [np.linspace(-1.0, 1.0, int(k) + 1) for k in ks]
    index = {}
    verts = []
    faces = []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    # (normal axis, sign); the two in-plane axes are ordered so that u x w = sign * normal
    for axis in range(3):
        for sign in (1.0, -1.0):
            u_ax, w_ax = (axis + 1) % 3, (axis + 2) % 3
            if sign < 0:
                u_ax, w_ax = w_ax, u_ax
            gu, gw = grids[u_ax], grids[w_ax]
            grid = np.empty((gu.size, gw.size), dtype=np.int64)
            for i, s in enumerate(gu):
                for j, t in enumerate(gw):
                    p = np.zeros(3)
                    p[axis] = sign
                    p[u_ax] = s
                    p[w_ax] = t
                    grid[i, j] = vid(p)
            for i in range(gu.size - 1):
                for j in range(gw.size - 1):
                    a, b, c, d = grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]
                    faces.append((a, b, c))
                    faces.append((a, c, d))
    v = np.array(verts) * np.asarray(half_extents, dtype=np.float64)
    if rotation is not None:
        v = v @ np.asarray(rotation, dtype=np.float64).T
    v = v + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.array(faces, dtype=np.int64))


def merge(meshes):
    """Concatenate meshes into one (no welding)."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces), validate=False)


# -------------------------------------------------------------------- sampling


def sample_surface(mesh, n, seed=0):
    """Area-weighted uniform samples on the surface, with face normals."""
    if mesh.n_faces == 0:
        raise GeometryError("cannot sample an empty mesh")
    areas = mesh.face_areas
    total = areas.sum()
    if not total > 0:
        raise GeometryError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    fid = rng.choice(mesh.n_faces, size=int(n), p=areas / total)
    r1 = np.sqrt(rng.random(int(n)))
    r2 = rng.random(int(n))
    t = mesh.triangles[fid]
    pts = (
        (1.0 - r1)[:, None] * t[:, 0]
        + (r1 * (1.0 - r2))[:, None] * t[:, 1]
        + (r1 * r2)[:, None] * t[:, 2]
    )
    return PointCloud(pts, mesh.face_normals[fid])


# ------------------------------------------------------------------- operators


def graph_laplacian(mesh):
    """Uniform Laplacian ``I - D^-1 A`` as a CSR matrix.

    ``(L @ X)[i] = x_i - mean of x_j over edge neighbours j``.
    """
    if mesh.n_vertices == 0:
        raise GeometryError("empty mesh")
    deg = mesh.degrees
    if (deg == 0).any():
        raise GeometryError(f"vertex {int(np.argmax(deg == 0))} is isolated (degree 0)")
    inv = sparse.diags(1.0 / deg)
    return (sparse.identity(mesh.n_vertices, format="csr") - inv @ mesh.adjacency).tocsr()


def normalize_object(mesh):
    """Center on the vertex centroid and scale to unit max radius."""
    if mesh.n_vertices == 0:
        raise GeometryError("empty mesh")
    t = mesh.vertices.mean(axis=0)
    s = float(np.linalg.norm(mesh.vertices - t, axis=1).max())
    if not s > 0:
        raise GeometryError("all vertices coincide; scale is zero")
    tf = NormalizationTransform(t, s)
    return mesh.with_vertices(tf.apply(mesh.vertices)), tf


def edge_lengths(mesh):
    """Return ``(edges, lengths)`` for the unique undirected edges."""
    e = mesh.edges
    return e, np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)


def watertight_diagnostics(mesh):
    """Count edges that break closed 2-manifold orientation.

    Returns a dict with ``boundary_edges`` (one incident face),
    ``nonmanifold_edges`` (more than two) and ``misoriented_edges`` (two faces
    traversing the edge in the same direction).
    """
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, inv, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    forward = (directed[:, 0] < directed[:, 1]).astype(np.int64)
    n_forward = np.bincount(inv, weights=forward, minlength=counts.size)
    two = counts == 2
    return {
        "boundary_edges": int((counts == 1).sum()),
        "nonmanifold_edges": int((counts > 2).sum()),
        "misoriented_edges": int((two & (n_forward != 1)).sum()),
    }


def is_watertight(mesh):
    if mesh.n_faces == 0:
        return False
    d = watertight_diagnostics(mesh)
    return d["boundary_edges"] == 0 and d["nonmanifold_edges"] == 0 and d["misoriented_edges"] == 0


def boundary_loops(mesh):
    """Boundary loops as ordered vertex lists, following the face winding."""
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    present = {(int(a), int(b)) for a, b in directed}
    nxt = {}
    for a, b in present:
        if (b, a) not in present:
            if a in nxt:
                raise GeometryError(f"boundary is not a set of simple loops at vertex {a}")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise GeometryError(f"boundary is not a set of simple loops at vertex {cur}")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def close_boundaries(mesh):
    """Fan-triangulate every boundary loop around its centroid.

    Used to make open hand meshes (e.g. a wrist opening) usable for
    inside/outside tests. Raises ``DegenerateMeshError`` when the closed
    result encloses no volume (for example a lone flat triangle).
    """
    d = watertight_diagnostics(mesh)
    if d["nonmanifold_edges"] or d["misoriented_edges"]:
        raise GeometryError(f"cannot close a non-manifold mesh: {d}")
    loops = boundary_loops(mesh)
    if not loops:
        return mesh
    verts = [mesh.vertices]
    faces = [mesh.faces]
    n = mesh.n_vertices
    for loop in loops:
        centroid = mesh.vertices[loop].mean(axis=0)
        c = n
        n += 1
        verts.append(centroid[None])
        ring = np.array(loop, dtype=np.int64)
        # boundary edge a->b is owned by an existing face; the fan face carries b->a
        faces.append(np.stack([np.roll(ring, -1), ring, np.full_like(ring, c)], axis=1))
    out = TriMesh(np.concatenate(verts), np.concatenate(faces), validate=False)
    _, hi = out.bounds
    extent = float(np.max(hi - out.bounds[0]))
    areas = out.face_areas
    if (areas < DEGENERATE_AREA).any() or abs(out.signed_volume) <= 1e-9 * extent**3:
        raise DegenerateMeshError("closing the boundary produced a flat or degenerate solid")
    return out


def ensure_closed(mesh):
    """Return ``mesh`` if watertight, else its boundary-closed version."""
    return mesh if is_watertight(mesh) else close_boundaries(mesh)


def vertex_components(mesh, mask=None):
    """Connected components of the vertex graph restricted to ``mask``.

    Returns a list of sorted index arrays, largest first (ties by smallest index).
    """
    adj = mesh.adjacency
    idx = np.arange(mesh.n_vertices) if mask is None else np.flatnonzero(mask)
    if idx.size == 0:
        return []
    sub = adj[idx][:, idx]
    _, labels = connected_components(sub, directed=False)
    groups = [idx[labels == k] for k in range(labels.max() + 1)]
    groups.sort(key=lambda g: (-g.size, int(g[0])))
    return groups
