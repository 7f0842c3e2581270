"""Contact and mesh-quality losses with analytic vertex gradients.

Gradient semantics: the interior indicator and every nearest-neighbour
correspondence are evaluated once and then held fixed, so each loss is
differentiated as the smooth function it equals on that piece. Ties in a
minimum go to the lowest vertex index.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, InputError
from .mesh import PointCloud, TriMesh, graph_laplacian
from .spatial import classify_hand_vertices, require_watertight, vertexset_distances

MU_E = 2.0
MU_L = 0.1
MU_C = 10.0


@dataclass(frozen=True)
class ContactParams:
    """Weights and characteristic distances (meters) of the contact loss."""

    lambda_r: float = 0.5
    r: float = 0.02
    a: float = 0.01
    mu_c: float = MU_C

    def __post_init__(self):
        if not 0.0 <= self.lambda_r <= 1.0:
            raise ValueError(f"lambda_r must lie in [0, 1], got {self.lambda_r}")
        if not self.r > 0 or not self.a > 0:
            raise ValueError("characteristic distances must be positive")
        if not self.mu_c >= 0:
            raise ValueError("mu_c must be non-negative")


def _index_array(values, name):
    a = np.asarray(values, dtype=np.int64).ravel()
    if a.size and a.min() < 0:
        raise InputError(f"{name} contains a negative index")
    return np.unique(a)


@dataclass(frozen=True)
class HandAnnotation:
    """Vertex-index sets on a hand mesh.

    ``regions`` are the contact regions used by the attraction term (six on
    a full hand), ``palm`` the palm vertices and ``phalanges`` one set per
    rigid part (15 finger segments plus the palm) for phalanx counting.
    """

    regions: tuple
    palm: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    phalanges: tuple = ()

    def __post_init__(self):
        regions = tuple(_index_array(r, f"region {i}") for i, r in enumerate(self.regions))
        if not regions:
            raise InputError("annotation needs at least one contact region")
        seen = np.concatenate(regions)
        if np.unique(seen).size != seen.size:
            raise InputError("contact regions must be pairwise disjoint")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "palm", _index_array(self.palm, "palm"))
        object.__setattr__(
            self, "phalanges", tuple(_index_array(p, f"phalanx {i}") for i, p in enumerate(self.phalanges))
        )

    def validate(self, n_vertices):
        for name, group in self._groups():
            if group.size and group.max() >= n_vertices:
                raise InputError(f"{name} index {int(group.max())} out of range for {n_vertices} hand vertices")
        return self

    def _groups(self):
        yield from ((f"region {i}", r) for i, r in enumerate(self.regions))
        yield "palm", self.palm
        yield from ((f"phalanx {i}", p) for i, p in enumerate(self.phalanges))

    def to_json(self):
        return {
            "regions": [r.tolist() for r in self.regions],
            "palm": self.palm.tolist(),
            "phalanges": [p.tolist() for p in self.phalanges],
        }

    @classmethod
    def from_json(cls, data):
        try:
            return cls(tuple(data["regions"]), data.get("palm", []), tuple(data.get("phalanges", [])))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed annotation: {exc}") from exc


@dataclass(frozen=True)
class LossValue:
    """Scalar loss plus one gradient array per mesh / point set argument."""

    value: float
    gradients: tuple

    @property
    def gradient_hand(self):
        return self.gradients[0]

    @property
    def gradient_obj(self):
        return self.gradients[-1]

    def __mul__(self, w):
        return LossValue(w * self.value, tuple(w * g for g in self.gradients))

    __rmul__ = __mul__

    def __add__(self, other):
        return LossValue(self.value + other.value, tuple(a + b for a, b in zip(self.gradients, other.gradients)))


def penalize(x, alpha):
    """``alpha * tanh(x / alpha)``: linear near 0, saturating at ``alpha``."""
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise ValueError("penalize expects non-negative distances")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    # rounding can push alpha*tanh(x/alpha) a hair above x for tiny x
    out = np.minimum(alpha * np.tanh(x / alpha), x)
    return float(out) if out.ndim == 0 else out


def penalize_derivative(x, alpha):
    x = np.asarray(x, dtype=np.float64)
    out = 1.0 / np.cosh(x / alpha) ** 2
    return float(out) if out.ndim == 0 else out


def _pair_gradient(p, q, d, scale):
    """Gradient of ``d = |p - q|`` w.r.t. p, times ``scale``; 0 at d = 0."""
    safe = np.where(d > 0, d, 1.0)
    g = (p - q) / safe[..., None] * np.where(d > 0, scale, 0.0)[..., None]
    return g


# ---------------------------------------------------------------- contact terms


def repulsion_loss(hand, obj, params=ContactParams(), mask=None):
    """Sum over interior hand vertices of ``l_r`` of their nearest-object-vertex distance."""
    require_watertight(obj)
    if mask is None:
        mask = classify_hand_vertices(hand, obj)
    g_hand = np.zeros_like(hand.vertices)
    g_obj = np.zeros_like(obj.vertices)
    inner = np.flatnonzero(mask)
    if inner.size == 0:
        return LossValue(0.0, (g_hand, g_obj))
    d, j = vertexset_distances(hand.vertices[inner], obj)
    value = float(np.sum(penalize(d, params.r)))
    g = _pair_gradient(hand.vertices[inner], obj.vertices[j], d, penalize_derivative(d, params.r))
    np.add.at(g_hand, inner, g)
    np.add.at(g_obj, j, -g)
    return LossValue(value, (g_hand, g_obj))


def attraction_pairs(hand, obj, annotation, mask):
    """Per region: (distance, hand index, object index) of the closest exterior pair.

    A region with no exterior vertex yields ``(0.0, -1, -1)``.
    """
    out = []
    for region in annotation.regions:
        ext = region[~mask[region]]
        if ext.size == 0:
            out.append((0.0, -1, -1))
            continue
        d, j = vertexset_distances(hand.vertices[ext], obj)
        k = int(np.argmin(d))
        out.append((float(d[k]), int(ext[k]), int(j[k])))
    return out


def attraction_loss(hand, obj, annotation, params=ContactParams(), mask=None):
    """Sum over contact regions of ``l_a`` of the region-to-object vertex-set gap.

    Only exterior region vertices take part; a region lying entirely inside
    the object contributes nothing.
    """
    require_watertight(obj)
    annotation.validate(hand.n_vertices)
    if mask is None:
        mask = classify_hand_vertices(hand, obj)
    g_hand = np.zeros_like(hand.vertices)
    g_obj = np.zeros_like(obj.vertices)
    value = 0.0
    for d, i, j in attraction_pairs(hand, obj, annotation, mask):
        if i < 0:
            continue
        value += penalize(d, params.a)
        if d > 0:
            g = (hand.vertices[i] - obj.vertices[j]) / d * penalize_derivative(d, params.a)
            g_hand[i] += g
            g_obj[j] -= g
    return LossValue(float(value), (g_hand, g_obj))


def contact_loss(hand, obj, annotation, params=ContactParams(), mask=None):
    """``lambda_r * repulsion + (1 - lambda_r) * attraction`` (values and gradients)."""
    require_watertight(obj)
    if mask is None:
        mask = classify_hand_vertices(hand, obj)
    rep = repulsion_loss(hand, obj, params, mask)
    att = attraction_loss(hand, obj, annotation, params, mask)
    return params.lambda_r * rep + (1.0 - params.lambda_r) * att


# --------------------------------------------------------------- regularizers


def edge_loss(mesh):
    """Mean absolute deviation of squared edge lengths from their mean."""
    e = mesh.edges
    if e.shape[0] == 0:
        raise GeometryError("edge loss needs at least one edge")
    diff = mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]]
    sq = np.einsum("ij,ij->i", diff, diff)
    n = sq.size
    mean = sq.mean()
    dev = sq - mean
    value = float(np.abs(dev).mean())
    s = np.sign(dev)
    coef = (s - s.mean()) / n
    g_edge = 2.0 * coef[:, None] * diff
    grad = np.zeros_like(mesh.vertices)
    np.add.at(grad, e[:, 0], g_edge)
    np.add.at(grad, e[:, 1], -g_edge)
    return LossValue(value, (grad,))


def laplacian_loss(mesh, laplacian=None):
    """Mean over vertices of the norm of the uniform Laplacian of the positions."""
    lap = graph_laplacian(mesh) if laplacian is None else laplacian
    lv = lap @ mesh.vertices
    norms = np.linalg.norm(lv, axis=1)
    n = mesh.n_vertices
    unit = lv / np.where(norms > 0, norms, 1.0)[:, None]
    unit[norms == 0] = 0.0
    grad = (lap.T @ unit) / n
    return LossValue(float(norms.mean()), (np.asarray(grad),))


def _points(x):
    if isinstance(x, PointCloud):
        return x.points
    if isinstance(x, TriMesh):
        return x.vertices
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def chamfer(a, b):
    """Symmetric Chamfer loss ``0.5 * (sum_p min_q |p-q|^2 + sum_q min_p |q-p|^2)``.

    Sums, not means. Gradients are returned for ``a`` then ``b``.
    """
    pa, pb = _points(a), _points(b)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise GeometryError("Chamfer distance of an empty point set")
    d_ab, j_ab = vertexset_distances(pa, pb)
    d_ba, j_ba = vertexset_distances(pb, pa)
    value = 0.5 * (float(np.sum(d_ab**2)) + float(np.sum(d_ba**2)))
    ga = pa - pb[j_ab]
    gb = pb - pa[j_ba]
    grad_a = ga.copy()
    grad_b = gb.copy()
    np.add.at(grad_b, j_ab, -ga)
    np.add.at(grad_a, j_ba, -gb)
    return LossValue(value, (grad_a, grad_b))


def translation_scale_loss(t_pred, s_pred, t_true, s_true):
    """Squared errors of the predicted translation and scale."""
    if not (s_pred > 0 and s_true > 0):
        raise ValueError("scales must be positive")
    dt = np.asarray(t_true, dtype=np.float64) - np.asarray(t_pred, dtype=np.float64)
    return float(dt @ dt), float((s_true - s_pred) ** 2)
