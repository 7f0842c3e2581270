"""Gradient-descent refinement of a grasp under the contact loss.

The object moves rigidly (translation plus an axis-angle increment about its
centroid each step), the hand vertices move freely, or both. Plain
fixed-step descent without momentum; interior masks and nearest neighbours
are recomputed at every iteration and frozen within it.

All losses are evaluated in the object's rest frame: the hand is mapped
through the inverse pose, so the object's acceleration structures are built
once however far it travels.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DivergenceError
from .losses import MU_C, MU_L, ContactParams, attraction_loss, attraction_pairs, laplacian_loss, repulsion_loss
from .mesh import graph_laplacian
from .spatial import classify_hand_vertices, require_watertight, surface_distances

MODES = ("object_pose", "hand_vertices", "both")
DEFAULT_STEP = 1e-4
DEFAULT_ITERATIONS = 200
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class RefineConfig:
    optimize: str = "object_pose"
    step: float = DEFAULT_STEP
    iterations: int = DEFAULT_ITERATIONS
    contact: ContactParams = field(default_factory=ContactParams)
    hand_laplacian_weight: float = MU_L

    def __post_init__(self):
        if self.optimize not in MODES:
            raise ValueError(f"optimize must be one of {MODES}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def weights(self):
        """Contact and hand-Laplacian weights, normalised to sum to 1."""
        w_c = self.contact.mu_c if self.contact.mu_c > 0 else MU_C
        w_l = self.hand_laplacian_weight if self.optimize != "object_pose" else 0.0
        total = w_c + w_l
        return w_c / total, w_l / total


@dataclass
class RefineTrace:
    records: list = field(default_factory=list)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # axis-angle
    aborted: bool = False

    def __len__(self):
        return len(self.records)

    def column(self, key):
        return np.array([r[key] for r in self.records])

    def to_json(self):
        return {
            "iterations": [dict(r) for r in self.records],
            "final_translation": self.translation.tolist(),
            "final_rotation_axis_angle": self.rotation.tolist(),
            "aborted": self.aborted,
        }


def _evaluate(hand_local, obj, annotation, cfg, lap):
    mask = classify_hand_vertices(hand_local, obj)
    p = cfg.contact
    rep = repulsion_loss(hand_local, obj, p, mask)
    att = attraction_loss(hand_local, obj, annotation, p, mask)
    contact = p.lambda_r * rep + (1.0 - p.lambda_r) * att
    w_c, w_l = cfg.weights()
    total = w_c * contact
    g_hand = total.gradient_hand
    value = total.value
    if w_l > 0:
        lap_term = laplacian_loss(hand_local, lap)
        value += w_l * lap_term.value
        g_hand = g_hand + w_l * lap_term.gradients[0]
    if mask.any():
        d, _, _ = surface_distances(hand_local.vertices[mask], obj)
        depth = float(d.max() * 1e3)
    else:
        depth = 0.0
    gaps = [d for d, _, _ in attraction_pairs(hand_local, obj, annotation, mask)]
    record = {
        "loss": float(value),
        "L_R": rep.value,
        "L_A": att.value,
        "penetration_depth_mm": depth,
        "attraction_gaps_m": gaps,
    }
    return record, g_hand, total.gradient_obj


def refine(hand, obj, annotation, config=RefineConfig()):
    """Run the descent; returns ``(hand, obj, trace)`` with the final meshes in world frame.

    Raises :class:`DivergenceError` (carrying the partial trace) when the
    loss exceeds ten times its initial value.
    """
    require_watertight(obj)
    annotation.validate(hand.n_vertices)
    cfg = config
    move_obj = cfg.optimize in ("object_pose", "both")
    move_hand = cfg.optimize in ("hand_vertices", "both")
    lap = graph_laplacian(hand) if move_hand else None

    c0 = obj.vertices.mean(axis=0)
    rest = obj.vertices - c0
    rot = np.eye(3)
    trans = np.zeros(3)
    hand_world = hand.vertices.copy()
    trace = RefineTrace()

    def to_local(points):
        return (points - c0 - trans) @ rot + c0

    initial = None
    for it in range(cfg.iterations + 1):
        hand_local = hand.with_vertices(to_local(hand_world))
        record, g_hand_local, g_obj_local = _evaluate(hand_local, obj, annotation, cfg, lap)
        record["iteration"] = it
        trace.records.append(record)
        if initial is None:
            initial = record["loss"]
        elif initial > 0 and record["loss"] > DIVERGENCE_FACTOR * initial:
            trace.aborted = True
            trace.translation = trans.copy()
            trace.rotation = Rotation.from_matrix(rot).as_rotvec()
            raise DivergenceError(
                f"loss {record['loss']:.6g} exceeded {DIVERGENCE_FACTOR:g}x the initial {initial:.6g} at iteration {it}",
                trace,
            )
        if it == cfg.iterations:
            break
        if move_obj:
            g_world = g_obj_local @ rot.T
            arm = rest @ rot.T
            g_trans = g_world.sum(axis=0)
            g_rot = np.cross(arm, g_world).sum(axis=0)
        if move_hand:
            hand_world = hand_world - cfg.step * (g_hand_local @ rot.T)
        if move_obj:
            trans = trans - cfg.step * g_trans
            rot = Rotation.from_rotvec(-cfg.step * g_rot).as_matrix() @ rot

    trace.translation = trans.copy()
    trace.rotation = Rotation.from_matrix(rot).as_rotvec()
    obj_world = obj.with_vertices(c0 + trans + rest @ rot.T)
    return hand.with_vertices(hand_world), obj_world, trace
