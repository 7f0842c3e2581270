"""Physical plausibility metrics for a hand-object pair."""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, InputError
from .mesh import ensure_closed, vertex_components
from .spatial import (
    DEFAULT_VOXEL,
    classify_hand_vertices,
    grid_for_bounds,
    require_watertight,
    surface_distances,
    voxelize_solid,
)

DEFAULT_VICINITY = 0.003
DEFAULT_FREQ_THRESHOLD = 0.08


def penetration_depth(hand, obj):
    """Largest surface distance of a hand vertex inside the object, in mm (0 if none)."""
    require_watertight(obj)
    mask = classify_hand_vertices(hand, obj)
    if not mask.any():
        return 0.0
    d, _, _ = surface_distances(hand.vertices[mask], obj)
    return float(d.max() * 1e3)


def shared_grid(meshes, h):
    lo = np.min([m.bounds[0] for m in meshes], axis=0)
    hi = np.max([m.bounds[1] for m in meshes], axis=0)
    return grid_for_bounds(lo, hi, h, pad=2 * h)


def intersection_volume(hand, obj, h=DEFAULT_VOXEL):
    """Volume (cm^3) of voxels whose centers lie inside both meshes.

    Both meshes are voxelized on one grid anchored at the padded union
    bounding box; open meshes are boundary-closed first.
    """
    if not h > 0:
        raise ValueError("voxel size must be positive")
    solids = [ensure_closed(hand), ensure_closed(obj)]
    origin, dims = shared_grid(solids, h)
    ga = voxelize_solid(solids[0], h, origin=origin, dims=dims)
    gb = voxelize_solid(solids[1], h, origin=origin, dims=dims)
    both = int(np.count_nonzero(ga.occupancy & gb.occupancy))
    return both * h**3 * 1e6


def contact_frequencies(pairs, vicinity=DEFAULT_VICINITY):
    """Fraction of pairs in which each hand vertex is within ``vicinity`` of the object surface."""
    pairs = list(pairs)
    if not pairs:
        raise InputError("need at least one hand-object pair")
    ref = pairs[0][0]
    counts = np.zeros(ref.n_vertices, dtype=np.int64)
    for k, (hand, obj) in enumerate(pairs):
        if hand.n_vertices != ref.n_vertices or not np.array_equal(hand.faces, ref.faces):
            raise TopologyMismatchError(f"hand mesh of pair {k} does not share the reference topology")
        d, _, _ = surface_distances(hand.vertices, obj)
        counts += d < vicinity
    return counts / len(pairs)


class TopologyMismatchError(GeometryError):
    """Hand meshes in a batch do not share vertex count and faces."""


def extract_contact_regions(pairs, vicinity=DEFAULT_VICINITY, freq_threshold=DEFAULT_FREQ_THRESHOLD):
    """Connected groups of hand vertices that are frequently in contact.

    A vertex survives when it lies within ``vicinity`` of the object surface
    in at least ``freq_threshold`` of the pairs. Survivors are split into
    connected components of the hand's vertex graph, largest first.
    """
    pairs = list(pairs)
    freq = contact_frequencies(pairs, vicinity)
    return vertex_components(pairs[0][0], freq >= freq_threshold)


@dataclass
class MetricsReport:
    """One pair's metrics in report units (mm, cm^3) plus the parameters used."""

    penetration_depth_mm: float
    intersection_volume_cm3: float
    sim_displacement_mm: float | None = None
    chamfer: float | None = None
    epsilon: float | None = None
    volume_v: float | None = None
    volume_v_std_error: float | None = None
    score_G: float | None = None
    n_phalanges: int | None = None
    palm_contact: bool | None = None
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self):
        out = {
            "penetration_depth_mm": self.penetration_depth_mm,
            "intersection_volume_cm3": self.intersection_volume_cm3,
        }
        if self.sim_displacement_mm is not None:
            out["sim_displacement_mm"] = self.sim_displacement_mm
        if self.chamfer is not None:
            out["chamfer"] = self.chamfer
            out["chamfer_x1000"] = self.chamfer * 1000.0
        if self.epsilon is not None:
            out.update(
                epsilon=self.epsilon,
                volume_v=self.volume_v,
                volume_v_std_error=self.volume_v_std_error,
                score_G=self.score_G,
                n_phalanges=self.n_phalanges,
                palm_contact=self.palm_contact,
            )
        out["params"] = dict(self.params)
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def average_reports(reports):
    """Arithmetic mean of the numeric metrics over a batch (missing values skipped)."""
    keys = [
        "penetration_depth_mm",
        "intersection_volume_cm3",
        "sim_displacement_mm",
        "chamfer",
        "epsilon",
        "volume_v",
        "score_G",
    ]
    out = {}
    for k in keys:
        vals = [getattr(r, k) for r in reports if getattr(r, k) is not None]
        if vals:
            out[k] = float(np.mean(vals))
    out["n_pairs"] = len(reports)
    return out
