"""Synthetic hands and objects for tests, demos and benchmarks.

The hand is a palm box plus fifteen finger-segment boxes (three per finger)
laid either flat on the palm plane or wrapped around a sphere. Its
annotation marks the inner face of each distal segment and a patch at the
palm centre as the six contact regions; each box is one phalanx set.
"""

from dataclasses import dataclass

import numpy as np

from .losses import HandAnnotation
from .mesh import TriMesh, box, merge, sphere

FINGER_AZIMUTHS_DEG = (180.0, -36.0, -12.0, 12.0, 36.0)  # thumb first
PALM_HALF = (0.045, 0.045, 0.01)
SEGMENT_LENGTH = 0.02
SEGMENT_THICKNESS = 0.012
SEGMENT_WIDTH = 0.012
PALM_REGION_RADIUS = 0.02


@dataclass(frozen=True)
class HandFixture:
    mesh: TriMesh
    annotation: HandAnnotation
    grasp_center: np.ndarray  # where a touching sphere of ``object_radius`` sits
    object_radius: float


def _segment(face_point, t_axis, inward, divisions):
    t = t_axis / np.linalg.norm(t_axis)
    u = inward / np.linalg.norm(inward)
    b = np.cross(t, u)
    rot = np.stack([t, u, b], axis=1)
    half = np.array([SEGMENT_LENGTH / 2, SEGMENT_THICKNESS / 2, SEGMENT_WIDTH / 2])
    center = face_point - half[1] * u
    m = box(half, center, rot, divisions)
    local = (m.vertices - center) @ rot
    inner = np.flatnonzero(np.isclose(local[:, 1], half[1], atol=1e-12))
    return m, inner


def synthetic_hand(pose="cage", object_radius=0.04, gap=0.0, palm_divisions=8, segment_divisions=3):
    """Build a hand fixture.

    ``pose="flat"`` lays the fingers on the palm plane ``z = 0`` (palmar side
    up); ``pose="cage"`` curls them around a sphere of ``object_radius``
    resting on the palm, with inner faces ``gap`` meters off its surface.
    """
    palm = box(PALM_HALF, (0.0, 0.0, -PALM_HALF[2]), divisions=palm_divisions)
    top = np.flatnonzero(np.isclose(palm.vertices[:, 2], 0.0, atol=1e-12))
    palm_patch = top[np.hypot(palm.vertices[top, 0], palm.vertices[top, 1]) <= PALM_REGION_RADIUS]
    center = np.array([0.0, 0.0, object_radius + gap])
    parts = [palm]
    inners = []
    for az in np.radians(FINGER_AZIMUTHS_DEG):
        e = np.array([np.cos(az), np.sin(az), 0.0])
        for s in range(3):
            if pose == "flat":
                r = 0.058 + s * (SEGMENT_LENGTH + 0.003)
                face_point = r * e
                t_axis, inward = e, np.array([0.0, 0.0, 1.0])
            elif pose == "cage":
                theta = np.radians(62.0 + 35.0 * s)
                n = np.sin(theta) * e - np.cos(theta) * np.array([0.0, 0.0, 1.0])
                face_point = center + (object_radius + gap) * n
                t_axis = np.cos(theta) * e + np.sin(theta) * np.array([0.0, 0.0, 1.0])
                inward = -n
            else:
                raise ValueError(f"unknown pose {pose!r}")
            seg, inner = _segment(face_point, t_axis, inward, segment_divisions)
            parts.append(seg)
            inners.append(inner)
    offsets = np.cumsum([0] + [p.n_vertices for p in parts])
    mesh = merge(parts)
    phalanges = [np.arange(offsets[i], offsets[i + 1]) for i in range(1, len(parts))]
    phalanges.append(np.arange(offsets[0], offsets[1]))
    distal = [inners[3 * f + 2] + offsets[3 * f + 3] for f in range(5)]
    annotation = HandAnnotation(tuple(distal) + (palm_patch,), top, tuple(phalanges))
    return HandFixture(mesh, annotation, center, float(object_radius))


def plate(half_extents=(0.125, 0.125, 0.01), bottom=0.0, spacing=0.003125):
    """Flat box lying on ``z = bottom`` with ~``spacing`` vertex pitch on its large faces."""
    hx, hy, hz = half_extents
    div = (max(1, int(round(2 * hx / spacing))), max(1, int(round(2 * hy / spacing))), 2)
    return box(half_extents, (0.0, 0.0, bottom + hz), divisions=div)


def revolve(profile, segments=32):
    """Closed surface of revolution about z from an (r, z) profile that starts and ends on the axis."""
    profile = np.asarray(profile, dtype=np.float64)
    if profile[0, 0] != 0 or profile[-1, 0] != 0:
        raise ValueError("profile must start and end on the axis (r = 0)")
    phi = 2 * np.pi * np.arange(segments) / segments
    verts = [[0.0, 0.0, profile[0, 1]]]
    rings = []
    for r, z in profile[1:-1]:
        rings.append(len(verts) + np.arange(segments))
        verts.extend(np.stack([r * np.cos(phi), r * np.sin(phi), np.full(segments, z)], axis=1))
    last = len(verts)
    verts.append([0.0, 0.0, profile[-1, 1]])
    faces = []
    nxt = np.roll(np.arange(segments), -1)
    first = rings[0]
    faces += [(0, first[nxt[j]], first[j]) for j in range(segments)]
    for ra, rb in zip(rings[:-1], rings[1:]):
        for j in range(segments):
            faces.append((ra[j], ra[nxt[j]], rb[nxt[j]]))
            faces.append((ra[j], rb[nxt[j]], rb[j]))
    end = rings[-1]
    faces += [(last, end[j], end[nxt[j]]) for j in range(segments)]
    mesh = TriMesh(np.array(verts), np.array(faces))
    if mesh.signed_volume < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def bowl(inner_radius=0.05, thickness=0.01, rings=12, segments=32, center=(0.0, 0.0, 0.0)):
    """Solid hemispherical shell opening upwards, rim at ``center`` height."""
    outer = inner_radius + thickness
    t = np.linspace(0.0, np.pi / 2, rings + 1)
    outer_arc = np.stack([outer * np.sin(t), -outer * np.cos(t)], axis=1)
    inner_arc = np.stack([inner_radius * np.sin(t[::-1]), -inner_radius * np.cos(t[::-1])], axis=1)
    mesh = revolve(np.concatenate([outer_arc, inner_arc]), segments)
    return mesh.translated(center)


def tube(radius=0.02, height=0.05, rings=4, segments=24):
    """Open cylinder (no caps) along z, centered at the origin."""
    phi = 2 * np.pi * np.arange(segments) / segments
    z = np.linspace(-height / 2, height / 2, rings + 1)
    verts = np.concatenate([np.stack([radius * np.cos(phi), radius * np.sin(phi), np.full(segments, zz)], axis=1) for zz in z])
    faces = []
    for k in range(rings):
        for j in range(segments):
            a = k * segments + j
            b = k * segments + (j + 1) % segments
            faces.append((a, b, b + segments))
            faces.append((a, b + segments, a + segments))
    return TriMesh(verts, np.array(faces))


def cage_grasp(object_radius=0.04, level=3, offset=(0.0, 0.0, 0.0), gap=0.0):
    """Cage hand with a sphere object at its grasp center (plus ``offset``)."""
    hand = synthetic_hand("cage", object_radius, gap=gap)
    obj = sphere(object_radius, hand.grasp_center + np.asarray(offset, dtype=np.float64), level)
    return hand, obj


def flat_grasp(bottom=0.0):
    """Flat hand with a plate whose underside sits at height ``bottom``."""
    hand = synthetic_hand("flat")
    return hand, plate(bottom=bottom)


def resting_drop(radius=0.03, clearance=0.001, bowl_radius=0.05):
    """Sphere hovering ``clearance`` above the inside bottom of a fixed bowl: ``(bowl, sphere)``."""
    cup = bowl(inner_radius=bowl_radius)
    ball = sphere(radius, (0.0, 0.0, -bowl_radius + radius + clearance), 3)
    return cup, ball
