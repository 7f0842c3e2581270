"""Penalty-contact drop test: object under gravity against a fixed hand.

The constants in :class:`SimParams` are this package's own choices; they are
echoed into every report next to the displacement they produced.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import SimulationUnstableError
from .mesh import ensure_closed
from .spatial import ray_codes, require_watertight, surface_distances

ENERGY_GUARD = 1e3


@dataclass(frozen=True)
class SimParams:
    gravity: float = 9.81  # m/s^2, along -z
    duration: float = 1.0  # s
    dt: float = 1e-3  # s
    stiffness: float = 1e4  # N/m per contact
    damping: float = 50.0  # N s/m per contact
    friction: float = 0.5
    density: float = 1000.0  # kg/m^3

    def __post_init__(self):
        if self.gravity < 0:
            raise ValueError("gravity must be non-negative")
        for name in ("duration", "dt", "stiffness", "damping", "friction", "density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt > 1e-2:
            raise ValueError("dt must be <= 1e-2 s")

    def to_json(self):
        return asdict(self)


@dataclass
class RigidState:
    position: np.ndarray  # center of mass, m
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    velocity: np.ndarray
    angular_velocity: np.ndarray


def mass_properties(mesh, density=1000.0):
    """Mass, center of mass and inertia tensor (about the COM) of a closed mesh.

    Sums signed tetrahedra spanned by each face and a reference point.
    """
    require_watertight(mesh)
    ref = mesh.vertices.mean(axis=0)
    t = mesh.triangles - ref
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    volume = vol.sum()
    if not volume > 0:
        raise SimulationUnstableError("mesh encloses non-positive volume (inverted winding?)")
    centroid = (vol[:, None] * (a + b + c)).sum(axis=0) / (4.0 * volume)
    s = a + b + c
    # integral of x x^T over each tetrahedron (0, a, b, c)
    second = (
        np.einsum("i,ij,ik->jk", vol, a, a)
        + np.einsum("i,ij,ik->jk", vol, b, b)
        + np.einsum("i,ij,ik->jk", vol, c, c)
        + np.einsum("i,ij,ik->jk", vol, s, s)
    ) / 20.0
    mass = density * volume
    cov = density * second - mass * np.outer(centroid, centroid)
    inertia = np.trace(cov) * np.eye(3) - cov
    return float(mass), centroid + ref, inertia


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _quat_step(q, omega, dt):
    w, x, y, z = q
    ox, oy, oz = omega
    dq = 0.5 * np.array(
        [
            -ox * x - oy * y - oz * z,
            ox * w + oy * z - oz * y,
            oy * w + oz * x - ox * z,
            oz * w + ox * y - oy * x,
        ]
    )
    q = q + dt * dq
    return q / np.linalg.norm(q)


def contact_forces(points, velocities, hand, params, hand_box=None):
    """Penalty forces on object points that lie inside the (closed) hand.

    Returns ``(forces, mask)`` where ``mask`` marks the points in contact.
    """
    forces = np.zeros_like(points)
    mask = np.zeros(points.shape[0], dtype=bool)
    if hand is None:
        return forces, mask
    cand = np.arange(points.shape[0])
    if hand_box is not None:
        lo, hi = hand_box
        cand = np.flatnonzero(((points >= lo) & (points <= hi)).all(axis=1))
    if cand.size == 0:
        return forces, mask
    codes = ray_codes(points[cand], hand)
    cand = cand[codes == 1]
    if cand.size == 0:
        return forces, mask
    d, cp, _ = surface_distances(points[cand], hand)
    ok = d > 0
    cand, d, cp = cand[ok], d[ok], cp[ok]
    n = (cp - points[cand]) / d[:, None]
    vel = velocities[cand]
    vn = np.einsum("ij,ij->i", vel, n)
    fn = np.maximum(0.0, params.stiffness * d - params.damping * vn)
    vt = vel - vn[:, None] * n
    speed = np.linalg.norm(vt, axis=1)
    ft_mag = np.minimum(params.damping * speed, params.friction * fn)
    with np.errstate(invalid="ignore", divide="ignore"):
        ft = -np.where(speed[:, None] > 0, vt / speed[:, None], 0.0) * ft_mag[:, None]
    forces[cand] = fn[:, None] * n + ft
    mask[cand] = True
    return forces, mask


def simulate(hand, obj, params=SimParams(), record=False):
    """Integrate the drop test; returns ``(final_state, trajectory)``.

    ``trajectory`` is a list of ``(t, x, y, z)`` COM samples when ``record``
    is set (every step), otherwise empty.
    """
    require_watertight(obj)
    mass, com, inertia_body = mass_properties(obj, params.density)
    inv_body = np.linalg.inv(inertia_body)
    offsets = obj.vertices - com
    solid = None if hand is None else ensure_closed(hand)
    box = None
    if solid is not None:
        box = (solid.bounds[0] - 1e-9, solid.bounds[1] + 1e-9)
    state = RigidState(com.copy(), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.zeros(3))
    g = np.array([0.0, 0.0, -params.gravity])
    steps = int(round(params.duration / params.dt))
    rho = float(np.linalg.norm(offsets, axis=1).max())
    reference = mass * params.gravity * (0.5 * params.gravity * params.duration**2 + rho)
    limit = ENERGY_GUARD * max(reference, 1e-12)
    traj = [(0.0, *state.position)] if record else []
    for k in range(steps):
        rot = quat_to_matrix(state.orientation)
        arm = offsets @ rot.T
        pts = state.position + arm
        vel = state.velocity + np.cross(state.angular_velocity, arm)
        forces, _ = contact_forces(pts, vel, solid, params, box)
        total_f = forces.sum(axis=0)
        torque = np.cross(arm, forces).sum(axis=0)
        inertia = rot @ inertia_body @ rot.T
        inv_inertia = rot @ inv_body @ rot.T
        w = state.angular_velocity
        state.velocity = state.velocity + (total_f / mass + g) * params.dt
        state.angular_velocity = w + inv_inertia @ (torque - np.cross(w, inertia @ w)) * params.dt
        state.position = state.position + state.velocity * params.dt
        state.orientation = _quat_step(state.orientation, state.angular_velocity, params.dt)
        kinetic = 0.5 * mass * state.velocity @ state.velocity + 0.5 * state.angular_velocity @ inertia @ state.angular_velocity
        if not np.isfinite(kinetic) or kinetic > limit:
            raise SimulationUnstableError(
                "integration blew up",
                {"step": k + 1, "kinetic_energy": float(kinetic), "limit": float(limit), "dt": params.dt},
            )
        if record:
            traj.append(((k + 1) * params.dt, *state.position))
    return state, traj


def simulate_displacement(hand, obj, params=SimParams(), record=False):
    """COM displacement (mm) after ``params.duration`` seconds of simulation."""
    _, com0, _ = mass_properties(obj, params.density)
    state, traj = simulate(hand, obj, params, record)
    disp = float(np.linalg.norm(state.position - com0) * 1e3)
    return (disp, traj) if record else disp
