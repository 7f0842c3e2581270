"""Time the hot geometry kernels with numba and with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0] [--json out.json]

Each row is the best of ``--repeat`` runs after one warm-up call (which also
triggers compilation). ``--scale`` multiplies the query counts.
"""

import argparse
import json
import time

import numpy as np

from hocontact import _accel
from hocontact.fixtures import cage_grasp
from hocontact.grasp import extract_contacts, hull_membership, wrench_primitives
from hocontact.mesh import sphere
from hocontact.sim import mass_properties
from hocontact.spatial import inside_mask, surface_distances, vertexset_distances, voxelize_solid


def cases(scale):
    r = np.random.default_rng(0)
    mesh = sphere(0.05, level=4)  # 2562 vertices, 5120 faces
    n = int(20_000 * scale)
    pts = r.uniform(-0.08, 0.08, size=(n, 3))
    hand, obj = cage_grasp()
    contacts = extract_contacts(hand.mesh, obj)
    _, com, _ = mass_properties(obj, 1.0)
    w = wrench_primitives(contacts, center_of_mass=com, rho=0.04).primitives
    samples = r.uniform(w.min(axis=0), w.max(axis=0), size=(int(20_000 * scale), 6))
    small_w = r.normal(size=(40, 6))
    small_x = r.uniform(small_w.min(axis=0), small_w.max(axis=0), size=(int(2_000 * scale), 6))
    return [
        (f"surface distance ({n} pts, 5120 faces)", lambda: surface_distances(pts, mesh)),
        (f"vertex-set distance ({n} pts, 2562 verts)", lambda: vertexset_distances(pts, mesh)),
        (f"inside test ({n} pts)", lambda: inside_mask(pts, mesh)),
        ("voxelize sphere (h = 2 mm)", lambda: voxelize_solid(mesh, 0.002)),
        (f"halfspace membership ({len(samples)} samples, {len(w)} wrenches)", lambda: hull_membership(w, samples)),
        (f"min-norm projection ({len(small_x)} samples, 40 wrenches)",
         lambda: hull_membership(small_w, small_x, "projection")),
    ]


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)

    backends = [True, False] if _accel.AVAILABLE else [False]
    rows = []
    for name, fn in cases(args.scale):
        row = {"kernel": name}
        for flag in backends:
            with _accel.use_numba(flag):
                row["numba" if flag else "numpy"] = best_of(fn, args.repeat)
        rows.append(row)

    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba s':>9}  {'numpy s':>9}  {'speedup':>8}")
    for r in rows:
        nb = r.get("numba", float("nan"))
        speed = r["numpy"] / nb if "numba" in r else float("nan")
        print(f"{r['kernel']:<{width}}  {nb:9.4f}  {r['numpy']:9.4f}  {speed:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
