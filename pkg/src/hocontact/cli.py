"""Command-line interface.

Exit codes: 0 success, 2 unreadable or malformed input, 3 violated geometric
precondition, 4 refinement divergence or unstable simulation.
"""

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DivergenceError, GeometryError, InputError, SimulationUnstableError
from .grasp import DEFAULT_CONE_EDGES, DEFAULT_DELTA, DEFAULT_MU, grasp_quality
from .losses import MU_C, MU_E, MU_L, ContactParams, HandAnnotation, chamfer
from .mesh import icosphere, load_obj, obj_text, sample_surface, save_obj
from .metrics import (
    DEFAULT_FREQ_THRESHOLD,
    DEFAULT_VICINITY,
    MetricsReport,
    average_reports,
    extract_contact_regions,
    intersection_volume,
    penetration_depth,
)
from .refine import DEFAULT_ITERATIONS, DEFAULT_STEP, MODES, RefineConfig, refine
from .sim import SimParams, simulate_displacement
from .spatial import DEFAULT_VOXEL

SCHEMA_VERSION = 1
SIG_DIGITS = 9


# ------------------------------------------------------------------ output


def _round(value):
    if isinstance(value, dict):
        return {str(k): _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    if isinstance(value, np.ndarray):
        return _round(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{SIG_DIGITS}g}")
    return value


def dumps(payload):
    """Versioned, rounded, stable JSON text."""
    body = {"schema_version": SCHEMA_VERSION}
    body.update(payload)
    return json.dumps(_round(body), indent=2, allow_nan=False) + "\n"


def _emit(payload, out):
    text = dumps(payload)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def default_params():
    """Every tunable default, echoed into reports."""
    c = ContactParams()
    return {
        "lambda_r": c.lambda_r,
        "r": c.r,
        "a": c.a,
        "mu_c": MU_C,
        "mu_e": MU_E,
        "mu_l": MU_L,
        "voxel": DEFAULT_VOXEL,
        "vicinity": DEFAULT_VICINITY,
        "freq_threshold": DEFAULT_FREQ_THRESHOLD,
        "delta": DEFAULT_DELTA,
        "mu": DEFAULT_MU,
        "cone_edges": DEFAULT_CONE_EDGES,
    }


# ------------------------------------------------------------------- inputs


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: cannot read file ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_annotation(path, hand=None):
    ann = HandAnnotation.from_json(_load_json(path))
    if hand is not None:
        ann.validate(hand.n_vertices)
    return ann


def load_manifest(path):
    """Newline-delimited JSON records; relative paths resolve against the manifest's folder."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: cannot read manifest ({exc.strerror})") from exc
    records, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or "hand_path" not in rec or "object_path" not in rec:
            raise InputError(f"{path}:{lineno}: record needs hand_path and object_path")
        rid = str(rec.get("id", lineno))
        if rid in seen:
            raise InputError(f"{path}:{lineno}: duplicate record id {rid!r}")
        seen.add(rid)
        entry = {"id": rid}
        for key in ("hand_path", "object_path", "annotation_path"):
            if rec.get(key) is not None:
                p = Path(rec[key])
                entry[key] = p if p.is_absolute() else path.parent / p
        records.append(entry)
    if not records:
        raise InputError(f"{path}: manifest has no records")
    return records


def _load_record(rec):
    try:
        hand = load_obj(rec["hand_path"])
        obj = load_obj(rec["object_path"])
        ann = load_annotation(rec["annotation_path"], hand) if "annotation_path" in rec else None
    except InputError as exc:
        raise InputError(f"record {rec['id']!r}: {exc}") from exc
    return hand, obj, ann


# ----------------------------------------------------------------- commands


def _metrics_params(args):
    params = default_params()
    params.update(voxel=args.voxel, delta=args.delta, mu=args.mu, cone_edges=args.cone_edges, seed=args.seed)
    if args.simulate:
        params["sim"] = _sim_params(args).to_json()
    return params


def compute_metrics(hand, obj, ann, args):
    report = MetricsReport(
        penetration_depth_mm=penetration_depth(hand, obj),
        intersection_volume_cm3=intersection_volume(hand, obj, args.voxel),
        params=_metrics_params(args),
    )
    if ann is not None:
        q = grasp_quality(hand, obj, ann, args.delta, args.mu, args.cone_edges, args.seed)
        report.epsilon = q.epsilon
        report.volume_v = q.volume_v
        report.volume_v_std_error = q.volume_std_error
        report.score_G = q.score_G
        report.n_phalanges = q.n_phalanges
        report.palm_contact = q.palm_contact
    if args.simulate:
        report.sim_displacement_mm = simulate_displacement(hand, obj, _sim_params(args))
    return report


def _metrics_record(job):
    rec, args = job
    hand, obj, ann = _load_record(rec)
    return compute_metrics(hand, obj, ann, args)


def cmd_metrics(args):
    if args.manifest is None:
        if args.hand is None or args.object is None:
            raise InputError("metrics needs --hand and --object, or --manifest")
        hand, obj = load_obj(args.hand), load_obj(args.object)
        ann = load_annotation(args.annotation, hand) if args.annotation else None
        _emit(compute_metrics(hand, obj, ann, args).to_json(), args.out)
        return 0
    records = load_manifest(args.manifest)
    jobs = [(rec, args) for rec in records]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(_metrics_record, jobs))  # map keeps manifest order
    else:
        reports = [_metrics_record(job) for job in jobs]
    payload = {
        "pairs": [{"id": rec["id"], **rep.to_json()} for rec, rep in zip(records, reports)],
        "mean": average_reports(reports),
        "params": _metrics_params(args),
    }
    _emit(payload, args.out)
    return 0


def cmd_refine(args):
    hand, obj = load_obj(args.hand), load_obj(args.object)
    ann = load_annotation(args.annotation, hand)
    contact = ContactParams(lambda_r=args.lambda_r, r=args.r, a=args.a)
    cfg = RefineConfig(optimize=args.mode, step=args.step, iterations=args.steps, contact=contact)
    prefix = args.out_prefix
    params = {
        "mode": cfg.optimize,
        "step": cfg.step,
        "iterations": cfg.iterations,
        "lambda_r": contact.lambda_r,
        "r": contact.r,
        "a": contact.a,
        "mu_c": contact.mu_c,
        "mu_l": cfg.hand_laplacian_weight,
    }
    trace_path = Path(f"{prefix}_trace.json")
    try:
        new_hand, new_obj, trace = refine(hand, obj, ann, cfg)
    except DivergenceError as exc:
        if exc.trace is not None:
            trace_path.write_text(dumps({"params": params, **exc.trace.to_json()}))
        raise
    save_obj(new_obj, f"{prefix}_object.obj")
    if cfg.optimize != "object_pose":
        save_obj(new_hand, f"{prefix}_hand.obj")
    trace_path.write_text(dumps({"params": params, **trace.to_json()}))
    return 0


def cmd_regions(args):
    records = load_manifest(args.manifest)
    pairs = []
    for rec in records:
        hand, obj, _ = _load_record(rec)
        pairs.append((hand, obj))
    regions = extract_contact_regions(pairs, args.vicinity, args.threshold)
    payload = {
        "n_pairs": len(pairs),
        "regions": [r.tolist() for r in regions],
        "params": {"vicinity": args.vicinity, "freq_threshold": args.threshold},
    }
    _emit(payload, args.out)
    return 0


def _sim_params(args):
    return SimParams(
        gravity=args.gravity,
        duration=args.duration,
        dt=args.dt,
        stiffness=args.stiffness,
        damping=args.damping,
        friction=args.friction,
        density=args.density,
    )


def cmd_simulate(args):
    hand = load_obj(args.hand) if args.hand else None
    obj = load_obj(args.object)
    params = _sim_params(args)
    disp, traj = simulate_displacement(hand, obj, params, record=True)
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "z"])
            for row in traj:
                w.writerow([f"{v:.{SIG_DIGITS}g}" for v in row])
    _emit({"sim_displacement_mm": disp, "free_fall": hand is None, "params": params.to_json()}, args.out)
    return 0


def cmd_icosphere(args):
    mesh = icosphere(args.level)
    if args.radius != 1.0:
        mesh = mesh.scaled(args.radius)
    if args.out in (None, "-"):
        sys.stdout.write(obj_text(mesh))
    else:
        save_obj(mesh, args.out)
    return 0


def cmd_chamfer(args):
    a, b = load_obj(args.a), load_obj(args.b)
    pa = sample_surface(a, args.samples, args.seed)
    pb = sample_surface(b, args.samples, args.seed)
    value = chamfer(pa, pb).value
    payload = {"chamfer": value, "chamfer_x1000": value * 1000.0, "params": {"samples": args.samples, "seed": args.seed}}
    _emit(payload, args.out)
    return 0


def cmd_fixture(args):
    """Write a synthetic hand, its annotation and an object to ``--out-dir``.

    ``drop`` writes a bowl as the fixed "hand" and a ball resting in it, with
    no annotation.
    """
    from . import fixtures

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "drop":
        cup, ball = fixtures.resting_drop()
        save_obj(cup, out / "hand.obj")
        save_obj(ball, out / "object.obj")
        return 0
    if args.kind == "cage":
        hand, obj = fixtures.cage_grasp(gap=args.offset)
    else:
        hand, obj = fixtures.flat_grasp(bottom=args.offset)
    save_obj(hand.mesh, out / "hand.obj")
    save_obj(obj, out / "object.obj")
    (out / "annotation.json").write_text(json.dumps(hand.annotation.to_json()) + "\n")
    return 0


# ------------------------------------------------------------------- parser


def _add_sim_flags(p):
    d = SimParams()
    p.add_argument("--gravity", type=float, default=d.gravity)
    p.add_argument("--duration", type=float, default=d.duration)
    p.add_argument("--dt", type=float, default=d.dt)
    p.add_argument("--stiffness", type=float, default=d.stiffness)
    p.add_argument("--damping", type=float, default=d.damping)
    p.add_argument("--friction", type=float, default=d.friction)
    p.add_argument("--density", type=float, default=d.density)


def build_parser():
    parser = argparse.ArgumentParser(prog="hocontact", description="Hand-object contact losses and plausibility metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="penetration, intersection volume, grasp quality")
    p.add_argument("--hand")
    p.add_argument("--object")
    p.add_argument("--annotation")
    p.add_argument("--manifest", help="NDJSON pair manifest for batch mode")
    p.add_argument("--voxel", type=float, default=DEFAULT_VOXEL)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--cone-edges", type=int, default=DEFAULT_CONE_EDGES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--simulate", action="store_true", help="also run the drop test")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_metrics)

    c = ContactParams()
    p = sub.add_parser("refine", help="optimize the grasp under the contact loss")
    p.add_argument("--hand", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--annotation", required=True)
    p.add_argument("--lambda-r", type=float, default=c.lambda_r)
    p.add_argument("--r", type=float, default=c.r)
    p.add_argument("--a", type=float, default=c.a)
    p.add_argument("--steps", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--mode", choices=MODES, default="object_pose")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("regions", help="contact regions from a grasp corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vicinity", type=float, default=DEFAULT_VICINITY)
    p.add_argument("--threshold", type=float, default=DEFAULT_FREQ_THRESHOLD)
    p.add_argument("--out")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("simulate", help="drop the object onto the fixed hand")
    p.add_argument("--hand", help="omit for free fall")
    p.add_argument("--object", required=True)
    p.add_argument("--trajectory", help="CSV of the center-of-mass path")
    p.add_argument("--out")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("icosphere", help="write a unit icosphere")
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_icosphere)

    p = sub.add_parser("chamfer", help="Chamfer distance between surface samples")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--samples", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chamfer)

    p = sub.add_parser("fixture", help="write a synthetic hand, annotation and object")
    p.add_argument("--kind", choices=("cage", "flat", "drop"), default="cage")
    p.add_argument("--offset", type=float, default=0.0, help="cage gap or plate height (m)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DivergenceError, SimulationUnstableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
