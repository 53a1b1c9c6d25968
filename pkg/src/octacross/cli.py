"""Command-line driver: solve, verify, bench and mesh statistics.

Exit codes: 0 success, 1 usage, 2 non-convergence or solver failure,
3 I/O, 4 mesh validation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__
from .analysis import (
    crease_alignment_score,
    crosses_ply,
    extract_field,
    singularities_json,
    singularity_indices,
)
from .config import PRESETS, SolveConfig, parse_p
from .energy import AssemblyError, assemble
from .identities import format_results, run_identity_suite
from .mesh import MeshError, load_obj, mesh_stats, parse_canonical
from .serialize import FIELD_VERSION, dumps, field_document
from .sh_algebra import axis_angle_to
from .solver import SolverError, solve, solve_with_degeneracy_loop
from .variety import reconstruct

__all__ = ["main", "build_parser", "load_constraints"]

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_IO, EXIT_MESH = 0, 1, 2, 3, 4

log = logging.getLogger("octacross")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _p_value(text: str) -> float:
    key = text.strip().lower()
    if key in PRESETS:
        return PRESETS[key]
    try:
        return parse_p(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_mesh_args(sp, required=True):
    g = sp.add_mutually_exclusive_group(required=required)
    g.add_argument("--mesh", help="triangle mesh in OBJ format")
    g.add_argument("--canonical", metavar="NAME[:params]",
                   help="procedural mesh, e.g. cube:4 or wedge:2.356")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="octacross", description="Normal-aligned octahedral frame fields.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve for a frame field and write reports")
    _add_mesh_args(s)
    s.add_argument("--p", type=_p_value, default=2.0,
                   help="energy exponent: number >= 1, inf, or preset tv|dirichlet|max")
    s.add_argument("--eps", type=float, default=0.0, help="normal-alignment slack")
    s.add_argument("--tol", type=float, default=1e-6, help="ADMM residual tolerance")
    s.add_argument("--max-iter", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=["auto", "direct", "conic"], default="auto")
    s.add_argument("--resolve-rounds", type=int, default=1)
    s.add_argument("--constraints", help="JSON list of {face, frame | direction}")
    s.add_argument("--time-budget", type=float, default=None,
                   help="seconds; recorded in the manifest and checked after solving")
    s.add_argument("--out", default="out", help="output directory")

    v = sub.add_parser("verify", help="run the closed-form identity suite")
    v.add_argument("--grid", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="time assembly and solve over a list of meshes")
    b.add_argument("meshes", nargs="*", help="canonical specs or OBJ paths")
    b.add_argument("--cube-series", action="store_true",
                   help="append cube refinements from 12 to 12288 faces")
    b.add_argument("--p", type=_p_value, default=2.0)
    b.add_argument("--eps", type=float, default=0.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="-", help="CSV path, - for stdout")

    m = sub.add_parser("mesh-stats", help="print mesh statistics as JSON")
    _add_mesh_args(m)
    return parser


def _load_mesh(args):
    if args.mesh:
        return load_obj(Path(args.mesh).resolve())
    try:
        return parse_canonical(args.canonical)
    except ValueError as exc:
        if isinstance(exc, MeshError):
            raise
        raise UsageError(str(exc)) from exc


def load_constraints(path, mesh) -> dict:
    """Read a constraint file into ``{face: frame}``.

    A ``direction`` entry becomes the face-aligned frame whose cross contains
    the direction's tangential projection.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            items = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"constraint file is not valid JSON: {exc}") from exc
    if not isinstance(items, list):
        raise UsageError("constraint file must hold a JSON array")
    out = {}
    for k, item in enumerate(items):
        try:
            face = int(item["face"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"constraint {k}: missing integer 'face'") from exc
        if not 0 <= face < mesh.n_faces:
            raise UsageError(f"constraint {k}: face {face} out of range")
        if ("frame" in item) == ("direction" in item):
            raise UsageError(f"constraint {k}: give exactly one of 'frame' or 'direction'")
        if "frame" in item:
            frame = np.asarray(item["frame"], dtype=float)
            if frame.shape != (9,):
                raise UsageError(f"constraint {k}: frame needs 9 values")
        else:
            d = np.asarray(item["direction"], dtype=float)
            if d.shape != (3,):
                raise UsageError(f"constraint {k}: direction needs 3 values")
            n = mesh.face_normals[face]
            d = d - (d @ n) * n
            if np.linalg.norm(d) < 1e-12:
                raise UsageError(f"constraint {k}: direction is parallel to the face normal")
            r = Rotation.from_rotvec(axis_angle_to(n)).as_matrix()
            theta = np.mod(np.arctan2(d @ r[:, 1], d @ r[:, 0]), np.pi / 2)
            frame = reconstruct(n, theta)
        out[face] = frame
    return out


def cmd_solve(args) -> int:
    if not 0.0 <= args.eps < math.sqrt(7.0 / 12.0):
        raise UsageError(f"--eps must lie in [0, sqrt(7/12) ~ 0.7638), got {args.eps}")
    try:
        config = SolveConfig(
            p=args.p, epsilon=args.eps, tol_primal=args.tol, tol_dual=args.tol,
            max_iter=args.max_iter, seed=args.seed, resolve_rounds=args.resolve_rounds,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out).resolve()
    mesh_path = str(Path(args.mesh).resolve()) if args.mesh else None
    constraints_path = str(Path(args.constraints).resolve()) if args.constraints else None
    manifest = {
        "input": mesh_path or f"canonical:{args.canonical}",
        "constraints": constraints_path,
        "config": config.to_dict(),
        "method": args.method,
        "output_dir": str(out),
        "formats": {"field": FIELD_VERSION, "report": "1.0", "singularities": "1.0"},
        "time_budget": args.time_budget,
    }

    mesh = _load_mesh(args)
    prescribed = load_constraints(constraints_path, mesh) if constraints_path else None
    try:
        problem = assemble(mesh, config, prescribed)
    except AssemblyError as exc:
        raise UsageError(str(exc)) from exc

    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(dumps(manifest))
    f, report = solve_with_degeneracy_loop(problem, config, method=args.method)
    crosses = extract_field(mesh, f)
    records = singularity_indices(mesh, crosses)
    alignment = crease_alignment_score(mesh, crosses)

    (out / "field.json").write_text(dumps(field_document(f, crosses, mesh_name=mesh.name)))
    rep = report.to_dict()
    rep["p"] = "inf" if math.isinf(problem.p) else problem.p
    rep["epsilon"] = problem.epsilon
    rep["n_faces"] = mesh.n_faces
    (out / "report.json").write_text(dumps(rep))
    (out / "singularities.json").write_text(singularities_json(records))
    (out / "alignment.json").write_text(dumps(alignment.to_dict()))
    (out / "crosses.ply").write_text(crosses_ply(mesh, crosses))

    print(f"objective {report.objective:.17g}  method {report.method}  "
          f"iterations {report.iterations}  time {report.wall_time:.3f}s")
    if alignment.max_angle is not None:
        print(f"crease alignment max {math.degrees(alignment.max_angle):.4f} deg")
    if args.time_budget is not None and report.wall_time > args.time_budget:
        log.warning("solve took %.3fs, over the %.3fs budget", report.wall_time, args.time_budget)
    if not report.converged:
        print("solver did not converge; best iterate written", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_verify(args, generators=None) -> int:
    results = run_identity_suite(args.grid, seed=args.seed, generators=generators)
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NOCONV


BENCH_FIELDS = ["mesh", "n_faces", "assemble_time", "solve_time", "p", "epsilon", "method",
                "iterations"]


def run_bench(specs, config: SolveConfig) -> list[dict]:
    rows = []
    for spec in specs:
        mesh = load_obj(spec) if spec.lower().endswith(".obj") else parse_canonical(spec)
        t0 = time.perf_counter()
        problem = assemble(mesh, config)
        t1 = time.perf_counter()
        _, rep = solve(problem, config)
        t2 = time.perf_counter()
        rows.append({
            "mesh": spec, "n_faces": mesh.n_faces, "assemble_time": t1 - t0,
            "solve_time": t2 - t1, "p": "inf" if math.isinf(config.p) else config.p,
            "epsilon": config.epsilon, "method": rep.method, "iterations": rep.iterations,
        })
    return rows


def cmd_bench(args) -> int:
    specs = list(args.meshes)
    if args.cube_series:
        specs += [f"cube:{n}" for n in (1, 2, 4, 8, 16, 32)]
    try:
        config = SolveConfig(p=args.p, epsilon=args.eps, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = run_bench(specs, config)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: f"{v:.17g}" if isinstance(v, float) else v for k, v in row.items()})
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


def cmd_mesh_stats(args) -> int:
    sys.stdout.write(dumps(mesh_stats(_load_mesh(args))))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench,
                   "mesh-stats": cmd_mesh_stats}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
