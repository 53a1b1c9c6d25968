"""Post-solve analysis: crosses over a mesh, singularities, crease alignment."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .mesh import SurfaceMesh, angle_defects
from .sh_algebra import canonical_frame
from .variety import extract_crosses, project_frames

__all__ = [
    "CrossField",
    "SingularityRecord",
    "CreaseReport",
    "extract_field",
    "singularity_indices",
    "index_sum",
    "crease_edges",
    "crease_alignment_score",
    "normal_deviation_experiment",
    "singularities_json",
    "crosses_ply",
]

QUARTER = np.pi / 2


@dataclass(frozen=True)
class CrossField:
    """Per-face crosses; ``degenerate[t]`` marks faces whose scale is below ``min_scale``."""

    normals: np.ndarray
    theta: np.ndarray
    scale: np.ndarray
    dirs: np.ndarray  # (n, 2, 3)
    degenerate: np.ndarray

    def __len__(self) -> int:
        return len(self.theta)


@dataclass(frozen=True)
class SingularityRecord:
    vertex: int
    index: Fraction | None  # None when a face of the one-ring is degenerate

    @property
    def unknown(self) -> bool:
        return self.index is None

    def to_dict(self) -> dict:
        return {
            "vertex": self.vertex,
            "index": None if self.index is None else float(self.index),
            "index_str": "unknown" if self.index is None else str(self.index),
        }


@dataclass(frozen=True)
class CreaseReport:
    edges: np.ndarray  # interior edge ids
    angles: np.ndarray  # radians, in [0, pi/4]
    max_angle: float | None
    mean_angle: float | None

    def to_dict(self) -> dict:
        deg = np.degrees(self.angles)
        return {
            "n_creases": int(len(self.edges)),
            "edges": self.edges.tolist(),
            "angles_deg": deg.tolist(),
            "max_deg": None if self.max_angle is None else float(np.degrees(self.max_angle)),
            "mean_deg": None if self.mean_angle is None else float(np.degrees(self.mean_angle)),
        }


def extract_field(mesh: SurfaceMesh, f, *, min_scale: float = 1e-6) -> CrossField:
    """Crosses of a solved field on every face.

    Faces with tangential scale below ``min_scale`` are flagged, and their
    twist is whatever the arithmetic produced; callers must not read it.
    """
    f = np.asarray(f, dtype=float).reshape(mesh.n_faces, 9)
    theta, scale, dirs = extract_crosses(f, mesh.face_normals)
    return CrossField(mesh.face_normals, theta, scale, dirs, scale < min_scale)


def _wrap_quarter(x):
    """``x - k pi/2`` in (-pi/4, pi/4]; at a tie the smaller k wins."""
    k = np.ceil((x - np.pi / 4) / QUARTER)
    return x - k * QUARTER


def _edge_relative_angles(mesh: SurfaceMesh, crosses: CrossField, faces, edge_vec):
    d = crosses.dirs[faces, 0]
    n = crosses.normals[faces]
    e = edge_vec / np.linalg.norm(edge_vec, axis=1, keepdims=True)
    return np.arctan2(np.einsum("ij,ij->i", n, np.cross(e, d)), np.einsum("ij,ij->i", e, d))


def _matched_rotations(mesh: SurfaceMesh, crosses: CrossField) -> np.ndarray:
    """Matched cross rotation across each interior edge, from t1 to t2.

    The hinge rotation about the shared edge fixes the edge direction, so
    comparing angles measured from that edge in both faces is the transport.
    """
    a, b = mesh.edge_verts[:, 0], mesh.edge_verts[:, 1]
    e = mesh.vertices[b] - mesh.vertices[a]
    psi1 = _edge_relative_angles(mesh, crosses, mesh.edge_faces[:, 0], e)
    psi2 = _edge_relative_angles(mesh, crosses, mesh.edge_faces[:, 1], e)
    return _wrap_quarter(psi2 - psi1)


def singularity_indices(
    mesh: SurfaceMesh, crosses: CrossField, *, include_zero: bool = False
) -> list[SingularityRecord]:
    """Quarter-integer index of the cross field at each interior vertex.

    The index is ``(angle defect + sum of matched rotations) / 2 pi`` taken
    counter-clockwise around the vertex. Each edge's matched rotation is
    computed once and used with opposite signs at its two endpoints, so the
    indices of a closed mesh sum to its Euler characteristic exactly.
    Only nonzero records are returned unless ``include_zero``.
    """
    delta = _matched_rotations(mesh, crosses)
    edge_id = {}
    for k, (t1, t2) in enumerate(mesh.edge_faces):
        edge_id[(int(t1), int(t2))] = (k, 1.0)
        edge_id[(int(t2), int(t1))] = (k, -1.0)
    pair_face = {}
    for k, (a, b) in enumerate(mesh.edge_verts):
        t1, t2 = mesh.edge_faces[k]
        pair_face[(int(a), int(b))] = int(t1)
        pair_face[(int(b), int(a))] = int(t2)

    boundary = np.zeros(mesh.n_vertices, dtype=bool)
    if len(mesh.boundary_edges):
        boundary[mesh.boundary_edges[:, :2].reshape(-1)] = True
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.reshape(-1)] = True

    total = angle_defects(mesh)
    unknown = np.zeros(mesh.n_vertices, dtype=bool)
    for t, face in enumerate(mesh.faces):
        for k in range(3):
            v, c = int(face[k]), int(face[(k + 2) % 3])
            if crosses.degenerate[t]:
                unknown[v] = True
            if boundary[v]:
                continue
            # the ccw-next face around v shares the edge v-c, where c - v
            # directs out of v and is seen as c -> v from this face
            nxt = pair_face[(v, c)]
            eid, sign = edge_id[(t, nxt)]
            total[v] += sign * delta[eid]

    records = []
    for v in np.flatnonzero(used & ~boundary):
        if unknown[v]:
            records.append(SingularityRecord(int(v), None))
            continue
        quarters = int(np.rint(total[v] / QUARTER))
        if quarters or include_zero:
            records.append(SingularityRecord(int(v), Fraction(quarters, 4)))
    return records


def index_sum(records) -> Fraction:
    """Exact sum of the known indices."""
    return sum((r.index for r in records if r.index is not None), Fraction(0))


def crease_edges(mesh: SurfaceMesh, crease_angle_threshold: float = np.pi / 6) -> np.ndarray:
    """Interior edges whose normals differ by more than the threshold."""
    n1 = mesh.face_normals[mesh.edge_faces[:, 0]]
    n2 = mesh.face_normals[mesh.edge_faces[:, 1]]
    ang = np.arctan2(np.linalg.norm(np.cross(n1, n2), axis=1), np.einsum("ij,ij->i", n1, n2))
    return np.flatnonzero(ang > crease_angle_threshold)


def crease_alignment_score(
    mesh: SurfaceMesh, crosses: CrossField, crease_angle_threshold: float = np.pi / 6
) -> CreaseReport:
    """Angle between each crease and the nearest cross direction.

    Per side, the smaller of the two line angles (in [0, pi/4]); an edge
    scores the worse of its two sides.
    """
    ids = crease_edges(mesh, crease_angle_threshold)
    if ids.size == 0:
        return CreaseReport(ids, np.zeros(0), None, None)
    a, b = mesh.edge_verts[ids, 0], mesh.edge_verts[ids, 1]
    e = mesh.vertices[b] - mesh.vertices[a]
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    sides = []
    for col in range(2):
        d = crosses.dirs[mesh.edge_faces[ids, col]]  # (k, 2, 3)
        cos = np.abs(np.einsum("kj,kij->ki", e, d)).clip(0.0, 1.0)
        sides.append(np.arccos(cos).min(axis=1))
    angles = np.maximum(*sides)
    return CreaseReport(ids, angles, float(angles.max()), float(angles.mean()))


def _unit_ball(samples: int, dim: int, rng) -> np.ndarray:
    x = rng.standard_normal((samples, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.random(samples)[:, None] ** (1.0 / dim)


def normal_deviation_experiment(epsilon_grid, samples: int = 10000, seed: int = 0) -> np.ndarray:
    """Worst tilt (degrees) of the nearest frame axis away from z under eps-perturbations.

    Perturbations are uniform in the 7-ball of radius eps on the components
    constrained by z-alignment. One set of unit-ball samples is shared by all
    eps values, which keeps the curve free of independent sampling noise.
    """
    eps = np.asarray(epsilon_grid, dtype=float)
    rng = np.random.default_rng(seed)
    unit = _unit_ball(samples, 7, rng)
    f0 = canonical_frame()
    out = np.zeros(len(eps))
    for k, e in enumerate(eps):
        if e == 0.0:
            continue
        q = np.tile(f0, (samples, 1))
        q[:, 1:8] += e * unit
        _, rot, _, _ = project_frames(q, seed=seed)
        zrow = np.abs(rot.as_matrix()[:, 2, :]).max(axis=1).clip(0.0, 1.0)
        out[k] = np.degrees(np.arccos(zrow).max())
    return out


# --- export -------------------------------------------------------------------


def singularities_json(records) -> str:
    known = [r for r in records if r.index is not None]
    return json.dumps(
        {
            "singularities": [r.to_dict() for r in records],
            "n_unknown": len(records) - len(known),
            "index_sum": float(index_sum(records)),
            "index_sum_str": str(index_sum(records)),
        },
        indent=1,
    )


def _mean_incident_edge_length(mesh: SurfaceMesh) -> np.ndarray:
    p = mesh.vertices[mesh.faces]
    lens = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return lens.mean(axis=1)


def crosses_ply(mesh: SurfaceMesh, crosses: CrossField) -> str:
    """ASCII PLY with two line segments per face, sized by the tangential scale."""
    c = mesh.barycenters
    half = 0.2 * _mean_incident_edge_length(mesh) * crosses.scale
    pts = []
    for j in range(2):
        d = crosses.dirs[:, j] * half[:, None]
        pts.append(c - d)
        pts.append(c + d)
    # vertex order per face: a0, b0, a1, b1
    verts = np.stack(pts, axis=1).reshape(-1, 3)
    n = mesh.n_faces
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(verts)}",
        "property double x",
        "property double y",
        "property double z",
        f"element edge {2 * n}",
        "property int vertex1",
        "property int vertex2",
        "end_header",
    ]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in verts]
    for t in range(n):
        lines.append(f"{4 * t} {4 * t + 1}")
        lines.append(f"{4 * t + 2} {4 * t + 3}")
    return "\n".join(lines) + "\n"
