"""Triangle meshes: OBJ I/O, validation, adjacency and dual-edge weights."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "ObjParseError",
    "NonManifoldError",
    "DegenerateFaceError",
    "NonOrientableError",
    "SurfaceMesh",
    "build_mesh",
    "parse_obj",
    "load_obj",
    "write_obj",
    "obj_text",
    "edge_weights",
    "angle_defects",
    "mesh_stats",
    "make_canonical_mesh",
    "parse_canonical",
    "rotate_mesh",
]

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Base class for mesh validation failures."""


class ObjParseError(MeshError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.strip()!r}")
        self.lineno = lineno


class NonManifoldError(MeshError):
    def __init__(self, edges):
        self.edges = [tuple(int(v) for v in e) for e in edges]
        shown = ", ".join(map(str, self.edges[:10]))
        more = "" if len(self.edges) <= 10 else f" (+{len(self.edges) - 10} more)"
        super().__init__(f"non-manifold edges (more than two faces): {shown}{more}")


class DegenerateFaceError(MeshError):
    def __init__(self, face: int, reason: str = "zero area"):
        super().__init__(f"face {face}: {reason}")
        self.face = face


class NonOrientableError(MeshError):
    pass


@dataclass(frozen=True)
class SurfaceMesh:
    """Validated, consistently oriented triangle mesh.

    ``edge_faces[k] = (t1, t2)`` and ``edge_verts[k] = (a, b)`` describe the
    k-th interior edge, oriented so that a -> b runs counter-clockwise in
    ``t1``. ``boundary_edges[k] = (a, b, t)`` for boundary edges.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray
    edge_faces: np.ndarray
    edge_verts: np.ndarray
    edge_weights: np.ndarray
    boundary_edges: np.ndarray
    euler_characteristic: int
    name: str = field(default="mesh", compare=False)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_interior_edges(self) -> int:
        return len(self.edge_faces)

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    @property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def interior_edges(self):
        """List of ``(t1, t2, (a, b), w_e)`` tuples."""
        return [
            (int(t[0]), int(t[1]), (int(e[0]), int(e[1])), float(w))
            for t, e, w in zip(self.edge_faces, self.edge_verts, self.edge_weights)
        ]


def _halfedges(faces: np.ndarray) -> np.ndarray:
    """Rows (a, b, face) for every directed face edge."""
    nf = len(faces)
    a = faces.reshape(-1)
    b = np.roll(faces, -1, axis=1).reshape(-1)
    t = np.repeat(np.arange(nf), 3)
    return np.stack([a, b, t], axis=1)


def _orient(faces: np.ndarray) -> np.ndarray:
    """Flip faces so every interior edge is traversed in opposite directions."""
    he = _halfedges(faces)
    key = np.sort(he[:, :2], axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    ks = key[order]
    same = np.all(ks[1:] == ks[:-1], axis=1)
    i0 = order[:-1][same]
    i1 = order[1:][same]
    t1, t2 = he[i0, 2], he[i1, 2]
    # parity 1 when both faces traverse the edge the same way
    parity = (he[i0, 0] == he[i1, 0]).astype(int)
    if not parity.any():
        return faces

    nf = len(faces)
    adj = [[] for _ in range(nf)]
    for x, y, p in zip(t1, t2, parity):
        adj[x].append((y, p))
        adj[y].append((x, p))
    flip = -np.ones(nf, dtype=int)
    for seed in range(nf):
        if flip[seed] >= 0:
            continue
        flip[seed] = 0
        queue = deque([seed])
        while queue:
            x = queue.popleft()
            for y, p in adj[x]:
                want = flip[x] ^ p
                if flip[y] < 0:
                    flip[y] = want
                    queue.append(y)
                elif flip[y] != want:
                    raise NonOrientableError(
                        f"mesh is not orientable (conflict between faces {x} and {y})"
                    )
    log.warning("reoriented %d faces for consistent orientation", int(flip.sum()))
    out = faces.copy()
    out[flip == 1] = out[flip == 1][:, ::-1]
    return out


def edge_weights(mesh_or_vertices, faces=None, edge_faces=None, edge_verts=None) -> np.ndarray:
    """Dual-edge weights ``|e| / |barycenter(t1) - barycenter(t2)|``."""
    if isinstance(mesh_or_vertices, SurfaceMesh):
        m = mesh_or_vertices
        vertices, faces, edge_faces, edge_verts = m.vertices, m.faces, m.edge_faces, m.edge_verts
    else:
        vertices = mesh_or_vertices
    if len(edge_faces) == 0:
        return np.zeros(0)
    bary = vertices[faces].mean(axis=1)
    elen = np.linalg.norm(vertices[edge_verts[:, 0]] - vertices[edge_verts[:, 1]], axis=1)
    dual = np.linalg.norm(bary[edge_faces[:, 0]] - bary[edge_faces[:, 1]], axis=1)
    bad = np.flatnonzero(dual <= 1e-14 * np.maximum(elen, 1e-300))
    if bad.size:
        raise MeshError(f"coincident barycenters across interior edges {bad[:10].tolist()}")
    return elen / dual


def build_mesh(vertices, faces, *, name: str = "mesh") -> SurfaceMesh:
    """Validate raw arrays and compute normals, adjacency and weights."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError("vertices must have shape (n, 3)")
    if len(faces) == 0:
        raise MeshError("mesh has no faces")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshError("faces must have shape (n, 3)")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshError("face index out of range")
    if not np.isfinite(vertices).all():
        raise MeshError("non-finite vertex coordinates")
    repeated = np.flatnonzero(
        (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    )
    if repeated.size:
        raise DegenerateFaceError(int(repeated[0]), "repeated vertex")

    he = _halfedges(faces)
    key = np.sort(he[:, :2], axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if (counts > 2).any():
        raise NonManifoldError(uniq[counts > 2])

    faces = _orient(faces)
    he = _halfedges(faces)

    p = vertices[faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    dbl_area = np.linalg.norm(cross, axis=1)
    scale = max(np.ptp(vertices, axis=0).max(), 1e-300)
    tiny = np.flatnonzero(dbl_area <= 1e-14 * scale**2)
    if tiny.size:
        raise DegenerateFaceError(int(tiny[0]))
    normals = cross / dbl_area[:, None]

    order = np.argsort(inverse, kind="stable")
    grouped = inverse[order]
    starts = np.flatnonzero(np.r_[True, grouped[1:] != grouped[:-1]])
    sizes = np.diff(np.r_[starts, len(order)])
    first = order[starts]
    inner = sizes == 2
    h1 = first[inner]
    h2 = order[starts[inner] + 1]
    edge_faces = np.stack([he[h1, 2], he[h2, 2]], axis=1)
    edge_verts = he[h1, :2]
    hb = first[sizes == 1]
    boundary = he[hb][:, [0, 1, 2]]

    used = np.unique(faces)
    chi = len(used) - len(uniq) + len(faces)
    weights = edge_weights(vertices, faces, edge_faces, edge_verts)
    for arr in (vertices, faces, normals, edge_faces, edge_verts, weights, boundary):
        arr.setflags(write=False)
    area = 0.5 * dbl_area
    area.setflags(write=False)
    return SurfaceMesh(
        vertices=vertices,
        faces=faces,
        face_normals=normals,
        face_areas=area,
        edge_faces=edge_faces,
        edge_verts=edge_verts,
        edge_weights=weights,
        boundary_edges=boundary,
        euler_characteristic=int(chi),
        name=name,
    )


# --- OBJ --------------------------------------------------------------------


def parse_obj(text: str, *, name: str = "mesh") -> SurfaceMesh:
    """Parse ASCII OBJ text. Only ``v`` and ``f`` records are used.

    Polygons are fan-triangulated. Texture/normal indices (``f 1/2/3``) and
    negative (relative) indices are accepted; file normals are ignored.
    """
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    fanned = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError(lineno, line, "vertex needs three coordinates")
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ObjParseError(lineno, line, "bad vertex coordinate") from None
        elif tag == "f":
            if len(parts) < 4:
                raise ObjParseError(lineno, line, "face needs at least three vertices")
            idx = []
            for tok in parts[1:]:
                try:
                    k = int(tok.split("/")[0])
                except ValueError:
                    raise ObjParseError(lineno, line, "bad face index") from None
                if k == 0:
                    raise ObjParseError(lineno, line, "face index 0 is invalid")
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise ObjParseError(lineno, line, "face index out of range")
                idx.append(k)
            if len(idx) > 3:
                fanned += 1
            for i in range(1, len(idx) - 1):
                tris.append([idx[0], idx[i], idx[i + 1]])
        elif tag in {"vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"}:
            continue
        else:
            raise ObjParseError(lineno, line, f"unknown record {tag!r}")
    if fanned:
        log.warning("fan-triangulated %d polygon faces", fanned)
    if not tris:
        raise MeshError("OBJ contains no faces")
    return build_mesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(tris), name=name)


def load_obj(path) -> SurfaceMesh:
    path = Path(path)
    return parse_obj(path.read_text(encoding="utf-8"), name=path.stem)


def obj_text(mesh: SurfaceMesh) -> str:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


def write_obj(mesh: SurfaceMesh, path) -> None:
    Path(path).write_text(obj_text(mesh), encoding="utf-8")


# --- geometry summaries -----------------------------------------------------


def angle_defects(mesh: SurfaceMesh) -> np.ndarray:
    """2 pi minus the incident corner-angle sum, per vertex."""
    p = mesh.vertices[mesh.faces]
    total = np.zeros(mesh.n_vertices)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        ang = np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), np.einsum("ij,ij->i", u, v))
        np.add.at(total, mesh.faces[:, k], ang)
    return 2 * np.pi - total


def mesh_stats(mesh: SurfaceMesh) -> dict:
    elen = np.linalg.norm(
        mesh.vertices[mesh.edge_verts[:, 0]] - mesh.vertices[mesh.edge_verts[:, 1]], axis=1
    )
    return {
        "name": mesh.name,
        "n_vertices": mesh.n_vertices,
        "n_faces": mesh.n_faces,
        "n_interior_edges": mesh.n_interior_edges,
        "n_boundary_edges": int(len(mesh.boundary_edges)),
        "euler_characteristic": mesh.euler_characteristic,
        "closed": mesh.is_closed,
        "total_area": float(mesh.face_areas.sum()),
        "mean_interior_edge_length": float(elen.mean()) if elen.size else 0.0,
        "min_edge_weight": float(mesh.edge_weights.min()) if elen.size else None,
        "max_edge_weight": float(mesh.edge_weights.max()) if elen.size else None,
    }


def rotate_mesh(mesh: SurfaceMesh, rotation: np.ndarray) -> SurfaceMesh:
    return build_mesh(mesh.vertices @ np.asarray(rotation).T, mesh.faces, name=mesh.name)


# --- procedural meshes --------------------------------------------------------


class _Welder:
    def __init__(self):
        self.index: dict = {}
        self.points: list = []

    def __call__(self, key, point) -> int:
        i = self.index.get(key)
        if i is None:
            i = self.index[key] = len(self.points)
            self.points.append(point)
        return i


def _grid_tris(ids: np.ndarray, union_jack: bool) -> list:
    """Triangulate an (n+1) x (n+1) grid of vertex ids, CCW in (i, j)."""
    n = ids.shape[0] - 1
    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            # union jack: diagonals of every quadrant point at the grid centre
            flip = union_jack and ((i < n / 2) != (j < n / 2))
            if flip:
                tris += [[a, b, d], [b, c, d]]
            else:
                tris += [[a, b, c], [a, c, d]]
    return tris


def _cube_arrays(n: int, union_jack: bool = False):
    weld = _Welder()
    tris = []
    for axis in range(3):
        for sign in (-1, 1):
            u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
            if sign < 0:
                u_ax, v_ax = v_ax, u_ax
            ids = np.zeros((n + 1, n + 1), dtype=int)
            for i in range(n + 1):
                for j in range(n + 1):
                    key = [0, 0, 0]
                    key[axis] = n if sign > 0 else 0
                    key[u_ax] = i
                    key[v_ax] = j
                    key = tuple(key)
                    ids[i, j] = weld(key, np.array(key, dtype=float) / n - 0.5)
            tris += _grid_tris(ids, union_jack)
    return np.array(weld.points), np.array(tris)


def _icosphere(level: int):
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return np.array(verts), np.array(faces)


def make_canonical_mesh(kind: str, **params) -> SurfaceMesh:
    """Deterministic procedural meshes.

    kinds and parameters:

    - ``cube``: ``n`` subdivisions per side (default 1, i.e. 12 triangles)
    - ``wedge``: ``dihedral`` interior angle between two strips meeting at
      a straight crease along x (default 3 pi / 4), ``n`` grid cells per
      strip side (default 10, 400 faces)
    - ``noisy_cube``: ``sigma`` Gaussian vertex jitter in units of the grid
      spacing, ``seed``, ``n`` (default 6)
    - ``flat_grid``: ``n`` cells per side of the unit square
    - ``cylinder3``: intersection of three orthogonal unit cylinders, ``n``
      (even) cells per cube-face side of the radially projected cube
    - ``icosphere``: ``level`` subdivisions of the icosahedron
    """
    if kind == "cube":
        n = int(params.get("n", 1))
        if n < 1:
            raise ValueError("cube needs n >= 1")
        v, f = _cube_arrays(n)
        return build_mesh(v, f, name=f"cube{n}")

    if kind == "noisy_cube":
        sigma = float(params.get("sigma", 0.05))
        seed = int(params.get("seed", 0))
        n = int(params.get("n", 6))
        if sigma < 0 or sigma >= 0.5 or n < 1:
            raise ValueError("noisy_cube needs 0 <= sigma < 0.5 and n >= 1")
        v, f = _cube_arrays(n)
        rng = np.random.default_rng(seed)
        v = v + rng.normal(scale=sigma / n, size=v.shape)
        return build_mesh(v, f, name=f"noisy_cube{n}_s{sigma:g}_r{seed}")

    if kind == "wedge":
        dihedral = float(params.get("dihedral", 3 * np.pi / 4))
        n = int(params.get("n", 10))
        if not 0.05 < dihedral <= np.pi or n < 1:
            raise ValueError("wedge needs 0.05 < dihedral <= pi and n >= 1")
        weld = _Welder()
        dir_b = np.array([0.0, np.cos(dihedral), np.sin(dihedral)])
        ids_a = np.zeros((n + 1, n + 1), dtype=int)
        ids_b = np.zeros((n + 1, n + 1), dtype=int)
        for i in range(n + 1):
            for j in range(n + 1):
                x = i / n
                ids_a[i, j] = weld(("a", i, j) if j else ("c", i), np.array([x, j / n, 0.0]))
                ids_b[i, j] = weld(("b", i, j) if j else ("c", i), np.array([x, 0, 0]) + dir_b * j / n)
        tris = _grid_tris(ids_a, False)
        tris += [t[::-1] for t in _grid_tris(ids_b, False)]
        return build_mesh(np.array(weld.points), np.array(tris), name=f"wedge{dihedral:.4g}")

    if kind == "flat_grid":
        n = int(params.get("n", 8))
        if n < 1:
            raise ValueError("flat_grid needs n >= 1")
        ids = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        v = np.stack([ii.ravel() / n, jj.ravel() / n, np.zeros(ids.size)], axis=1)
        return build_mesh(v, np.array(_grid_tris(ids, False)), name=f"flat_grid{n}")

    if kind == "cylinder3":
        n = int(params.get("n", 8))
        if n < 2 or n % 2:
            raise ValueError("cylinder3 needs an even n >= 2")
        v, f = _cube_arrays(n, union_jack=True)
        d = v / np.linalg.norm(v, axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            t = np.min(
                [1.0 / np.hypot(d[:, 0], d[:, 1]), 1.0 / np.hypot(d[:, 1], d[:, 2]),
                 1.0 / np.hypot(d[:, 0], d[:, 2])],
                axis=0,
            )
        return build_mesh(d * t[:, None], f, name=f"cylinder3_{n}")

    if kind == "icosphere":
        level = int(params.get("level", 2))
        if not 0 <= level <= 6:
            raise ValueError("icosphere needs 0 <= level <= 6")
        v, f = _icosphere(level)
        return build_mesh(v, f, name=f"icosphere{level}")

    raise ValueError(f"unknown canonical mesh {kind!r}")


_POSITIONAL = {
    "cube": ["n"],
    "noisy_cube": ["sigma", "seed", "n"],
    "wedge": ["dihedral", "n"],
    "flat_grid": ["n"],
    "cylinder3": ["n"],
    "icosphere": ["level"],
}


def parse_canonical(spec: str) -> SurfaceMesh:
    """Build a canonical mesh from ``NAME[:p1[:p2...]]``, e.g. ``wedge:2.356``."""
    name, *args = spec.split(":")
    if name not in _POSITIONAL:
        raise ValueError(f"unknown canonical mesh {name!r}")
    keys = _POSITIONAL[name]
    if len(args) > len(keys):
        raise ValueError(f"{name} takes at most {len(keys)} parameters")
    return make_canonical_mesh(name, **dict(zip(keys, (float(a) for a in args))))
