import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octacross.mesh import (
    DegenerateFaceError,
    MeshError,
    NonManifoldError,
    NonOrientableError,
    ObjParseError,
    angle_defects,
    build_mesh,
    edge_weights,
    load_obj,
    make_canonical_mesh,
    mesh_stats,
    obj_text,
    parse_canonical,
    parse_obj,
    rotate_mesh,
    write_obj,
)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


def mobius(n=12):
    verts = []
    for i in range(n):
        u = 2 * np.pi * i / n
        for s in (-0.3, 0.3):
            verts.append([(1 + s * np.cos(u / 2)) * np.cos(u),
                          (1 + s * np.cos(u / 2)) * np.sin(u), s * np.sin(u / 2)])
    faces = []
    for i in range(n):
        a, b = 2 * i, 2 * i + 1
        if i < n - 1:
            c, d = 2 * i + 2, 2 * i + 3
        else:
            c, d = 1, 0  # glued with a half twist
        faces += [[a, c, b], [b, c, d]]
    return np.array(verts), np.array(faces)


def test_cube_obj_counts(caplog):
    with caplog.at_level(logging.WARNING):
        m = parse_obj(CUBE_OBJ)
    assert "fan-triangulated" in caplog.text
    assert (m.n_vertices, m.n_faces, m.n_interior_edges, m.euler_characteristic) == (8, 12, 18, 2)
    assert m.is_closed
    # outward normals
    outward = np.einsum("ij,ij->i", m.face_normals, m.barycenters - 0.5)
    assert np.all(outward > 0)


def test_single_triangle():
    m = build_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert m.n_interior_edges == 0
    assert len(m.boundary_edges) == 3
    np.testing.assert_allclose(m.face_normals[0], [0, 0, 1])


def test_square_diagonal_weight():
    m = build_mesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    # |e| = sqrt 2, barycenters (2/3, 1/3) and (1/3, 2/3) are sqrt(2)/3 apart
    assert m.edge_weights[0] == pytest.approx(3.0, rel=1e-14)
    assert edge_weights(m)[0] == pytest.approx(3.0, rel=1e-14)


def test_equilateral_pair_weight():
    h = np.sqrt(3) / 2
    m = build_mesh([[0, 0, 0], [1, 0, 0], [0.5, h, 0], [0.5, -h, 0]], [[0, 1, 2], [1, 0, 3]])
    assert m.edge_weights[0] == pytest.approx(np.sqrt(3), rel=1e-14)


@given(st.floats(1e-3, 1e3))
def test_weights_scale_invariant(lam):
    m = make_canonical_mesh("noisy_cube", sigma=0.1, seed=1, n=2)
    m2 = build_mesh(m.vertices * lam, m.faces)
    np.testing.assert_allclose(m2.edge_weights, m.edge_weights, rtol=1e-10)


@pytest.mark.parametrize("spec", ["cube:3", "noisy_cube:0.1:2", "cylinder3:4", "icosphere:2"])
def test_gauss_bonnet(spec):
    m = parse_canonical(spec)
    assert angle_defects(m).sum() == pytest.approx(2 * np.pi * m.euler_characteristic, abs=1e-8)


@pytest.mark.parametrize("spec", ["cube:2", "wedge", "noisy_cube:0.05:7", "flat_grid:4",
                                  "cylinder3:4", "icosphere:1"])
def test_mesh_invariants(spec):
    m = parse_canonical(spec)
    np.testing.assert_allclose(np.linalg.norm(m.face_normals, axis=1), 1.0, atol=1e-14)
    assert np.all(m.edge_weights > 0)
    # consistent orientation: a -> b is ccw in t1, so t2 must hold b -> a
    for (t1, t2), (a, b) in zip(m.edge_faces, m.edge_verts):
        f1, f2 = list(m.faces[t1]), list(m.faces[t2])
        assert f1[(f1.index(a) + 1) % 3] == b
        assert f2[(f2.index(b) + 1) % 3] == a


def test_canonical_meshes():
    cube = make_canonical_mesh("cube")
    assert cube.euler_characteristic == 2 and cube.n_faces == 12
    w = make_canonical_mesh("wedge", dihedral=np.pi / 2)
    assert w.euler_characteristic == 1
    normals = np.unique(np.round(w.face_normals, 12), axis=0)
    assert len(normals) == 2 and abs(normals[0] @ normals[1]) < 1e-12
    assert make_canonical_mesh("wedge").n_faces == 400
    a = make_canonical_mesh("noisy_cube", sigma=0.05, seed=7)
    b = make_canonical_mesh("noisy_cube", sigma=0.05, seed=7)
    c = make_canonical_mesh("noisy_cube", sigma=0.05, seed=8)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)
    assert make_canonical_mesh("icosphere", level=2).n_faces == 320
    assert make_canonical_mesh("cylinder3", n=8).euler_characteristic == 2


@pytest.mark.parametrize("kind,params", [("cube", {"n": 0}), ("cylinder3", {"n": 3}),
                                         ("noisy_cube", {"sigma": -1}), ("wedge", {"dihedral": 0}),
                                         ("icosphere", {"level": 9}), ("torus", {})])
def test_canonical_bad_params(kind, params):
    with pytest.raises(ValueError):
        make_canonical_mesh(kind, **params)


def test_parse_canonical():
    m = parse_canonical("wedge:2.356")
    assert m.n_faces == 400
    with pytest.raises(ValueError):
        parse_canonical("cube:1:2")


def test_obj_round_trip_byte_idempotent(tmp_path):
    m = make_canonical_mesh("noisy_cube", sigma=0.1, seed=3, n=3)
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    write_obj(m, p1)
    m2 = load_obj(p1)
    write_obj(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(m2.vertices, m.vertices)


def test_obj_extras_ignored():
    text = "v 0 0 0\nv 1 0 0\nvn 0 0 1\nvt 0 0\nv 0 1 0\no thing\nf 1/1/1 2//1 -1\n"
    m = parse_obj(text)
    assert m.n_faces == 1
    np.testing.assert_array_equal(m.faces[0], [0, 1, 2])


@pytest.mark.parametrize("text,lineno", [
    ("v 0 0 0\nv 1 0\n", 2),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", 4),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n", 4),
    ("v 0 0 0\nbogus 1\n", 2),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 0\n", 4),
])
def test_obj_parse_errors(text, lineno):
    with pytest.raises(ObjParseError) as info:
        parse_obj(text)
    assert info.value.lineno == lineno
    assert f"line {lineno}" in str(info.value)


def test_non_manifold_edge():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    with pytest.raises(NonManifoldError) as info:
        build_mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    assert info.value.edges == [(0, 1)]


def test_degenerate_face():
    with pytest.raises(DegenerateFaceError) as info:
        build_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 3], [0, 1, 2]])
    assert info.value.face == 1
    with pytest.raises(DegenerateFaceError):
        build_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])


def test_non_orientable():
    v, f = mobius()
    with pytest.raises(NonOrientableError):
        build_mesh(v, f)


def test_reorientation(caplog):
    m = make_canonical_mesh("cube", n=2)
    faces = m.faces.copy()
    faces[::3] = faces[::3, ::-1]
    with caplog.at_level(logging.WARNING):
        m2 = build_mesh(m.vertices, faces)
    assert "reoriented" in caplog.text
    # orientation is fixed up to a global flip
    agree = np.einsum("ij,ij->i", m2.face_normals, m.face_normals)
    assert np.all(agree > 0.99) or np.all(agree < -0.99)


@pytest.mark.parametrize("v,f", [
    (np.zeros((3, 2)), [[0, 1, 2]]),
    ([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]]),
    ([[0, 0, 0], [1, 0, 0], [0, np.nan, 0]], [[0, 1, 2]]),
    ([[0, 0, 0]], np.zeros((0, 3), dtype=int)),
])
def test_bad_arrays(v, f):
    with pytest.raises(MeshError):
        build_mesh(v, f)


def test_mesh_is_immutable():
    m = make_canonical_mesh("cube")
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0


def test_rotate_mesh_preserves_weights():
    m = make_canonical_mesh("noisy_cube", sigma=0.1, seed=2, n=2)
    c, s = np.cos(0.7), np.sin(0.7)
    r = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    m2 = rotate_mesh(m, r)
    np.testing.assert_allclose(m2.edge_weights, m.edge_weights, rtol=1e-12)
    np.testing.assert_allclose(m2.face_normals, m.face_normals @ r.T, atol=1e-12)


def test_mesh_stats():
    s = mesh_stats(make_canonical_mesh("cube"))
    assert s["n_faces"] == 12 and s["euler_characteristic"] == 2 and s["closed"]


def test_obj_text_format():
    m = make_canonical_mesh("cube")
    assert obj_text(m).splitlines()[0].startswith("v ")
