import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from octacross.analysis import (
    _wrap_quarter,
    crease_alignment_score,
    crease_edges,
    crosses_ply,
    extract_field,
    index_sum,
    normal_deviation_experiment,
    singularities_json,
    singularity_indices,
)
from octacross.config import SolveConfig
from octacross.energy import assemble
from octacross.mesh import build_mesh, make_canonical_mesh, rotate_mesh
from octacross.sh_algebra import exp_rotation, twist_z
from octacross.solver import solve, solve_direct_p2
from octacross.variety import reconstruct


@pytest.fixture(scope="module")
def cube_field(cube):
    f, _ = solve_direct_p2(assemble(cube))
    return f


def random_aligned_field(mesh, seed):
    rng = np.random.default_rng(seed)
    return reconstruct(mesh.face_normals, rng.uniform(0, np.pi / 2, mesh.n_faces))


def test_extract_cube_axis_aligned(cube, cube_field):
    cf = extract_field(cube, cube_field)
    assert not cf.degenerate.any()
    np.testing.assert_allclose(cf.scale, 1.0, atol=1e-8)
    ang = np.degrees(np.arccos(np.clip(np.abs(cf.dirs).max(axis=2), 0, 1)))
    assert ang.max() < 0.5


def test_extract_prescribed_exact(cube):
    theta = np.linspace(0.05, 1.4, 12) % (np.pi / 2)
    frames = reconstruct(cube.face_normals, theta)
    cf = extract_field(cube, frames)
    np.testing.assert_allclose(cf.theta, theta, atol=1e-12)
    np.testing.assert_allclose(reconstruct(cube.face_normals, cf.theta, cf.scale), frames, atol=1e-12)


def test_extract_constant_flat():
    m = make_canonical_mesh("flat_grid", n=4)
    cf = extract_field(m, np.tile(twist_z(0.7), (m.n_faces, 1)))
    assert np.ptp(cf.theta) < 1e-14


def test_extract_flags_degenerate(cube, cube_field):
    f = cube_field.copy()
    f[3] = reconstruct(cube.face_normals[3], 0.0, 0.0)
    cf = extract_field(cube, f)
    assert cf.degenerate.tolist() == [t == 3 for t in range(12)]


def test_wrap_quarter_ties():
    q = np.pi / 2
    assert _wrap_quarter(np.pi / 4) == pytest.approx(np.pi / 4)
    assert _wrap_quarter(-np.pi / 4) == pytest.approx(np.pi / 4)
    x = np.linspace(-7, 7, 1001)
    w = _wrap_quarter(x)
    assert np.all(w > -np.pi / 4 - 1e-15) and np.all(w <= np.pi / 4 + 1e-15)
    k = (x - w) / q
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)


def test_flat_constant_no_singularities():
    m = make_canonical_mesh("flat_grid", n=5)
    cf = extract_field(m, np.tile(twist_z(0.2), (m.n_faces, 1)))
    assert singularity_indices(m, cf) == []
    assert all(r.index == 0 for r in singularity_indices(m, cf, include_zero=True))


def test_cube_corners(cube, cube_field):
    recs = singularity_indices(cube, extract_field(cube, cube_field))
    assert len(recs) == 8
    assert all(r.index == Fraction(1, 4) for r in recs)
    assert index_sum(recs) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["icosphere:1", "cube:2", "cylinder3:2",
                                                    "noisy_cube:0.2:3:2"]))
def test_poincare_hopf_any_field(seed, spec):
    from octacross.mesh import parse_canonical

    m = parse_canonical(spec)
    cf = extract_field(m, random_aligned_field(m, seed))
    recs = singularity_indices(m, cf)
    assert index_sum(recs) == m.euler_characteristic
    assert all(r.index.denominator in (1, 2, 4) for r in recs)


def test_indices_rotation_invariant():
    m = make_canonical_mesh("icosphere", level=1)
    f = random_aligned_field(m, 4)
    rot = Rotation.from_rotvec([0.4, 0.9, -0.3])
    m2 = rotate_mesh(m, rot.as_matrix())
    f2 = f @ exp_rotation(rot.as_rotvec()).T
    a = singularity_indices(m, extract_field(m, f))
    b = singularity_indices(m2, extract_field(m2, f2))
    assert [(r.vertex, r.index) for r in a] == [(r.vertex, r.index) for r in b]


def test_degenerate_face_marks_unknown(cube, cube_field):
    f = cube_field.copy()
    f[0] = reconstruct(cube.face_normals[0], 0.0, 0.0)
    recs = singularity_indices(cube, extract_field(cube, f))
    unknown = sorted(r.vertex for r in recs if r.unknown)
    assert unknown == sorted(cube.faces[0].tolist())
    doc = json.loads(singularities_json(recs))
    assert doc["n_unknown"] == 3


def test_boundary_vertices_skipped():
    m = make_canonical_mesh("wedge", n=3)
    cf = extract_field(m, random_aligned_field(m, 1))
    boundary = set(m.boundary_edges[:, :2].reshape(-1).tolist())
    recs = singularity_indices(m, cf, include_zero=True)
    assert not boundary & {r.vertex for r in recs}


def test_crease_scores(cube, cube_field, wedge):
    rep = crease_alignment_score(cube, extract_field(cube, cube_field))
    assert len(rep.edges) == 12
    assert np.degrees(rep.max_angle) <= 0.5
    f, _ = solve(assemble(wedge))
    rep = crease_alignment_score(wedge, extract_field(wedge, f))
    assert np.degrees(rep.max_angle) <= 2.0
    assert rep.to_dict()["n_creases"] == 10


def test_crease_none_on_flat():
    m = make_canonical_mesh("flat_grid", n=3)
    rep = crease_alignment_score(m, extract_field(m, np.tile(twist_z(0.0), (m.n_faces, 1))))
    assert len(rep.edges) == 0 and rep.max_angle is None
    assert rep.to_dict()["max_deg"] is None


def test_crease_threshold():
    m = make_canonical_mesh("wedge", dihedral=np.pi - 0.4, n=2)
    assert len(crease_edges(m)) == 0
    assert len(crease_edges(m, 0.3)) == 2


def test_crease_misaligned_value():
    m = make_canonical_mesh("wedge", dihedral=np.pi / 2, n=2)
    cf = extract_field(m, reconstruct(m.face_normals, np.full(m.n_faces, 0.3)))
    rep = crease_alignment_score(m, cf)
    np.testing.assert_allclose(rep.angles, 0.3, atol=1e-12)


@given(st.floats(1e-2, 1e2))
@settings(max_examples=10, deadline=None)
def test_crease_score_scale_invariant(lam):
    m = make_canonical_mesh("wedge", n=3)
    f = random_aligned_field(m, 2)
    a = crease_alignment_score(m, extract_field(m, f))
    m2 = build_mesh(m.vertices * lam, m.faces)
    b = crease_alignment_score(m2, extract_field(m2, f))
    np.testing.assert_allclose(a.angles, b.angles, atol=1e-12)


def test_deviation_experiment():
    eps = np.arange(0, 0.71, 0.1)
    dev = normal_deviation_experiment(eps, samples=300, seed=1)
    assert dev[0] == 0.0
    assert np.all(np.diff(dev) >= 0)
    again = normal_deviation_experiment(eps, samples=300, seed=1)
    np.testing.assert_array_equal(dev, again)


def test_crosses_ply(cube, cube_field):
    text = crosses_ply(cube, extract_field(cube, cube_field))
    lines = text.splitlines()
    assert lines[0] == "ply"
    assert "element vertex 48" in lines and "element edge 24" in lines
    body = lines[lines.index("end_header") + 1:]
    pts = np.array([list(map(float, s.split())) for s in body[:48]])
    seg = np.linalg.norm(pts[0::2] - pts[1::2], axis=1)
    # cube faces: legs 1 and hypotenuse sqrt 2
    np.testing.assert_allclose(seg, 0.4 * (2 + np.sqrt(2)) / 3, rtol=1e-8)
    assert body[48] == "0 1"
