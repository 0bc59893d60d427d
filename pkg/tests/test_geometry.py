import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_triangles, single_triangle_mesh
from nagumofem.geometry import (
    DegenerateElementError,
    DiffusionField,
    InvalidFieldError,
    InvalidMetricError,
    d_acute,
    dihedral_cosines,
    element_geometry,
    offdiag_couplings,
    size_factor,
)
from nagumofem.mesh import Mesh, MeshVariant, StructuredMeshKind, generate_structured_mesh

EX2 = 0.25 * np.array([[203, 199 * math.sqrt(3)], [199 * math.sqrt(3), 601]])


def gen(variant, n, rect=(-100, 100, -100, 100)):
    return generate_structured_mesh(StructuredMeshKind(variant, n, n, rect))


def triangle_angles(x):
    """Interior angle at each vertex from the law of cosines."""
    a = np.linalg.norm(x[1] - x[2])
    b = np.linalg.norm(x[0] - x[2])
    c = np.linalg.norm(x[0] - x[1])
    A = math.acos((b * b + c * c - a * a) / (2 * b * c))
    B = math.acos((a * a + c * c - b * b) / (2 * a * c))
    return np.array([A, B, math.pi - A - B])


def test_q_vector_identities():
    rng = np.random.default_rng(3)
    for x in random_triangles(rng, 200):
        g = element_geometry(single_triangle_mesh(x), 0)
        # sum (x_i - x_0) q_i^T = I and the q-vectors sum to zero
        S = sum(np.outer(x[i] - x[0], g.q[i]) for i in (1, 2))
        np.testing.assert_allclose(S, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(g.q.sum(axis=0), 0, atol=1e-12)
        for i in range(3):
            j, k = [m for m in range(3) if m != i]
            # q_i is normal to the opposite side and points towards vertex i
            assert abs(g.q[i] @ (x[j] - x[k])) <= 1e-12 * np.linalg.norm(g.q[i]) * np.linalg.norm(x[j] - x[k])
            assert g.q[i] @ (x[i] - x[j]) == pytest.approx(1.0, rel=1e-12)
            # |q_i| = 1 / height_i with height = 2|K| / |opposite side|
            e1, e2 = x[1] - x[0], x[2] - x[0]
            area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
            h = 2 * area / np.linalg.norm(x[j] - x[k])
            assert g.heights[i] == pytest.approx(h, rel=1e-10)
            assert g.volume == pytest.approx(area, rel=1e-12)


def test_dihedral_cosines_are_interior_angles_in_2d():
    rng = np.random.default_rng(5)
    for x in random_triangles(rng, 100):
        g = element_geometry(single_triangle_mesh(x), 0)
        cos = dihedral_cosines(g)
        ang = triangle_angles(x)
        for i in range(3):
            for j in range(3):
                if i != j:
                    k = 3 - i - j
                    # faces opposite i and j meet at vertex k
                    assert cos[i, j] == pytest.approx(math.cos(ang[k]), abs=1e-10)


def test_metric_dihedral_cosines_match_mapped_triangle():
    rng = np.random.default_rng(7)
    D = np.array([[3.0, 1.0], [1.0, 2.0]])
    w, V = np.linalg.eigh(D)
    Dmh = V @ np.diag(w ** -0.5) @ V.T
    for x in random_triangles(rng, 50):
        g = element_geometry(single_triangle_mesh(x), 0)
        cos = dihedral_cosines(g, D)
        y = x @ Dmh.T
        ang = triangle_angles(y)
        assert cos[1, 2] == pytest.approx(math.cos(ang[0]), abs=1e-10)
        assert cos[0, 1] == pytest.approx(math.cos(ang[2]), abs=1e-10)


def test_invalid_metric():
    g = element_geometry(single_triangle_mesh([[0, 0], [1, 0], [0, 1]]), 0)
    with pytest.raises(InvalidMetricError):
        dihedral_cosines(g, np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_degenerate_element():
    m = Mesh(np.array([[0, 0], [1, 0], [2, 0.0]]), np.array([[0, 1, 2]]), np.ones(3, bool))
    with pytest.raises(DegenerateElementError):
        element_geometry(m, 0)


@pytest.mark.parametrize(
    "matrix", [[[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.5], [0.0, 1.0]], [[np.nan, 0], [0, 1]]]
)
def test_field_rejects_non_spd(matrix):
    with pytest.raises(InvalidFieldError):
        DiffusionField(np.array(matrix))


def test_varying_field_checks_each_element(small_mesh):
    f = DiffusionField(lambda p: np.broadcast_to(-np.eye(2), (len(p), 2, 2)))
    with pytest.raises(InvalidFieldError):
        f.element_tensors(small_mesh)


def test_field_averaging_modes(small_mesh):
    def lin(p):
        out = np.zeros((len(p), 2, 2))
        out[:, 0, 0] = 2 + p[:, 0]
        out[:, 1, 1] = 5 + p[:, 1]
        return out

    c = DiffusionField(lin).element_tensors(small_mesh)
    v = DiffusionField(lin, average="vertex").element_tensors(small_mesh)
    # the field is linear, so centroid value and vertex mean coincide
    np.testing.assert_allclose(c, v, atol=1e-13)
    with pytest.raises(ValueError):
        DiffusionField(lin, average="median")


def brute_force_d_acute(mesh, DK):
    s = (mesh.area / mesh.n_elements) ** (2 / mesh.dim)
    per = []
    for k, e in enumerate(mesh.elements):
        x = mesh.vertices[e]
        E = np.array([x[1] - x[0], x[2] - x[0]]).T
        q = np.linalg.inv(E).T
        qs = [-q[:, 0] - q[:, 1], q[:, 0], q[:, 1]]
        per.append(min(-(qs[i] @ DK[k] @ qs[j]) for i in range(3) for j in range(3) if i != j))
    return s * min(per), s * np.mean(per)


@settings(max_examples=25, deadline=None)
@given(
    variant=st.sampled_from(["right45", "right135", "acute8"]),
    n=st.integers(1, 4),
    a=st.floats(0.1, 10),
    c=st.floats(0.1, 10),
    t=st.floats(-0.9, 0.9),
)
def test_d_acute_matches_brute_force(variant, n, a, c, t):
    b = t * math.sqrt(a * c)
    m = gen(variant, n, (0, 2, 0, 2))
    f = DiffusionField(np.array([[a, b], [b, c]]))
    rep = d_acute(m, f)
    ref, ref_ave = brute_force_d_acute(m, f.element_tensors(m))
    assert rep.d_acute == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert rep.d_acute_ave == pytest.approx(ref_ave, rel=1e-9, abs=1e-12)
    assert rep.anoac_holds == (rep.d_acute >= 0)
    assert rep.aaac_holds == (rep.d_acute > 0)
    C = offdiag_couplings(m, f.element_tensors(m))
    i, j = rep.worst_pair
    assert C[rep.worst_element, i, j] == pytest.approx(rep.worst_value, rel=1e-12)
    assert rep.d_acute == pytest.approx(size_factor(m) * rep.worst_value, rel=1e-12)


def test_right_meshes_with_identity_are_exactly_nonobtuse():
    for v in ("right45", "right135"):
        rep = d_acute(gen(v, 8), DiffusionField.identity(2))
        assert rep.d_acute == 0.0
        assert rep.anoac_holds and not rep.aaac_holds


def test_acute_mesh_satisfies_acute_condition():
    assert d_acute(gen("acute8", 6), DiffusionField.identity(2)).d_acute > 0


def test_d_acute_is_scale_invariant_under_refinement():
    f = DiffusionField(EX2)
    rect = (-100, 100, -170, 170)
    vals = [d_acute(gen("right45", n, rect), f).d_acute for n in (10, 40, 160)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-10)


def test_report_dict_shape(small_mesh):
    out = d_acute(small_mesh, DiffusionField(EX2)).to_dict()
    assert set(out) == {"d_acute", "d_acute_ave", "anoac", "aaac", "worst_element"}
    assert set(out["worst_element"]) == {"index", "pair", "value"}
