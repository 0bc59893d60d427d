import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nagumofem.mesh import (
    ACUTE8_MAX_ANGLE_DEG,
    InvalidDomainError,
    Mesh,
    MeshError,
    MeshParseError,
    MeshVariant,
    StructuredMeshKind,
    find_boundary_vertices,
    generate_structured_mesh,
    load_mesh,
    reorder_interior_first,
    save_mesh,
)

RECT = (-100.0, 100.0, -100.0, 100.0)


def gen(variant, nx, ny, rect=RECT):
    return generate_structured_mesh(StructuredMeshKind(variant, nx, ny, rect))


def angles(mesh):
    x = mesh.vertices[mesh.elements]
    out = []
    for i in range(3):
        a = x[:, (i + 1) % 3] - x[:, i]
        b = x[:, (i + 2) % 3] - x[:, i]
        out.append(np.arctan2(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]), np.einsum("ij,ij->i", a, b)))
    return np.degrees(np.stack(out, axis=1))


@pytest.mark.parametrize(
    "variant,n,expected", [("right45", 20, 800), ("right135", 20, 800), ("acute8", 10, 800)]
)
def test_element_counts(variant, n, expected):
    assert gen(variant, n, n).n_elements == expected


def test_single_square():
    m = gen("right45", 1, 1, (0, 1, 0, 1))
    assert (m.n_elements, m.n_vertices, m.n_interior) == (2, 4, 0)


def test_diagonal_directions():
    m45 = gen("right45", 1, 1, (0, 1, 0, 1))
    m135 = gen("right135", 1, 1, (0, 1, 0, 1))

    def shared_edge(m):
        a, b = (set(map(int, e)) for e in m.elements)
        i, j = sorted(a & b)
        return m.vertices[j] - m.vertices[i]

    d45, d135 = shared_edge(m45), shared_edge(m135)
    assert abs(d45[0] * d45[1]) > 0 and d45[0] * d45[1] > 0
    assert d135[0] * d135[1] < 0


@settings(max_examples=40, deadline=None)
@given(
    variant=st.sampled_from(["right45", "right135", "acute8"]),
    nx=st.integers(1, 7),
    ny=st.integers(1, 7),
    x0=st.floats(-50, 50),
    w=st.floats(0.5, 40),
)
def test_structured_invariants(variant, nx, ny, x0, w):
    h = w * ny / nx  # square cells keep the acute split acute
    rect = (x0, x0 + w, -x0, -x0 + h)
    m = gen(variant, nx, ny, rect)
    factor = 8 if variant == "acute8" else 2
    assert m.n_elements == factor * nx * ny
    assert m.area == pytest.approx(w * h, rel=1e-10)
    assert m.is_interior_first
    assert np.all(m.signed_volumes > 0)
    counts = np.bincount(np.concatenate(m.patches), minlength=m.n_elements)
    assert np.all(counts == 3)
    v = m.vertices
    on_edge = (
        np.isclose(v[:, 0], rect[0]) | np.isclose(v[:, 0], rect[1])
        | np.isclose(v[:, 1], rect[2]) | np.isclose(v[:, 1], rect[3])
    )
    np.testing.assert_array_equal(on_edge, m.boundary_flag)
    np.testing.assert_array_equal(find_boundary_vertices(m.elements, m.n_vertices), m.boundary_flag)


def test_acute8_is_acute():
    m = gen("acute8", 5, 5)
    assert ACUTE8_MAX_ANGLE_DEG < 90.0
    assert angles(m).max() < 90.0 - 1.0
    assert angles(m).max() == pytest.approx(ACUTE8_MAX_ANGLE_DEG, abs=1e-9)


def test_acute8_rejects_stretched_cells():
    with pytest.raises(MeshError, match="degree angle"):
        gen("acute8", 1, 1, (0, 10, 0, 1))


@pytest.mark.parametrize(
    "nx,ny,rect",
    [(0, 1, (0, 1, 0, 1)), (1, -2, (0, 1, 0, 1)), (1, 1, (1, 1, 0, 1)), (1, 1, (0, 1, 2, 1))],
)
def test_invalid_domain(nx, ny, rect):
    with pytest.raises(InvalidDomainError):
        StructuredMeshKind("right45", nx, ny, rect)


def test_mesh_is_immutable(small_mesh):
    with pytest.raises(ValueError):
        small_mesh.vertices[0, 0] = 1.0


def test_round_trip_is_bit_exact():
    m = gen("right135", 3, 4, (-1 / 3, 2 / 7, 0.1, 0.1 + 17 / 21))
    buf = io.StringIO()
    save_mesh(m, buf)
    back = load_mesh(io.StringIO(buf.getvalue()))
    assert back.vertices.tobytes() == m.vertices.tobytes()
    np.testing.assert_array_equal(back.elements, m.elements)
    np.testing.assert_array_equal(back.boundary_flag, m.boundary_flag)


def test_round_trip_via_path(tmp_path, unit_square):
    path = tmp_path / "m.mesh"
    save_mesh(unit_square, path)
    back = load_mesh(path)
    assert back.vertices.tobytes() == unit_square.vertices.tobytes()
    np.testing.assert_array_equal(back.elements, unit_square.elements)


GOOD = "mesh 2 4 2\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n0 1 2\n0 2 3\n"


def test_comments_are_ignored():
    text = "# header comment\n" + GOOD.replace("0 0 1\n", "0 0 1  # corner\n", 1)
    assert load_mesh(io.StringIO(text)).n_elements == 2


@pytest.mark.parametrize(
    "text,line,msg",
    [
        ("", 1, "empty"),
        ("msh 2 4 2\n", 1, "header"),
        ("mesh 2 x 2\n", 1, "non-integer"),
        (GOOD.replace("0 2 3\n", "0 2 4\n"), 7, "index out of range"),
        (GOOD.replace("0 2 3\n", "0 3 2\n"), 7, "non-positive element orientation"),
        (GOOD.replace("1 1 1\n", "1 1 2\n"), 4, "flag"),
        (GOOD.replace("1 1 1\n", "1 a 1\n"), 4, "coordinate"),
        (GOOD + "9 9 9\n", 8, "trailing"),
        (GOOD.replace("0 2 3\n", ""), 7, "expected 2 element lines"),
    ],
)
def test_parse_errors_name_the_line(text, line, msg):
    with pytest.raises(MeshParseError, match=msg) as info:
        load_mesh(io.StringIO(text))
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}:")


def test_reorder_moves_boundary_vertex_to_tail():
    # 3x3 grid with the interior point stored first but a boundary one at 0
    m = gen("right45", 2, 2, (0, 2, 0, 2))
    assert m.is_interior_first
    order = np.r_[m.n_vertices - 1, np.arange(m.n_vertices - 1)]
    inv = np.argsort(order)
    shuffled = Mesh(m.vertices[order], inv[m.elements], m.boundary_flag[order])
    assert shuffled.boundary_flag[0]
    out, perm = reorder_interior_first(shuffled)
    assert out.is_interior_first
    assert perm[0] >= out.n_interior


def test_reorder_identity_and_idempotent(small_mesh):
    out, perm = reorder_interior_first(small_mesh)
    np.testing.assert_array_equal(perm, np.arange(small_mesh.n_vertices))
    again, perm2 = reorder_interior_first(out)
    np.testing.assert_array_equal(again.vertices, out.vertices)
    np.testing.assert_array_equal(perm2, np.arange(out.n_vertices))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reorder_random_shuffles(seed):
    m = gen("acute8", 2, 3, (0, 2, 0, 3))
    rng = np.random.default_rng(seed)
    order = rng.permutation(m.n_vertices)  # new -> old
    inv = np.argsort(order)
    shuffled = Mesh(m.vertices[order], inv[m.elements], m.boundary_flag[order])
    out, perm = reorder_interior_first(shuffled)
    assert out.is_interior_first
    np.testing.assert_array_equal(out.vertices[perm], shuffled.vertices)
    np.testing.assert_array_equal(out.elements, perm[shuffled.elements])
    assert out.area == pytest.approx(m.area, rel=1e-12)


def test_from_arrays_detects_boundary():
    v = [[0, 0], [2, 0], [2, 2], [0, 2], [1, 1]]
    e = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    m = Mesh.from_arrays(v, e)
    assert m.n_interior == 1
    np.testing.assert_array_equal(m.vertices[0], [1, 1])


def test_validate_rejects_inverted_elements():
    m = Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 2, 1]]), np.ones(3, bool))
    with pytest.raises(MeshError, match="orientation"):
        m.validate()


def test_constructor_checks_indices():
    with pytest.raises(MeshError, match="index out of range"):
        Mesh(np.zeros((3, 2)), np.array([[0, 1, 3]]), np.ones(3, bool))
