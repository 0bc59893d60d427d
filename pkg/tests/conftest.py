import numpy as np
import pytest

from nagumofem.mesh import Mesh, MeshVariant, StructuredMeshKind, generate_structured_mesh

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Collect one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def unit_square():
    return generate_structured_mesh(StructuredMeshKind(MeshVariant.RIGHT45, 1, 1))


@pytest.fixture
def small_mesh():
    return generate_structured_mesh(StructuredMeshKind(MeshVariant.RIGHT45, 6, 5, (0.0, 3.0, -1.0, 1.5)))


def random_triangles(rng, n, min_area=1e-3):
    """Positively oriented random triangles, shape (n, 3, 2)."""
    out = []
    while len(out) < n:
        x = rng.uniform(-5, 5, size=(3, 2))
        det = np.linalg.det(np.array([x[1] - x[0], x[2] - x[0]]).T)
        if abs(det) < 2 * min_area:
            continue
        if det < 0:
            x = x[[0, 2, 1]]
        out.append(x)
    return np.array(out)


def single_triangle_mesh(x):
    return Mesh(np.asarray(x, float), np.array([[0, 1, 2]]), np.ones(3, bool))
