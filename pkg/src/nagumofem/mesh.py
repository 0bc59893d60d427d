"""Simplicial meshes with interior-first vertex ordering.

The discrete system numbers the interior vertices first, so every mesh that
leaves this module (generated or loaded) has its vertices sorted that way.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable

import numpy as np

__all__ = [
    "InvalidDomainError",
    "MeshError",
    "MeshParseError",
    "Mesh",
    "MeshVariant",
    "StructuredMeshKind",
    "ACUTE8_MAX_ANGLE_DEG",
    "find_boundary_vertices",
    "generate_structured_mesh",
    "reorder_interior_first",
    "load_mesh",
    "save_mesh",
]


class MeshError(ValueError):
    """Invalid mesh data."""


class InvalidDomainError(MeshError):
    pass


class MeshParseError(MeshError):
    """Malformed mesh file. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def _signed_volumes(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    d = vertices.shape[1]
    x = vertices[elements]
    edges = np.swapaxes(x[:, 1:, :] - x[:, :1, :], 1, 2)  # columns x_i - x_0
    return np.linalg.det(edges) / math.factorial(d)


def find_boundary_vertices(elements: np.ndarray, n_vertices: int) -> np.ndarray:
    """Flag vertices lying on a facet owned by exactly one element."""
    elements = np.asarray(elements)
    nloc = elements.shape[1]
    facets = np.concatenate(
        [np.delete(elements, i, axis=1) for i in range(nloc)], axis=0
    )
    facets = np.sort(facets, axis=1)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    flag = np.zeros(n_vertices, dtype=bool)
    flag[uniq[counts == 1].ravel()] = True
    return flag


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh.

    Attributes
    ----------
    vertices : (N_v, d) float array
    elements : (N_e, d+1) int array, positively oriented
    boundary_flag : (N_v,) bool array

    Arrays are made read-only on construction. Derived quantities (volumes,
    basis gradients, patches, sparsity pattern) are computed once and cached.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_flag: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        elements = np.array(self.elements, dtype=np.int64)
        flag = np.array(self.boundary_flag, dtype=bool)
        d = vertices.shape[1]
        if d not in (1, 2, 3):
            raise MeshError(f"unsupported dimension {d}")
        if elements.ndim != 2 or elements.shape[1] != d + 1:
            raise MeshError(f"elements must have {d + 1} vertices each")
        if flag.shape != (len(vertices),):
            raise MeshError("boundary_flag length must equal number of vertices")
        if elements.size and (elements.min() < 0 or elements.max() >= len(vertices)):
            raise MeshError("index out of range")
        for arr in (vertices, elements, flag):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary_flag", flag)

    @classmethod
    def from_arrays(cls, vertices, elements, boundary_flag=None, reorder=True) -> "Mesh":
        """Build a mesh, detecting the boundary and reordering if asked."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        elements = np.asarray(elements, dtype=np.int64)
        if boundary_flag is None:
            boundary_flag = find_boundary_vertices(elements, len(vertices))
        mesh = cls(vertices, elements, boundary_flag)
        if reorder:
            mesh, _ = reorder_interior_first(mesh)
        return mesh

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.boundary_flag))

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_flag

    @property
    def is_interior_first(self) -> bool:
        nvi = self.n_interior
        return not self.boundary_flag[:nvi].any() and self.boundary_flag[nvi:].all()

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        return _signed_volumes(self.vertices, self.elements)

    @cached_property
    def volumes(self) -> np.ndarray:
        v = np.abs(self.signed_volumes)
        v.flags.writeable = False
        return v

    @property
    def area(self) -> float:
        """Total measure of the domain, sum of element volumes."""
        return float(self.volumes.sum())

    @cached_property
    def gradients(self) -> np.ndarray:
        """Basis-function gradients, shape (N_e, d+1, d).

        Row ``i`` of element ``k`` is the q-vector of local vertex ``i``:
        rows 1..d come from the inverse edge matrix, row 0 is minus their sum.
        """
        x = self.vertices[self.elements]
        edges = np.swapaxes(x[:, 1:, :] - x[:, :1, :], 1, 2)
        inv = np.linalg.inv(edges)  # rows of E^{-1} are the columns of E^{-T}
        grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
        grads.flags.writeable = False
        return grads

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def patches(self) -> list[np.ndarray]:
        """Incident element indices for each vertex."""
        flat = self.elements.ravel()
        owner = np.repeat(np.arange(self.n_elements), self.dim + 1)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        return np.split(owner[order], np.cumsum(counts)[:-1])

    @cached_property
    def patch_volumes(self) -> np.ndarray:
        """|omega_i| for every vertex."""
        return np.bincount(
            self.elements.ravel(),
            weights=np.repeat(self.volumes, self.dim + 1),
            minlength=self.n_vertices,
        )

    @cached_property
    def pattern(self):
        from .linalg import CSRPattern

        nloc = self.dim + 1
        rows = np.repeat(self.elements, nloc, axis=1).ravel()
        cols = np.tile(self.elements, (1, nloc)).ravel()
        return CSRPattern(rows, cols, (self.n_vertices, self.n_vertices))

    def validate(self) -> None:
        """Raise MeshError if an element is degenerate or negatively oriented."""
        vol = self.signed_volumes
        bad = np.flatnonzero(vol <= 0)
        if bad.size:
            raise MeshError(
                f"element {bad[0]} has non-positive orientation (volume {vol[bad[0]]:.3e})"
            )

    def __repr__(self):
        return (
            f"Mesh(dim={self.dim}, N_v={self.n_vertices}, N_e={self.n_elements}, "
            f"N_vi={self.n_interior})"
        )


def reorder_interior_first(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """Renumber vertices so interior ones come first.

    The sort is stable, so an already ordered mesh gets the identity and the
    operation is idempotent. Returns ``(new_mesh, perm)`` with
    ``perm[old] = new``.
    """
    order = np.argsort(mesh.boundary_flag, kind="stable")  # new -> old
    perm = np.empty_like(order)
    perm[order] = np.arange(len(order))
    if np.array_equal(order, np.arange(len(order))):
        return mesh, perm
    new = Mesh(mesh.vertices[order], perm[mesh.elements], mesh.boundary_flag[order])
    return new, perm


class MeshVariant(str, enum.Enum):
    RIGHT45 = "right45"
    RIGHT135 = "right135"
    ACUTE8 = "acute8"


@dataclass(frozen=True)
class StructuredMeshKind:
    variant: MeshVariant
    nx: int
    ny: int
    rect: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "variant", MeshVariant(self.variant))
        x0, x1, y0, y1 = map(float, self.rect)
        object.__setattr__(self, "rect", (x0, x1, y0, y1))
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise InvalidDomainError("nx and ny must be at least 1")
        if not (x1 > x0 and y1 > y0) or not all(map(math.isfinite, self.rect)):
            raise InvalidDomainError(f"degenerate rectangle {self.rect}")


# Eight-triangle acute split of the unit square. The midpoints of the bottom
# and top sides are used, plus two interior points placed symmetrically about
# x = 1/2; all coordinates are dyadic so they are exact in floating point.
# Local vertex labels:
#   0..3 corners (0,0),(1,0),(1,1),(0,1); 4 bottom midpoint; 5 top midpoint;
#   6, 7 interior points left and right of the vertical midline.
_ACUTE8_POINTS = np.array(
    [
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 1.0],
        [0.0, 1.0],
        [0.5, 0.0],
        [0.5, 1.0],
        [7 / 16, 13 / 16],
        [9 / 16, 13 / 16],
    ]
)
_ACUTE8_TRIANGLES = np.array(
    [
        [0, 4, 6],
        [4, 1, 7],
        [4, 7, 6],
        [1, 2, 7],
        [7, 2, 5],
        [6, 7, 5],
        [6, 5, 3],
        [0, 6, 3],
    ]
)



def _max_angles_deg(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Largest interior angle of each triangle in degrees."""
    x = vertices[elements]
    out = np.zeros(len(elements))
    for i in range(3):
        a = x[:, (i + 1) % 3] - x[:, i]
        b = x[:, (i + 2) % 3] - x[:, i]
        c = np.einsum("ij,ij->i", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        )
        out = np.maximum(out, np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    return out


ACUTE8_MAX_ANGLE_DEG = float(_max_angles_deg(_ACUTE8_POINTS, _ACUTE8_TRIANGLES).max())


def _grid_blocks(kind: StructuredMeshKind):
    """Local (unit-square) points and triangles for the chosen variant."""
    if kind.variant is MeshVariant.RIGHT45:
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        tris = np.array([[0, 1, 2], [0, 2, 3]])
    elif kind.variant is MeshVariant.RIGHT135:
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        tris = np.array([[0, 1, 3], [1, 2, 3]])
    else:
        pts, tris = _ACUTE8_POINTS, _ACUTE8_TRIANGLES
    return pts, tris


def generate_structured_mesh(kind: StructuredMeshKind) -> Mesh:
    """Tile ``kind.rect`` with nx-by-ny subsquares split into triangles.

    Right45 cuts each subsquare along the lower-left/upper-right diagonal,
    Right135 along the other one, Acute8 into eight acute triangles. Acute8
    blocks are mirrored in y on odd rows, which keeps the side midpoints
    shared and gives a mesh symmetric about every horizontal grid line.
    """
    x0, x1, y0, y1 = kind.rect
    nx, ny = int(kind.nx), int(kind.ny)
    pts, tris = _grid_blocks(kind)
    npts = len(pts)

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    local = np.broadcast_to(pts, (len(ii), npts, 2)).copy()
    local_tris = np.broadcast_to(tris, (len(ii),) + tris.shape).copy()
    if kind.variant is MeshVariant.ACUTE8:
        odd = jj % 2 == 1
        local[odd, :, 1] = 1.0 - local[odd, :, 1]
        local_tris[odd] = local_tris[odd][:, :, ::-1]  # mirroring flips orientation

    # integer-exact grid parameters, so shared points coincide bit-for-bit
    s = ii[:, None] + local[:, :, 0]
    t = jj[:, None] + local[:, :, 1]
    key = np.stack([s.ravel(), t.ravel()], axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    vx = np.where(uniq[:, 0] == nx, x1, x0 + uniq[:, 0] * hx)
    vy = np.where(uniq[:, 1] == ny, y1, y0 + uniq[:, 1] * hy)
    vertices = np.stack([vx, vy], axis=1)

    offsets = (np.arange(len(ii)) * npts)[:, None, None]
    elements = inverse[(local_tris + offsets).reshape(-1, 3)]

    flag = (
        (uniq[:, 0] == 0) | (uniq[:, 0] == nx) | (uniq[:, 1] == 0) | (uniq[:, 1] == ny)
    )
    mesh, _ = reorder_interior_first(Mesh(vertices, elements, flag))
    mesh.validate()
    if kind.variant is MeshVariant.ACUTE8:
        worst = _max_angles_deg(mesh.vertices, mesh.elements).max()
        if not worst < 90.0:
            raise MeshError(
                f"acute split produced a {worst:.6f} degree angle; "
                "use subsquares with a width/height ratio close to 1"
            )
    return mesh


def save_mesh(mesh: Mesh, sink: IO[str] | str) -> None:
    """Write the plain-text mesh format.

    ``mesh <dim> <N_v> <N_e>`` header, one vertex per line with a trailing
    boundary flag, then one element per line of zero-based indices.
    """
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            return save_mesh(mesh, fh)
    sink.write(f"mesh {mesh.dim} {mesh.n_vertices} {mesh.n_elements}\n")
    for x, b in zip(mesh.vertices, mesh.boundary_flag):
        coords = " ".join(f"{c:.17g}" for c in x)
        sink.write(f"{coords} {int(b)}\n")
    for e in mesh.elements:
        sink.write(" ".join(str(int(i)) for i in e) + "\n")


def _content_lines(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_mesh(source: IO[str] | str, reorder: bool = True) -> Mesh:
    """Parse the plain-text mesh format; see :func:`save_mesh`."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            return load_mesh(fh, reorder=reorder)
    if isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8")

    it = _content_lines(source)
    try:
        lineno, tok = next(it)
    except StopIteration:
        raise MeshParseError("empty mesh file", 1) from None
    if len(tok) != 4 or tok[0] != "mesh":
        raise MeshParseError("expected header 'mesh <dim> <N_v> <N_e>'", lineno)
    try:
        dim, nv, ne = (int(v) for v in tok[1:])
    except ValueError:
        raise MeshParseError("non-integer value in header", lineno) from None
    if dim not in (1, 2, 3) or nv < 0 or ne < 0:
        raise MeshParseError("invalid header values", lineno)

    vertices = np.empty((nv, dim))
    flag = np.empty(nv, dtype=bool)
    for k in range(nv):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {nv} vertex lines, got {k}", lineno + 1) from None
        if len(tok) != dim + 1:
            raise MeshParseError(f"vertex line needs {dim} coordinates and a flag", lineno)
        try:
            vertices[k] = [float(c) for c in tok[:dim]]
        except ValueError:
            raise MeshParseError("bad coordinate", lineno) from None
        if tok[dim] not in ("0", "1"):
            raise MeshParseError("boundary flag must be 0 or 1", lineno)
        flag[k] = tok[dim] == "1"

    elements = np.empty((ne, dim + 1), dtype=np.int64)
    for k in range(ne):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {ne} element lines, got {k}", lineno + 1) from None
        if len(tok) != dim + 1:
            raise MeshParseError(f"element line needs {dim + 1} indices", lineno)
        try:
            idx = [int(v) for v in tok]
        except ValueError:
            raise MeshParseError("non-integer vertex index", lineno) from None
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshParseError("index out of range", lineno)
        elements[k] = idx
        vol = _signed_volumes(vertices, elements[k : k + 1])[0]
        if not vol > 0:
            raise MeshParseError("non-positive element orientation", lineno)

    extra = next(it, None)
    if extra is not None:
        raise MeshParseError("unexpected trailing data", extra[0])

    mesh = Mesh(vertices, elements, flag)
    if reorder:
        mesh, _ = reorder_interior_first(mesh)
    return mesh
