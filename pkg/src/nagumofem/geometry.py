"""Element geometry, metric dihedral angles and the D_acute mesh indicator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Mesh, MeshError

__all__ = [
    "DegenerateElementError",
    "InvalidMetricError",
    "InvalidFieldError",
    "DiffusionField",
    "ElementGeometry",
    "AngleConditionReport",
    "element_geometry",
    "dihedral_cosines",
    "offdiag_couplings",
    "d_acute",
    "size_factor",
]


class DegenerateElementError(MeshError):
    pass


class InvalidMetricError(ValueError):
    pass


class InvalidFieldError(ValueError):
    pass


def _check_spd(tensors: np.ndarray, exc=InvalidFieldError, rtol=1e-12) -> None:
    t = np.asarray(tensors, dtype=float)
    if t.ndim == 2:
        t = t[None]
    if not np.all(np.isfinite(t)):
        raise exc("tensor has non-finite entries")
    scale = np.maximum(np.abs(t).max(axis=(1, 2)), 1e-300)
    asym = np.abs(t - np.swapaxes(t, 1, 2)).max(axis=(1, 2))
    if np.any(asym > rtol * scale):
        raise exc("tensor is not symmetric")
    if np.any(np.linalg.eigvalsh(t)[:, 0] <= 0):
        raise exc("tensor is not positive definite")


class DiffusionField:
    """Symmetric positive-definite tensor field D(x).

    Parameters
    ----------
    func : callable or array_like
        Either a constant d-by-d matrix or a vectorized function taking an
        (n, d) array of points and returning (n, d, d) tensors.
    average : {'centroid', 'vertex'}
        How the per-element value D_K is formed for varying fields.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray] | np.ndarray, average: str = "centroid", name: str | None = None):
        if average not in ("centroid", "vertex"):
            raise ValueError(f"unknown averaging mode {average!r}")
        self.average = average
        self.name = name
        if callable(func):
            self._func = func
            self.constant = None
        else:
            D = np.array(func, dtype=float)
            if D.ndim == 0:
                D = D * np.eye(1)
            _check_spd(D)
            D.flags.writeable = False
            self.constant = D
            self._func = None

    @classmethod
    def identity(cls, d: int = 2) -> "DiffusionField":
        return cls(np.eye(d), name="identity")

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.constant is not None:
            return np.broadcast_to(self.constant, (len(pts),) + self.constant.shape)
        return np.asarray(self._func(pts), dtype=float)

    def element_tensors(self, mesh: Mesh, check: bool = True) -> np.ndarray:
        """D_K for every element, shape (N_e, d, d)."""
        if self.constant is not None:
            if self.constant.shape != (mesh.dim, mesh.dim):
                raise InvalidFieldError("tensor dimension does not match mesh")
            return np.broadcast_to(self.constant, (mesh.n_elements, mesh.dim, mesh.dim))
        if self.average == "centroid":
            DK = self(mesh.centroids)
        else:
            DK = self(mesh.vertices)[mesh.elements].mean(axis=1)
        if check:
            _check_spd(DK)
        return DK

    def __repr__(self):
        if self.name:
            return f"DiffusionField({self.name!r})"
        return f"DiffusionField(constant={self.constant is not None})"


@dataclass
class ElementGeometry:
    """Geometry of a single simplex.

    ``q[i]`` is the gradient of the basis function of local vertex ``i``.
    """

    vertices: np.ndarray
    E: np.ndarray
    q: np.ndarray
    volume: float
    heights: np.ndarray
    metric_heights: np.ndarray | None = None


def element_geometry(mesh: Mesh, k: int, field: DiffusionField | None = None) -> ElementGeometry:
    x = mesh.vertices[mesh.elements[k]]
    d = mesh.dim
    E = (x[1:] - x[0]).T
    det = np.linalg.det(E)
    scale = np.abs(E).max() ** d if E.size else 0.0
    if not abs(det) > 1e-14 * scale:
        raise DegenerateElementError(f"element {k} is degenerate")
    qs = np.linalg.inv(E).T  # columns q_1..q_d
    q = np.vstack([-qs.sum(axis=1), qs.T])
    heights = 1.0 / np.linalg.norm(q, axis=1)
    mh = None
    if field is not None:
        DK = field.element_tensors(mesh)[k]
        mh = 1.0 / np.sqrt(np.einsum("id,de,ie->i", q, DK, q))
    return ElementGeometry(x, E, q, abs(det) / math.factorial(d), heights, mh)


def dihedral_cosines(geom: ElementGeometry, metric: np.ndarray | None = None) -> np.ndarray:
    """Cosines of the dihedral angles between faces, measured with D_K.

    ``metric`` plays the role of D_K (angles are those of the simplex
    mapped by D_K^{-1/2}); identity when omitted. Diagonal entries are set
    to 1 and carry no meaning.
    """
    q = geom.q
    if metric is None:
        metric = np.eye(q.shape[1])
    else:
        metric = np.asarray(metric, dtype=float)
        _check_spd(metric, exc=InvalidMetricError)
    G = q @ metric @ q.T
    n = np.sqrt(np.diag(G))
    cos = -G / np.outer(n, n)
    np.fill_diagonal(cos, 1.0)
    return np.clip(cos, -1.0, 1.0)


def offdiag_couplings(mesh: Mesh, DK: np.ndarray) -> np.ndarray:
    """-(grad phi_i)^T D_K grad phi_j per element, shape (N_e, d+1, d+1)."""
    G = mesh.gradients
    return -np.einsum("kid,kde,kje->kij", G, DK, G)


def size_factor(mesh: Mesh) -> float:
    """(|Omega| / N_e)^(2/d), the squared average element size."""
    return (mesh.area / mesh.n_elements) ** (2.0 / mesh.dim)


@dataclass
class AngleConditionReport:
    d_acute: float
    d_acute_ave: float
    anoac_holds: bool
    aaac_holds: bool
    worst_element: int
    worst_pair: tuple[int, int]
    worst_value: float

    def to_dict(self) -> dict:
        return {
            "d_acute": self.d_acute,
            "d_acute_ave": self.d_acute_ave,
            "anoac": self.anoac_holds,
            "aaac": self.aaac_holds,
            "worst_element": {
                "index": self.worst_element,
                "pair": list(self.worst_pair),
                "value": self.worst_value,
            },
        }


def d_acute(mesh: Mesh, field: DiffusionField) -> AngleConditionReport:
    """Mesh-level anisotropic acuteness indicator.

    ``d_acute`` is the scaled minimum over elements and vertex pairs of
    -(grad phi_i)^T D_K grad phi_j; ``d_acute_ave`` averages the scaled
    per-element minima. ANOAC holds when d_acute >= 0, AAAC when > 0.
    """
    if mesh.n_elements == 0:
        raise MeshError("empty mesh")
    C = offdiag_couplings(mesh, field.element_tensors(mesh))
    n = mesh.dim + 1
    C[:, np.arange(n), np.arange(n)] = np.inf
    per_elem = C.reshape(len(C), -1).min(axis=1)
    k = int(np.argmin(per_elem))
    flat = int(np.argmin(C[k]))
    i, j = divmod(flat, n)
    s = size_factor(mesh)
    # math.fsum keeps the average independent of summation order
    ave = s * math.fsum(per_elem) / mesh.n_elements
    val = s * float(per_elem[k]) + 0.0  # no negative zero
    return AngleConditionReport(
        d_acute=val,
        d_acute_ave=ave,
        anoac_holds=val >= 0.0,
        aaac_holds=val > 0.0,
        worst_element=k,
        worst_pair=(min(i, j), max(i, j)),
        worst_value=float(per_elem[k]) + 0.0,
    )
