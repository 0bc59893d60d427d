"""Assembly of mass, stiffness and reaction matrices for P1 elements.

Conventions follow the interior-first numbering of :mod:`nagumofem.mesh`:
rows of interior vertices carry the finite element equations, rows of
boundary vertices are zero in M, B, C and identity in A.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import DiffusionField
from .mesh import Mesh

__all__ = [
    "ConfigError",
    "Treatment",
    "Lumping",
    "ReactionFunction",
    "nagumo",
    "simplex_monomial_integral",
    "pair_integrals",
    "triple_integrals",
    "reaction_weights",
    "mass_data",
    "stiffness_data",
    "weighted_mass_data",
    "assemble_mass",
    "assemble_lumped_mass",
    "assemble_stiffness",
    "assemble_reaction",
    "boundary_vector",
    "AssembledSystem",
    "assemble_system",
]


class ConfigError(ValueError):
    pass


class Treatment(str, enum.Enum):
    """Time discretization of the reaction term u f(u)."""

    EM = "EM"  # u^n f(u^n)
    IM = "IM"  # linearized u^{n+1} f(u^{n+1})
    HEIM1 = "HEIM1"  # u^{n+1} f(u^n)
    HEIM2 = "HEIM2"  # u^{n+1} f^-(u^n) + u^n f^+(u^n)

    @classmethod
    def parse(cls, value) -> "Treatment":
        if isinstance(value, cls):
            return value
        key = str(value).upper().replace(" ", "").replace("_", "")
        key = {"HEIMI": "HEIM1", "HEIMII": "HEIM2"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown reaction treatment {value!r}") from None


class Lumping(str, enum.Enum):
    CONSISTENT = "consistent"
    LUMPED = "lumped"

    @classmethod
    def parse(cls, value) -> "Lumping":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown lumping mode {value!r}") from None


@dataclass(frozen=True)
class ReactionFunction:
    """Reaction factor f and its derivative; the source term is u f(u).

    Both callables must accept numpy arrays. ``fprime`` is checked against
    central differences of ``f`` on [-2, 2] at construction.
    """

    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.linspace(-2.0, 2.0, 81)
        h = 1e-5
        fd = (np.asarray(self.f(u + h)) - np.asarray(self.f(u - h))) / (2 * h)
        fp = np.broadcast_to(np.asarray(self.fprime(u), dtype=float), u.shape)
        if not np.all(np.abs(fd - fp) <= 1e-6 * np.maximum(1.0, np.abs(fp))):
            raise ConfigError("fprime does not match the derivative of f")

    def __call__(self, u):
        return np.broadcast_to(np.asarray(self.f(u), dtype=float), np.shape(u))

    def derivative(self, u):
        return np.broadcast_to(np.asarray(self.fprime(u), dtype=float), np.shape(u))


def nagumo(a: float = 0.1) -> ReactionFunction:
    """f(u) = (1 - u)(u - a)."""
    if not 0.0 < a < 1.0:
        raise ConfigError("Nagumo parameter a must lie in (0, 1)")
    return ReactionFunction(
        f=lambda u: (1.0 - u) * (u - a),
        fprime=lambda u: 1.0 + a - 2.0 * u,
        name="nagumo",
        params={"a": a},
    )


def simplex_monomial_integral(volume: float, exponents, d: int | None = None) -> float:
    """Exact integral of prod(phi_i**alpha_i) over a d-simplex.

    Equals |K| d! prod(alpha_i!) / (d + sum alpha_i)!. ``exponents`` lists
    one power per vertex (missing ones are zero).
    """
    alpha = [int(a) for a in exponents]
    if d is None:
        d = len(alpha) - 1
    num = math.factorial(d) * math.prod(math.factorial(a) for a in alpha)
    return volume * num / math.factorial(d + sum(alpha))


@lru_cache(maxsize=None)
def pair_integrals(d: int) -> np.ndarray:
    """Reference ``int phi_a phi_b`` divided by |K|."""
    n = d + 1
    out = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            e = [0] * n
            e[a] += 1
            e[b] += 1
            out[a, b] = simplex_monomial_integral(1.0, e, d)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def triple_integrals(d: int) -> np.ndarray:
    """Reference ``int phi_a phi_b phi_c`` divided by |K|."""
    n = d + 1
    out = np.empty((n, n, n))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                e = [0] * n
                e[a] += 1
                e[b] += 1
                e[c] += 1
                out[a, b, c] = simplex_monomial_integral(1.0, e, d)
    out.flags.writeable = False
    return out


def reaction_weights(u, rf: ReactionFunction, treatment) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Nodal weights ``(w_B, w_C)`` of the implicit and explicit reaction parts.

    A weight of ``None`` means the corresponding matrix is absent.
    """
    treatment = Treatment.parse(treatment)
    u = np.asarray(u, dtype=float)
    fu = rf(u)
    if treatment is Treatment.EM:
        return None, fu
    if treatment is Treatment.IM:
        ufp = u * rf.derivative(u)
        return fu + ufp, -ufp
    if treatment is Treatment.HEIM1:
        return fu, None
    return np.minimum(fu, 0.0), np.maximum(fu, 0.0)


def _interior_rows(mesh: Mesh) -> np.ndarray:
    return mesh.interior_mask[mesh.pattern.row]


def mass_data(mesh: Mesh) -> np.ndarray:
    """CSR data of the consistent mass matrix on the mesh pattern."""
    local = pair_integrals(mesh.dim)
    vals = mesh.volumes[:, None, None] * local[None]
    return mesh.pattern.accumulate(vals) * _interior_rows(mesh)


def weighted_mass_data(mesh: Mesh, w) -> np.ndarray:
    """CSR data of ``int w_h phi_j phi_i`` with w_h the nodal interpolant of w."""
    T = triple_integrals(mesh.dim)
    wl = np.asarray(w, dtype=float)[mesh.elements]
    vals = mesh.volumes[:, None, None] * np.einsum("abc,kc->kab", T, wl)
    return mesh.pattern.accumulate(vals) * _interior_rows(mesh)


def stiffness_data(mesh: Mesh, field: DiffusionField) -> np.ndarray:
    """CSR data of the stiffness matrix with identity boundary rows."""
    DK = field.element_tensors(mesh)
    G = mesh.gradients
    vals = mesh.volumes[:, None, None] * np.einsum("kid,kde,kje->kij", G, DK, G)
    data = mesh.pattern.accumulate(vals) * _interior_rows(mesh)
    pat = mesh.pattern
    bnd = np.flatnonzero(mesh.boundary_flag)
    data[pat.diag[bnd]] = 1.0
    return data


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    return mesh.pattern.matrix(mass_data(mesh))


def assemble_lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix: |omega_i|/(d+1) on interior rows."""
    return np.where(mesh.interior_mask, mesh.patch_volumes / (mesh.dim + 1), 0.0)


def assemble_stiffness(mesh: Mesh, field: DiffusionField) -> sp.csr_matrix:
    return mesh.pattern.matrix(stiffness_data(mesh, field))


def _diag_matrix(v) -> sp.csr_matrix:
    return sp.diags(np.asarray(v, dtype=float), format="csr")


def assemble_reaction(mesh: Mesh, u_n, rf: ReactionFunction, treatment, lumping="consistent"):
    """Reaction matrices ``(B, C)`` for one time step; absent ones are None.

    The linear system solved per step is
    ``(M - dt B + dt A) u^{n+1} = (M + dt C) u^n + dt g^{n+1}``.
    """
    lumping = Lumping.parse(lumping)
    u_n = np.asarray(u_n, dtype=float)
    if u_n.shape != (mesh.n_vertices,):
        raise ValueError("u_n must have one value per vertex")
    wB, wC = reaction_weights(u_n, rf, treatment)
    out = []
    for w in (wB, wC):
        if w is None:
            out.append(None)
        elif lumping is Lumping.LUMPED:
            out.append(_diag_matrix(assemble_lumped_mass(mesh) * w))
        else:
            out.append(mesh.pattern.matrix(weighted_mass_data(mesh, w)))
    return tuple(out)


def boundary_vector(mesh: Mesh, g: Callable, t: float) -> np.ndarray:
    """Boundary data g(x_i, t) on boundary rows, zero on interior rows.

    ``g`` is called as ``g(points, t)`` with an (n, d) array of points.
    """
    out = np.zeros(mesh.n_vertices)
    bnd = mesh.boundary_flag
    if bnd.any():
        out[bnd] = np.asarray(g(mesh.vertices[bnd], t), dtype=float)
    return out


@dataclass
class AssembledSystem:
    M: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix | None
    C: sp.csr_matrix | None
    g: np.ndarray | None = None


def assemble_system(mesh: Mesh, field: DiffusionField, u_n, rf: ReactionFunction, treatment, lumping="consistent", g=None, t: float = 0.0) -> AssembledSystem:
    lumping = Lumping.parse(lumping)
    if lumping is Lumping.LUMPED:
        M = _diag_matrix(assemble_lumped_mass(mesh))
    else:
        M = assemble_mass(mesh)
    B, C = assemble_reaction(mesh, u_n, rf, treatment, lumping)
    gv = boundary_vector(mesh, g, t) if g is not None else None
    return AssembledSystem(M, assemble_stiffness(mesh, field), B, C, gv)
