"""Built-in test problems, error measurement, convergence studies and
solution export (CSV point clouds, SVG/PPM heatmaps)."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .assembly import ReactionFunction, nagumo
from .geometry import DiffusionField
from .mesh import Mesh, MeshVariant, StructuredMeshKind, generate_structured_mesh
from .schemes import SchemeConfig, run_simulation

__all__ = [
    "ProblemSpec",
    "exact_solution_ex1",
    "builtin_diffusion",
    "example1",
    "example2",
    "example3",
    "get_problem",
    "triangle_quadrature",
    "scaled_l2_error",
    "scaled_l2_norm",
    "ConvergenceRow",
    "ConvergenceTable",
    "observed_rates",
    "convergence_study",
    "write_point_cloud",
    "write_svg_heatmap",
    "write_ppm_heatmap",
    "rasterize",
]

SQRT3 = math.sqrt(3.0)
EX2_TENSOR = 0.25 * np.array([[203.0, 199.0 * SQRT3], [199.0 * SQRT3, 601.0]])


@dataclass
class ProblemSpec:
    """Nagumo-type problem on an axis-aligned rectangle.

    ``g(points, t)`` and ``u0(points)`` take (n, 2) arrays; ``exact`` has the
    same signature as ``g`` when an exact solution is known.
    """

    name: str
    rect: tuple[float, float, float, float]
    field: DiffusionField
    rf: ReactionFunction
    g: Callable[[np.ndarray, float], np.ndarray]
    u0: Callable[[np.ndarray], np.ndarray]
    T: float
    exact: Callable[[np.ndarray, float], np.ndarray] | None = None
    metadata: dict = field(default_factory=dict)

    def mesh(self, variant="right45", nx: int = 160, ny: int | None = None) -> Mesh:
        return generate_structured_mesh(
            StructuredMeshKind(MeshVariant(variant), nx, nx if ny is None else ny, self.rect)
        )


def exact_solution_ex1(x, y, t):
    """Travelling front e^z / (e^z + 2), z = 0.5 (x + y) + 0.4 t.

    Written as 1 / (1 + 2 e^{-z}) for z >= 0 so that nothing overflows.
    """
    z = 0.5 * (np.asarray(x, dtype=float) + np.asarray(y, dtype=float)) + 0.4 * np.asarray(t, dtype=float)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + 2.0 * e), e / (e + 2.0))
    return out if out.ndim else float(out)


def _ex1_points(points, t):
    p = np.asarray(points, dtype=float)
    return exact_solution_ex1(p[:, 0], p[:, 1], t)


def _ex1_initial(points):
    return _ex1_points(points, 0.0)


def _ex3_tensor(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    # np.arctan2(0, 0) == 0, so the origin gets theta = pi/2
    theta = np.arctan2(p[:, 1], p[:, 0]) + 0.5 * np.pi
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty((len(p), 2, 2))
    out[:, 0, 0] = 200.0 * c * c + s * s
    out[:, 1, 1] = 200.0 * s * s + c * c
    out[:, 0, 1] = out[:, 1, 0] = 199.0 * c * s
    return out


def builtin_diffusion(name: str, x=None, y=None):
    """Diffusion tensors of the built-in examples.

    With ``x`` and ``y`` omitted a :class:`DiffusionField` is returned,
    otherwise the tensor(s) at the given point(s).
    """
    if name == "ex1":
        fld = DiffusionField.identity(2)
    elif name == "ex2":
        fld = DiffusionField(EX2_TENSOR, name="ex2")
    elif name == "ex3":
        fld = DiffusionField(_ex3_tensor, name="ex3")
    else:
        raise ValueError(f"unknown diffusion {name!r}")
    if x is None and y is None:
        return fld
    pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
    out = fld(pts.reshape(-1, 2))
    return out.reshape(pts.shape[:-1] + (2, 2))


def example1(a: float = 0.1) -> ProblemSpec:
    return ProblemSpec(
        name="ex1",
        rect=(-100.0, 100.0, -100.0, 100.0),
        field=builtin_diffusion("ex1"),
        rf=nagumo(a),
        g=_ex1_points,
        u0=_ex1_initial,
        T=10.0,
        exact=_ex1_points,
    )


def example2() -> ProblemSpec:
    return ProblemSpec(
        name="ex2",
        rect=(-100.0, 100.0, -170.0, 170.0),
        field=builtin_diffusion("ex2"),
        rf=nagumo(0.1),
        g=_ex1_points,
        u0=_ex1_initial,
        T=40.0,
    )


def example3() -> ProblemSpec:
    return ProblemSpec(
        name="ex3",
        rect=(-100.0, 100.0, -100.0, 100.0),
        field=builtin_diffusion("ex3"),
        rf=nagumo(0.1),
        g=_ex1_points,
        u0=_ex1_initial,
        T=40.0,
        metadata={"origin_convention": "theta(0, 0) = pi/2"},
    )


_PROBLEMS = {"ex1": example1, "ex2": example2, "ex3": example3}


def get_problem(name: str) -> ProblemSpec:
    try:
        return _PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(_PROBLEMS)}") from None


# -- error measurement ----------------------------------------------------


def triangle_quadrature():
    """Seven-point rule exact for polynomials of degree 5.

    Returns barycentric points (7, 3) and weights summing to 1.
    """
    r15 = math.sqrt(15.0)
    a1, a2 = (6.0 - r15) / 21.0, (6.0 + r15) / 21.0
    w1, w2 = (155.0 - r15) / 1200.0, (155.0 + r15) / 1200.0
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [[b, a, a], [a, b, a], [a, a, b]]
        wts += [w] * 3
    return np.array(pts), np.array(wts)


def scaled_l2_error(mesh: Mesh, u_h, exact: Callable, t: float) -> float:
    """||u_h - u||_{L2} / sqrt(|Omega|) with seven-point quadrature per element."""
    if mesh.dim != 2:
        raise ValueError("scaled_l2_error supports triangular meshes")
    lam, w = triangle_quadrature()
    X = mesh.vertices[mesh.elements]  # (N_e, 3, 2)
    xq = np.einsum("qa,kad->kqd", lam, X)
    uq = np.asarray(u_h, dtype=float)[mesh.elements] @ lam.T
    ex = np.asarray(exact(xq.reshape(-1, 2), t), dtype=float).reshape(uq.shape)
    err2 = mesh.volumes @ (((uq - ex) ** 2) @ w)
    return math.sqrt(err2 / mesh.area)


def scaled_l2_norm(mesh: Mesh, v) -> float:
    """||v_h||_{L2} / sqrt(|Omega|) for a nodal P1 field, integrated exactly."""
    from .assembly import pair_integrals

    vl = np.asarray(v, dtype=float)[mesh.elements]
    local = np.einsum("ka,ab,kb->k", vl, pair_integrals(mesh.dim), vl)
    return math.sqrt(max(mesh.volumes @ local, 0.0) / mesh.area)


# -- convergence ----------------------------------------------------------


@dataclass
class ConvergenceRow:
    parameter: float
    n_elements: int
    dt: float
    error: float
    rate: float | None = None


@dataclass
class ConvergenceTable:
    """Errors against a halved (or otherwise shrinking) resolution parameter.

    ``parameter`` is dt in time mode and the subsquare width h in space
    mode; rates are log(e_k / e_{k+1}) / log(p_k / p_{k+1}).
    """

    mode: str
    treatment: str
    rows: list = field(default_factory=list)
    reference: str = "exact"

    @property
    def rates(self) -> list:
        return [r.rate for r in self.rows[1:]]

    def to_csv(self, target) -> None:
        if isinstance(target, str) or hasattr(target, "__fspath__"):
            with open(target, "w", newline="", encoding="utf-8") as fh:
                return self.to_csv(fh)
        w = csv.writer(target)
        w.writerow(["parameter", "n_elements", "dt", "error", "rate"])
        for r in self.rows:
            w.writerow([repr(r.parameter), r.n_elements, repr(r.dt), repr(r.error), "" if r.rate is None else repr(r.rate)])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "treatment": self.treatment,
            "reference": self.reference,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self, target) -> None:
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def observed_rates(params: Sequence[float], errors: Sequence[float]) -> list:
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    return list(np.log(e[:-1] / e[1:]) / np.log(p[:-1] / p[1:]))


def convergence_study(
    problem: ProblemSpec,
    cfg: SchemeConfig,
    mode: str,
    levels: Sequence,
    T: float,
    mesh: Mesh | None = None,
    variant="right45",
    workers: int = 1,
    reference: str = "exact",
    ref_factor: int = 16,
) -> ConvergenceTable:
    """Errors and observed rates over a sequence of resolutions.

    Time mode: ``levels`` are step sizes used on ``mesh``. Space mode:
    ``levels`` are subsquare counts per side, solved with ``cfg.dt``.
    Levels are independent and run on ``workers`` threads.

    ``reference='exact'`` measures against ``problem.exact``. In time mode
    ``reference='fine'`` measures against a solution on the same mesh with
    step ``min(levels) / ref_factor``, which isolates the temporal error
    when the mesh is too coarse for the exact-solution error to show it.
    """
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("need >= 2 levels for a convergence study")
    if reference not in ("exact", "fine"):
        raise ValueError(f"unknown reference {reference!r}")
    if reference == "exact" and problem.exact is None:
        raise ValueError("convergence study needs a problem with an exact solution")
    if mode == "time":
        if mesh is None:
            raise ValueError("time mode needs a mesh")
        jobs = [(mesh, replace(cfg, dt=float(dt)), float(dt)) for dt in levels]
    elif mode == "space":
        if reference != "exact":
            raise ValueError("space mode measures against the exact solution")
        jobs = []
        for n in levels:
            m = problem.mesh(variant, int(n))
            jobs.append((m, cfg, (problem.rect[1] - problem.rect[0]) / int(n)))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def solve(job):
        state, _ = run_simulation(problem, job[0], job[1], T)
        return state

    ref_job = None
    if reference == "fine":
        ref_job = (mesh, replace(cfg, dt=min(levels) / ref_factor), None)
    all_jobs = jobs + ([ref_job] if ref_job else [])
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            states = list(pool.map(solve, all_jobs))
    else:
        states = [solve(j) for j in all_jobs]

    if reference == "fine":
        u_ref = states.pop().u
        errors = [scaled_l2_norm(mesh, st.u - u_ref) for st in states]
    else:
        errors = [scaled_l2_error(j[0], st.u, problem.exact, st.t) for j, st in zip(jobs, states)]
    params = [j[2] for j in jobs]
    rates = [None] + observed_rates(params, errors)
    table = ConvergenceTable(mode, cfg.treatment.value, reference=reference)
    for (m, c, p), e, r in zip(jobs, errors, rates):
        table.rows.append(ConvergenceRow(p, m.n_elements, c.dt, e, None if r is None else float(r)))
    return table


# -- export ---------------------------------------------------------------


def write_point_cloud(mesh: Mesh, u, target) -> None:
    """CSV with one row per vertex: coordinates then value."""
    names = ["x", "y", "z"][: mesh.dim] + ["u"]
    with open(target, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, v in zip(mesh.vertices, np.asarray(u, dtype=float)):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def rasterize(mesh: Mesh, u, width: int = 400, height: int | None = None):
    """Sample the piecewise linear u_h on a pixel grid (row 0 at the top).

    Pixels outside the mesh are NaN.
    """
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    x0, y0 = mesh.vertices.min(axis=0)
    x1, y1 = mesh.vertices.max(axis=0)
    if height is None:
        height = max(1, int(round(width * (y1 - y0) / (x1 - x0))))
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements)
    interp = LinearTriInterpolator(tri, np.asarray(u, dtype=float))
    xs = x0 + (np.arange(width) + 0.5) * (x1 - x0) / width
    ys = y1 - (np.arange(height) + 0.5) * (y1 - y0) / height
    X, Y = np.meshgrid(xs, ys)
    return np.ma.filled(interp(X, Y).astype(float), np.nan)


def write_ppm_heatmap(mesh: Mesh, u, target, width: int = 400, cmap: str = "viridis") -> None:
    """Binary PPM image; undershoot (< 0) and overshoot (> 1) are left white."""
    from matplotlib import colormaps

    img = rasterize(mesh, u, width)
    rgb = (colormaps[cmap](np.clip(np.nan_to_num(img), 0.0, 1.0))[..., :3] * 255).round().astype(np.uint8)
    blank = ~np.isfinite(img) | (img < 0) | (img > 1)
    rgb[blank] = 255
    h, w = img.shape
    with open(target, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_svg_heatmap(mesh: Mesh, u, target, levels: int = 21, cmap: str = "viridis") -> None:
    """Filled contour plot over [0, 1]; values outside that range stay blank."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.tri import Triangulation

    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements)
    fig, ax = plt.subplots(figsize=(6, 6))
    try:
        cs = ax.tricontourf(tri, np.asarray(u, dtype=float), levels=np.linspace(0.0, 1.0, levels), cmap=cmap)
        fig.colorbar(cs, ax=ax)
        ax.set_aspect("equal")
        fig.savefig(target, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
