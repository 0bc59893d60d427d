"""Backward Euler stepping with four reaction treatments, plus the
time-step windows that guarantee nonnegativity and boundedness."""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .assembly import (
    ConfigError,
    Lumping,
    ReactionFunction,
    Treatment,
    assemble_lumped_mass,
    boundary_vector,
    mass_data,
    reaction_weights,
    stiffness_data,
    weighted_mass_data,
)
from .geometry import AngleConditionReport, DiffusionField, d_acute, size_factor
from .linalg import krylov_solve
from .mesh import Mesh

__all__ = [
    "Enforcement",
    "SchemeConfig",
    "ConditionWindow",
    "ConditionViolationError",
    "UnsupportedAnalysisError",
    "StepRecord",
    "SimulationState",
    "Stepper",
    "step",
    "nonnegativity_window",
    "boundedness_window",
    "run_simulation",
    "write_step_log",
]

log = logging.getLogger(__name__)


class Enforcement(str, enum.Enum):
    OFF = "off"
    WARN = "warn"
    STRICT = "strict"


class UnsupportedAnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    """Reaction treatment, lumping, reaction function and step size.

    ``value_range`` replaces the actual range of u^n when evaluating the
    windows (e.g. ``(0, 1)`` for a priori analysis of the Nagumo equation).
    """

    treatment: Treatment = Treatment.EM
    lumping: Lumping = Lumping.CONSISTENT
    rf: ReactionFunction | None = None
    dt: float = 0.1
    enforce_conditions: Enforcement = Enforcement.OFF
    value_range: tuple[float, float] | None = None
    solver_tol: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "treatment", Treatment.parse(self.treatment))
        object.__setattr__(self, "lumping", Lumping.parse(self.lumping))
        try:
            object.__setattr__(self, "enforce_conditions", Enforcement(self.enforce_conditions))
        except ValueError:
            raise ConfigError(f"unknown enforcement mode {self.enforce_conditions!r}") from None
        if self.rf is None:
            from .assembly import nagumo

            object.__setattr__(self, "rf", nagumo(0.1))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")


@dataclass
class ConditionWindow:
    """Admissible step sizes ``dt_lower <= dt <= dt_upper`` plus a mesh test.

    ``upper_inclusive`` distinguishes the strict upper bounds of the
    implicit and HEIM I schemes from the closed ones.
    """

    dt_lower: float
    dt_upper: float
    mesh_ok: bool
    upper_inclusive: bool = True
    details: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        if not self.mesh_ok:
            return False
        if self.upper_inclusive:
            return self.dt_lower <= self.dt_upper
        return self.dt_lower < self.dt_upper

    def contains(self, dt: float) -> bool:
        if not self.mesh_ok or dt < self.dt_lower:
            return False
        return dt <= self.dt_upper if self.upper_inclusive else dt < self.dt_upper

    def to_dict(self) -> dict:
        return {
            "dt_lower": self.dt_lower,
            "dt_upper": self.dt_upper,
            "upper_inclusive": self.upper_inclusive,
            "mesh_ok": self.mesh_ok,
            "details": dict(self.details),
        }


class ConditionViolationError(RuntimeError):
    def __init__(self, step: int, dt: float, window: ConditionWindow):
        self.step = step
        self.dt = dt
        self.window = window
        super().__init__(
            f"step {step}: dt={dt:g} outside admissible window "
            f"[{window.dt_lower:.6g}, {window.dt_upper:.6g}] (mesh_ok={window.mesh_ok})"
        )


# -- maxima over the solution range --------------------------------------


def _sup(fun: Callable, lo: float, hi: float) -> float:
    """Supremum of a smooth scalar function over [lo, hi]."""
    if hi <= lo:
        return float(np.max(fun(np.array([lo]))))
    u = np.linspace(lo, hi, 4097)
    v = np.asarray(fun(u), dtype=float)
    k = int(np.argmax(v))
    best = float(v[k])
    a, b = u[max(k - 1, 0)], u[min(k + 1, len(u) - 1)]
    if 0 < k < len(u) - 1:
        r = minimize_scalar(lambda x: -float(fun(np.array([x]))[0]), bounds=(a, b), method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(r.fun))
    return best


def _pos(x: float) -> float:
    return max(x, 0.0)


class _Extrema:
    """Positive/negative-part maxima of reaction quantities over u^n.

    Built either from an interval (consistent mode: the range of the
    piecewise linear u_h^n) or from nodal values (lumped mode).
    """

    def __init__(self, rf: ReactionFunction, lo=None, hi=None, nodal=None):
        self.rf = rf
        self.lo, self.hi, self.nodal = lo, hi, nodal

    def sup(self, fun) -> float:
        if self.nodal is not None:
            return float(np.max(fun(self.nodal)))
        return _sup(fun, self.lo, self.hi)

    def f(self, u):
        return self.rf(u)

    def ufp(self, u):
        return u * self.rf.derivative(u)

    def f_ufp(self, u):
        return self.rf(u) + u * self.rf.derivative(u)


def _extrema(u_n, cfg: SchemeConfig, value_range=None) -> _Extrema:
    rng = value_range if value_range is not None else cfg.value_range
    if rng is not None:
        lo, hi = float(rng[0]), float(rng[1])
        if hi < lo:
            raise ValueError("value range must satisfy lo <= hi")
        return _Extrema(cfg.rf, lo, hi)
    if u_n is None:
        raise ValueError("either u_n or a value range is required")
    u_n = np.asarray(u_n, dtype=float)
    if cfg.lumping is Lumping.LUMPED:
        return _Extrema(cfg.rf, nodal=u_n)
    return _Extrema(cfg.rf, float(u_n.min()), float(u_n.max()))


def _inv(x: float) -> float:
    return math.inf if x <= 0 else 1.0 / x


def _lower_bound(s: float, k: int, dac: float, adj: float, strict: bool):
    """Lower step bound s / (k D_acute - s adj) and the matching mesh test."""
    denom = k * dac - s * adj
    mesh_ok = denom > 0 if strict else dac >= 0
    if denom > 0:
        return s / denom, mesh_ok
    return math.inf, mesh_ok


def _window_parts(mesh: Mesh, report: AngleConditionReport, cfg: SchemeConfig, ex: _Extrema):
    d = mesh.dim
    k = (d + 1) * (d + 2)
    s = size_factor(mesh)
    dac = report.d_acute
    m = {
        "max_abs_f_neg": _pos(ex.sup(lambda u: -ex.f(u))),
        "max_f_pos": _pos(ex.sup(ex.f)),
        "max_ufp_pos": _pos(ex.sup(ex.ufp)),
        "max_f_ufp_pos": _pos(ex.sup(ex.f_ufp)),
        "max_abs_f_ufp_neg": _pos(ex.sup(lambda u: -ex.f_ufp(u))),
        "d_acute": dac,
        "size_factor": s,
    }
    return d, k, s, dac, m


def _report(mesh, field, report):
    return report if report is not None else d_acute(mesh, field)


def nonnegativity_window(mesh: Mesh, field: DiffusionField, u_n, cfg: SchemeConfig, value_range=None, report: AngleConditionReport | None = None) -> ConditionWindow:
    """Sufficient mesh and time-step conditions for u^{n+1} >= 0.

    Maxima over x of the reaction quantities are taken over the range of
    ``u_n`` (or ``value_range`` / ``cfg.value_range`` when given).
    """
    report = _report(mesh, field, report)
    ex = _extrema(u_n, cfg, value_range)
    d, k, s, dac, m = _window_parts(mesh, report, cfg, ex)
    tr = cfg.treatment

    if cfg.lumping is Lumping.LUMPED:
        mesh_ok = dac >= 0
        if tr is Treatment.EM:
            return ConditionWindow(0.0, _inv(m["max_abs_f_neg"]), mesh_ok, True, m)
        if tr is Treatment.IM:
            up = _inv(max(m["max_f_ufp_pos"], m["max_ufp_pos"]))
            return ConditionWindow(0.0, up, mesh_ok, True, m)
        if tr is Treatment.HEIM1:
            return ConditionWindow(0.0, _inv(m["max_f_pos"]), mesh_ok, False, m)
        return ConditionWindow(0.0, math.inf, mesh_ok, True, m)

    if tr is Treatment.EM:
        lo, ok = _lower_bound(s, k, dac, 0.0, strict=False)
        return ConditionWindow(lo, _inv(m["max_abs_f_neg"]), ok, True, m)
    if tr is Treatment.IM:
        lo, ok = _lower_bound(s, k, dac, m["max_abs_f_ufp_neg"], strict=True)
        up = _inv(max(m["max_ufp_pos"], m["max_f_ufp_pos"]))
        return ConditionWindow(lo, up, ok, False, m)
    lo, ok = _lower_bound(s, k, dac, m["max_abs_f_neg"], strict=True)
    if tr is Treatment.HEIM1:
        return ConditionWindow(lo, _inv(m["max_f_pos"]), ok, False, m)
    return ConditionWindow(lo, math.inf, ok, True, m)


def boundedness_window(mesh: Mesh, field: DiffusionField, u_n, cfg: SchemeConfig, a: float | None = None, value_range=None, report: AngleConditionReport | None = None) -> ConditionWindow:
    """Step-size window preserving both 0 <= u and u <= 1 for Nagumo's f.

    Only the consistent (non-lumped) schemes are covered.
    """
    if cfg.rf.name != "nagumo":
        raise UnsupportedAnalysisError("boundedness analysis needs the Nagumo reaction function")
    if cfg.lumping is Lumping.LUMPED:
        raise UnsupportedAnalysisError("no boundedness window is available for lumped schemes")
    if a is None:
        a = cfg.rf.params["a"]
    base = nonnegativity_window(mesh, field, u_n, cfg, value_range, report)
    ex = _extrema(u_n, cfg, value_range)
    m = dict(base.details)
    tr = cfg.treatment
    if tr is Treatment.EM:
        m["max_abs_u_a_minus_u_neg"] = _pos(ex.sup(lambda u: u * (u - a)))
        up = _inv(max(m["max_abs_f_neg"], m["max_abs_u_a_minus_u_neg"]))
    elif tr is Treatment.IM:
        m["max_u_minus_a_ufp_pos"] = _pos(ex.sup(lambda u: u - a + ex.ufp(u)))
        up = _inv(max(m["max_ufp_pos"], m["max_f_ufp_pos"], m["max_u_minus_a_ufp_pos"]))
    elif tr is Treatment.HEIM1:
        m["max_u_minus_a_pos"] = _pos(ex.sup(lambda u: u - a))
        up = _inv(max(m["max_f_pos"], m["max_u_minus_a_pos"]))
    else:

        def q(u):
            return np.minimum(u - a, 0.0) + u * np.maximum(u - a, 0.0)

        m["max_heim2_bound_term"] = _pos(ex.sup(q))
        up = _inv(m["max_heim2_bound_term"])
    return ConditionWindow(base.dt_lower, up, base.mesh_ok, base.upper_inclusive, m)


# -- stepping -------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    t: float
    u_min: float
    u_max: float
    dt_lower: float
    dt_upper: float
    mesh_ok: bool
    solver_iters: int
    residual: float


@dataclass
class SimulationState:
    u: np.ndarray
    t: float = 0.0
    step_count: int = 0
    history: list = field(default_factory=list)


class Stepper:
    """Advance the discrete system one backward Euler step at a time.

    Mass and stiffness data are assembled once (the diffusion tensor is
    time independent); reaction matrices are rebuilt from u^n every step.
    All matrices share the mesh sparsity pattern, so the system matrix is
    formed by combining CSR data arrays.

    Boundary rows of the stepped system read ``dt u_i = dt g_i``; they are
    divided by dt so that they read ``u_i = g_i``.
    """

    def __init__(self, mesh: Mesh, field: DiffusionField, g: Callable, cfg: SchemeConfig):
        self.mesh = mesh
        self.field = field
        self.g = g
        self.cfg = cfg
        pat = mesh.pattern
        self.pattern = pat
        self.A_data = stiffness_data(mesh, field)
        if cfg.lumping is Lumping.LUMPED:
            self.lumped = assemble_lumped_mass(mesh)
            self.M_data = pat.diagonal_data(self.lumped)
        else:
            self.lumped = None
            self.M_data = mass_data(mesh)
        self.boundary_slots = mesh.boundary_flag[pat.row]
        self.report = d_acute(mesh, field)

    def _weighted(self, w):
        if self.lumped is not None:
            return self.pattern.diagonal_data(self.lumped * w)
        return weighted_mass_data(self.mesh, w)

    def window(self, u) -> ConditionWindow:
        return nonnegativity_window(self.mesh, self.field, u, self.cfg, report=self.report)

    def system(self, u, dt: float):
        """Left-side matrix and right-side matrix for a step from ``u``."""
        wB, wC = reaction_weights(u, self.cfg.rf, self.cfg.treatment)
        L = self.M_data + dt * self.A_data
        if wB is not None:
            L = L - dt * self._weighted(wB)
        L[self.boundary_slots] = self.A_data[self.boundary_slots]
        R = self.M_data if wC is None else self.M_data + dt * self._weighted(wC)
        return self.pattern.matrix(L), self.pattern.matrix(R)

    def step(self, state: SimulationState, dt: float | None = None) -> SimulationState:
        cfg = self.cfg
        dt = cfg.dt if dt is None else float(dt)
        u = state.u
        n = state.step_count
        win = self.window(u)
        if cfg.enforce_conditions is not Enforcement.OFF and not win.contains(dt):
            if cfg.enforce_conditions is Enforcement.STRICT:
                raise ConditionViolationError(n, dt, win)
            log.warning(
                "step %d: dt=%g outside window [%g, %g] (mesh_ok=%s)",
                n, dt, win.dt_lower, win.dt_upper, win.mesh_ok,
            )
        t1 = state.t + dt
        Lmat, Rmat = self.system(u, dt)
        rhs = Rmat @ u
        bnd = self.mesh.boundary_flag
        gb = boundary_vector(self.mesh, self.g, t1)
        rhs[bnd] = gb[bnd]
        x0 = u.copy()
        x0[bnd] = gb[bnd]
        u1, info = krylov_solve(Lmat, rhs, tol=cfg.solver_tol, x0=x0)
        u1[bnd] = gb[bnd]  # identity rows: exact solution of those rows
        rec = StepRecord(
            step=n + 1,
            t=t1,
            u_min=float(u1.min()),
            u_max=float(u1.max()),
            dt_lower=win.dt_lower,
            dt_upper=win.dt_upper,
            mesh_ok=win.mesh_ok,
            solver_iters=info.iterations,
            residual=info.residual,
        )
        return SimulationState(u1, t1, n + 1, state.history + [rec])


def step(state: SimulationState, mesh: Mesh, field: DiffusionField, g: Callable, cfg: SchemeConfig, dt: float | None = None) -> SimulationState:
    """One backward Euler step; see :class:`Stepper` for repeated use."""
    return Stepper(mesh, field, g, cfg).step(state, dt)


def _time_levels(T: float, dt: float) -> np.ndarray:
    ratio = T / dt
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = int(math.ceil(ratio))
    if n == 0:
        return np.array([0.0])
    t = np.arange(n + 1) * dt
    t[-1] = T
    return t


def run_simulation(problem, mesh: Mesh, cfg: SchemeConfig, T: float, log_path=None, on_step: Callable | None = None):
    """Integrate to time ``T`` with uniform steps (the last one shortened).

    ``problem`` needs ``field``, ``g(points, t)`` and ``u0(points)``.
    Returns ``(state, summary)``; the summary's ``u_min``/``u_max`` run over
    all nodes and all time levels including the initial one.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    tic = time.perf_counter()
    u0 = np.asarray(problem.u0(mesh.vertices), dtype=float)
    state = SimulationState(u0.copy(), 0.0, 0, [])
    stepper = Stepper(mesh, problem.field, problem.g, cfg)
    levels = _time_levels(T, cfg.dt)
    u_min, u_max = float(u0.min()), float(u0.max())
    violations = []
    for t_next in levels[1:]:
        dt = t_next - state.t
        state = stepper.step(state, dt)
        rec = state.history[-1]
        state.t = float(t_next)
        rec.t = state.t
        win_ok = rec.mesh_ok and rec.dt_lower <= dt <= rec.dt_upper
        if not win_ok:
            violations.append({"step": rec.step, "dt": dt})
        u_min = min(u_min, rec.u_min)
        u_max = max(u_max, rec.u_max)
        if on_step is not None:
            on_step(state)
    if log_path is not None:
        write_step_log(state.history, log_path)
    summary = {
        "T": float(T),
        "dt": cfg.dt,
        "steps": state.step_count,
        "treatment": cfg.treatment.value,
        "lumping": cfg.lumping.value,
        "u_min": u_min,
        "u_max": u_max,
        "final_u_min": float(state.u.min()),
        "final_u_max": float(state.u.max()),
        "d_acute": stepper.report.d_acute,
        "d_acute_ave": stepper.report.d_acute_ave,
        "initial_window": stepper.window(u0).to_dict(),
        "condition_violations": violations,
        "wall_time": time.perf_counter() - tic,
    }
    return state, summary


_LOG_FIELDS = ("step", "t", "u_min", "u_max", "dt_lower", "dt_upper", "mesh_ok", "solver_iters")


def write_step_log(history: Sequence[StepRecord], target) -> None:
    """Per-step CSV log."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_step_log(history, fh)
    w = csv.writer(target)
    w.writerow(_LOG_FIELDS)
    for r in history:
        w.writerow([r.step, repr(r.t), repr(r.u_min), repr(r.u_max), repr(r.dt_lower), repr(r.dt_upper), int(r.mesh_ok), r.solver_iters])
