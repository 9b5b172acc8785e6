"""Norms, residual reports, order fits, stability and weak-layer checks."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import fd_ops as fd
from .expansion import Expansion, assemble, build_expansion, layer_gradient
from .full_solver import POINCARE_SQ, ProblemSpec, layer_resolution_warning, solve_full
from .mesh import Field, TensorGrid, sample
from .profiles import ExpPoly1D, edge_operator_terms, realize
from .reduced import _ops, solve_psi0

NORMS = ("lr_l2", "psi_linf_gamma", "dt_linf_gamma", "dn_linf_gamma", "dn_l2_gamma", "err_linf", "err_h1")

PREDICTED = {
    "with-compat": {"lr_l2": 2.5, "psi_linf_gamma": 3.0, "dt_linf_gamma": 2.0, "dn_linf_gamma": 3.0,
                    "dn_l2_gamma": 3.5, "err_linf": 1.5, "err_h1": 1.5},
    "no-compat": {"lr_l2": 1.5, "psi_linf_gamma": 2.0, "dt_linf_gamma": 1.0, "dn_linf_gamma": 2.0,
                  "dn_l2_gamma": 2.5, "err_linf": 0.5},
}
WINDOW = 0.3


class DegenerateDataError(ValueError):
    """Order fit requested on data containing exact zeros."""


def _trapz_weights(x: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    w = np.zeros(x.size)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def l2_norm(u: Field) -> float:
    wx, wy = _trapz_weights(u.grid.x), _trapz_weights(u.grid.y)
    return math.sqrt(float(wx @ (u.values ** 2) @ wy))


def linf_norm(u) -> float:
    vals = u.values if isinstance(u, Field) else np.asarray(u)
    return float(np.abs(vals).max(initial=0.0))


def gradient(u: Field) -> tuple[np.ndarray, np.ndarray]:
    """Centered-difference gradient (one-sided second order at the boundary)."""
    gx = np.gradient(u.values, u.grid.x, axis=0, edge_order=2)
    gy = np.gradient(u.values, u.grid.y, axis=1, edge_order=2)
    return gx, gy


def h1_seminorm(u: Field) -> float:
    gx, gy = gradient(u)
    return math.sqrt(l2_norm(Field(u.grid, gx)) ** 2 + l2_norm(Field(u.grid, gy)) ** 2)


def norm(u: Field, which: str) -> float:
    if which == "L2":
        return l2_norm(u)
    if which == "Linf":
        return linf_norm(u)
    if which == "H1-semi":
        return h1_seminorm(u)
    raise ValueError(f"unknown norm {which!r}")


def boundary_l2(traces: dict, grid: TensorGrid) -> float:
    total = 0.0
    for edge, vals in traces.items():
        total += float(_trapz_weights(fd.edge_coords(grid, edge)) @ (np.asarray(vals) ** 2))
    return math.sqrt(total)


def boundary_linf(traces: dict) -> float:
    return max(float(np.abs(v).max(initial=0.0)) for v in traces.values())


def _edge(values: np.ndarray, edge: str) -> np.ndarray:
    return fd._edge_slice(values, edge)


def _layer_operator(exp: Expansion) -> np.ndarray:
    """Nodal sum of L applied to every layer term."""
    grid, eps, (b1, b2), c = exp.grid, exp.eps, exp.b, exp.c
    total = np.zeros(grid.shape)
    for fam, orient, bn, bt in ((exp.v, "x", b1, b2), (exp.w, "y", b2, b1)):
        grouped: dict = {}
        for i, p in fam.items():
            for m, term in edge_operator_terms(p, bn, bt, c).items():
                grouped[i + m] = term if (i + m) not in grouped else grouped[i + m] + term
        for power, prof in sorted(grouped.items()):
            total += eps ** power * realize(prof, eps, grid, orient).values
    for i, z in exp.z.items():
        total += eps ** (i - 3) * realize(z.principal(), eps, grid).values
        total -= c * eps ** (i - 2) * realize(z.lap(), eps, grid).values
    return total


def interior_residual(exp: Expansion, f) -> Field:
    """Nodal ``f - L Psi``.

    The interior-term part uses the same discrete operators that produced the
    right-hand sides of psi_1 and psi_2; the layer terms are differentiated
    exactly.  On boundary nodes the interior-term part is copied from the
    nearest interior node.
    """
    grid, eps = exp.grid, exp.eps
    fvals = f.values if isinstance(f, Field) else sample(grid, f).values
    ops = _ops(grid, exp.b, exp.c)
    inner = fvals[1:-1, 1:-1].ravel(order="F").copy()
    for i, s in exp.psi.items():
        ext = s.extended().ravel(order="F")
        inner -= eps ** i * (ops.reduced @ ext + eps * (ops.bih @ ext))
    part = np.zeros(grid.shape)
    part[1:-1, 1:-1] = inner.reshape((grid.gx.N - 1, grid.gy.N - 1), order="F")
    part[0, :] = part[1, :]
    part[-1, :] = part[-2, :]
    part[:, 0] = part[:, 1]
    part[:, -1] = part[:, -2]
    return Field(grid, part - _layer_operator(exp))


@dataclass(frozen=True)
class ResidualReport:
    eps: float
    grid: dict
    variant: str
    norms: dict
    resolved: bool
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "grid": self.grid, "variant": self.variant, "resolved": self.resolved,
                "norms": dict(self.norms), "warnings": list(self.warnings)}


def boundary_traces(exp: Expansion) -> dict:
    """Psi, d_t Psi and d_n Psi on each edge (coordinate derivatives)."""
    grid, eps = exp.grid, exp.eps
    psi = assemble(exp).values
    lgx, lgy = layer_gradient(exp)
    out = {"psi": {}, "dt": {}, "dn": {}}
    for edge in fd.EDGES:
        coords = fd.edge_coords(grid, edge)
        vals = _edge(psi, edge)
        out["psi"][edge] = vals
        out["dt"][edge] = fd.derivative_1d(coords, vals, 4)
        dn = _edge(lgx if edge.startswith("x") else lgy, edge).copy()
        for i, s in exp.psi.items():
            dn += eps ** i * s.normal_derivative(edge)
        out["dn"][edge] = dn
    return out


def residual_report(spec: ProblemSpec, exp: Expansion, include_full_solve: bool = False) -> ResidualReport:
    grid = exp.grid
    r = interior_residual(exp, spec.f)
    tr = boundary_traces(exp)
    norms = {
        "lr_l2": l2_norm(r),
        "psi_linf_gamma": boundary_linf(tr["psi"]),
        "dt_linf_gamma": boundary_linf(tr["dt"]),
        "dn_linf_gamma": boundary_linf(tr["dn"]),
        "dn_l2_gamma": boundary_l2(tr["dn"], grid),
    }
    c0 = norms["psi_linf_gamma"]
    norms["c_half_gamma"] = math.sqrt(c0 * max(c0, norms["dt_linf_gamma"]))
    warnings = []
    w = layer_resolution_warning(grid, exp.eps)
    if w:
        warnings.append(w)
    if include_full_solve:
        sol = solve_full(spec, grid)
        diff = sol.field - assemble(exp)
        norms["err_linf"] = linf_norm(diff)
        norms["err_h1"] = h1_seminorm(diff)
    return ResidualReport(exp.eps, grid.describe(), exp.variant, norms, w is None, warnings)


@dataclass(frozen=True)
class OrderFit:
    slope: float
    residual: float
    points: int


def estimate_order(points: Sequence[tuple]) -> OrderFit:
    """Least-squares slope of log(norm) against log(eps)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least three points")
    e = np.array([p[0] for p in pts], dtype=float)
    n = np.array([p[1] for p in pts], dtype=float)
    if np.any(n == 0.0):
        raise DegenerateDataError("exact zero among the norms")
    if np.any(n < 0) or np.any(e <= 0) or not np.all(np.isfinite(n)):
        raise ValueError("norms must be positive and finite, eps positive")
    X, Y = np.log(e), np.log(n)
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    return OrderFit(float(coef[0]), float(math.sqrt(np.mean(resid ** 2))), len(pts))


@dataclass(frozen=True)
class SweepReport:
    variant: str
    reports: list
    slopes: dict
    predicted: dict

    def windows(self, width: float = WINDOW) -> dict:
        return {k: (v - width, v + width) for k, v in self.predicted.items()}

    def within(self, width: float = WINDOW) -> dict:
        out = {}
        for k, fit in self.slopes.items():
            if k in self.predicted and fit is not None:
                lo, hi = self.predicted[k] - width, self.predicted[k] + width
                out[k] = lo <= fit.slope <= hi
        return out

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "points": [r.to_dict() for r in self.reports],
            "slopes": {k: (None if v is None else {"slope": v.slope, "fit_residual": v.residual, "points": v.points})
                       for k, v in self.slopes.items()},
            "predicted": dict(self.predicted),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        keys = [k for k in NORMS + ("c_half_gamma",) if any(k in r.norms for r in self.reports)]
        buf = io.StringIO()
        buf.write(",".join(["eps", "resolved"] + keys) + "\n")
        for r in self.reports:
            buf.write(",".join([f"{r.eps:.17g}", str(int(r.resolved))] + [f"{r.norms[k]:.17g}" for k in keys]) + "\n")
        row = ["slope", ""]
        for k in keys:
            fit = self.slopes.get(k)
            row.append("" if fit is None else f"{fit.slope:.17g}")
        buf.write(",".join(row) + "\n")
        return buf.getvalue()


def fit_sweep(variant: str, reports: list) -> SweepReport:
    reports = sorted(reports, key=lambda r: -r.eps)
    used = [r for r in reports if r.resolved]
    slopes = {}
    for k in NORMS + ("c_half_gamma",):
        pts = [(r.eps, r.norms[k]) for r in used if k in r.norms]
        if len(pts) >= 3 and all(p[1] > 0 for p in pts):
            slopes[k] = estimate_order(pts)
        elif pts:
            slopes[k] = None
    return SweepReport(variant, reports, slopes, PREDICTED[variant])


def sweep_point(spec: ProblemSpec, grid: TensorGrid, variant: str, include_full_solve: bool = False) -> ResidualReport:
    exp = build_expansion(spec, grid, variant)
    return residual_report(spec, exp, include_full_solve)


@dataclass(frozen=True)
class StabilityReport:
    ratio: float
    energy_defect: float
    energy_scale: float
    h: float
    trivial: bool

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "energy_defect": self.energy_defect, "energy_scale": self.energy_scale,
                "h": self.h, "trivial": self.trivial}


def _clamped_laplacian(u: Field) -> Field:
    """Nodal Laplacian with zero-Neumann ghosts on every edge."""
    grid = u.grid
    ext = fd.ghost_extension(grid, u.values, {e: np.zeros(fd.edge_coords(grid, e).size) for e in fd.EDGES})
    lap = fd.laplacian_all(grid, fd.Closure()) @ ext.ravel(order="F")
    return Field(grid, lap.reshape(grid.shape, order="F"))


def stability_check(spec: ProblemSpec, grid: TensorGrid) -> StabilityReport:
    """Discrete bound ``|psi|_2 <= |f|_2 / (c c_P^2)`` and the energy identity defect."""
    if not spec.homogeneous:
        raise ValueError("stability check requires homogeneous boundary data")
    fvals = sample(grid, spec.f)
    h = float(max(grid.gx.spacing.max(), grid.gy.spacing.max()))
    fn = l2_norm(fvals)
    if fn == 0.0:
        return StabilityReport(0.0, 0.0, 0.0, h, True)
    psi = solve_full(spec, grid).field
    ratio = l2_norm(psi) * spec.c * POINCARE_SQ / fn
    lap = _clamped_laplacian(psi)
    gx, gy = gradient(psi)
    wx, wy = _trapz_weights(grid.x), _trapz_weights(grid.y)
    pair = lambda a, b: float(wx @ (a * b) @ wy)  # noqa: E731
    lhs = spec.eps * pair(lap.values, lap.values) + spec.c * (pair(gx, gx) + pair(gy, gy))
    rhs = pair(fvals.values, psi.values)
    return StabilityReport(ratio, lhs - rhs, abs(rhs), h, False)


@dataclass(frozen=True)
class WeakLayerReport:
    eps: list
    value_norms: list
    gradient_norms: list
    value_slope: Optional[float]
    gradient_slope: Optional[float]
    trivial: bool

    def to_dict(self) -> dict:
        return {"eps": self.eps, "value_norms": self.value_norms, "gradient_norms": self.gradient_norms,
                "value_slope": self.value_slope, "gradient_slope": self.gradient_slope, "trivial": self.trivial}


def weak_layer_check(spec: ProblemSpec, grid_for: Callable[[float], TensorGrid], eps_list: Sequence[float]) -> WeakLayerReport:
    """Slopes of ``|psi_h - S_h|_inf`` and ``max|grad_h (psi_h - S_h)|`` in eps.

    ``S_h = psi_0 + eps psi_1`` is the smooth part; it needs no compatibility
    conditions.
    """
    from .expansion import build_psi1, _normal_stacks, STACK_DEPTH
    from .profiles import solve_edge_profile

    vals, grads = [], []
    for eps in eps_list:
        grid = grid_for(eps)
        sp = spec.with_eps(eps)
        psi0 = solve_psi0(sp.b, sp.c, sp.f, grid)
        sv, sw = _normal_stacks(psi0)
        b1, b2 = sp.b
        v1 = solve_edge_profile(b1, ExpPoly1D.zero(b1, grid.y.size, STACK_DEPTH), -sv)
        w1 = solve_edge_profile(b2, ExpPoly1D.zero(b2, grid.x.size, STACK_DEPTH), -sw)
        psi1 = build_psi1(psi0, v1, w1, sp.b, sp.c, grid)
        smooth = psi0.field + psi1.field * eps
        d = solve_full(sp, grid).field - smooth
        gx, gy = gradient(d)
        vals.append(linf_norm(d))
        grads.append(float(np.sqrt(gx ** 2 + gy ** 2).max()))
    eps_list = [float(e) for e in eps_list]
    if all(v == 0.0 for v in vals):
        return WeakLayerReport(eps_list, vals, grads, None, None, True)
    vs = estimate_order(list(zip(eps_list, vals))).slope
    gs = estimate_order(list(zip(eps_list, grads))).slope
    return WeakLayerReport(eps_list, vals, grads, vs, gs, False)
