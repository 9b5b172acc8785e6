"""Asymptotic expansion: interior terms, edge and corner layer profiles.

The with-compat expansion is

    Psi = sum_{i<=2} eps^i psi_i + sum_{i<=4} eps^i (v_i + w_i) + sum_{2<=i<=4} eps^i z_i

and the no-compat variant keeps psi_0, psi_1, v_1..v_3, w_1..w_3, z_2, z_3.
Edge profiles at x=0 are ``v`` (stretched variable x/eps), at y=0 ``w``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fd_ops as fd
from .full_solver import ProblemSpec
from .mesh import Field, TensorGrid, sample
from .profiles import (
    ExpPoly1D,
    ExpPoly2D,
    SolvabilityReport,
    edge_operator_terms,
    realize,
    solve_corner_profile,
    solve_corner_z3,
    solve_edge_profile,
)
from .reduced import (
    EdgeFunction,
    ReducedBoundaryData,
    ReducedSolution,
    WellPosednessError,
    nodal_biharmonic,
    solve_psi0,
    solve_reduced,
)

STACK_DEPTH = 7
FIT_DEGREE = 24
FD_DEPTH = 3
VARIANTS = ("with-compat", "no-compat")
COMPCOND1 = "compcond1: (b.grad) psi0_xy(0,0) - c psi0_xy(0,0) = 0"


class CompatibilityError(ValueError):
    """The with-compat expansion was requested for data failing the compatibility checks."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def derivative_stack(coords: np.ndarray, values: np.ndarray, depth: int = STACK_DEPTH) -> np.ndarray:
    """Rows 0..depth: the data and its tangential derivatives.

    Rows up to ``FD_DEPTH`` use order-4 finite differences.  Deeper rows
    differentiate a Chebyshev least-squares fit of the last FD row, since
    repeated differences on fine layer cells amplify round-off.
    """
    values = np.asarray(values, dtype=float)
    rows = [values.copy()]
    for _ in range(min(depth, FD_DEPTH)):
        rows.append(fd.derivative_1d(coords, rows[-1], 4))
    if depth > FD_DEPTH:
        deg = min(FIT_DEGREE, coords.size - 1)
        cheb = np.polynomial.Chebyshev.fit(coords, rows[-1], deg, domain=[0.0, 1.0])
        for k in range(1, depth - FD_DEPTH + 1):
            rows.append(cheb.deriv(k)(coords))
    return np.array(rows)


def _normal_stacks(sol: ReducedSolution) -> tuple[np.ndarray, np.ndarray]:
    """psi_x(0,y) and psi_y(x,0) stacks with the corner quantities made consistent."""
    grid = sol.grid
    sv = derivative_stack(grid.y, sol.normal_derivative("x=0"))
    sw = derivative_stack(grid.x, sol.normal_derivative("y=0"))
    # psi_y vanishes on y=1 and psi_x on x=1, so the mixed derivative does too
    sv[1, -1] = 0.0
    sw[1, -1] = 0.0
    mixed = 0.5 * (sv[1, 0] + sw[1, 0])
    sv[1, 0] = sw[1, 0] = mixed
    return sv, sw


@dataclass(frozen=True)
class CompatReport:
    residuals: dict
    scale: float
    tol: float
    trace_tol: float
    flags: dict

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def failures(self) -> list:
        return [k for k, ok in self.flags.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "scale": self.scale,
            "tol": self.tol,
            "trace_tol": self.trace_tol,
            "residuals": dict(self.residuals),
            "flags": dict(self.flags),
        }


_TRACE_CONDITIONS = ("compcond1", "compcond2", "compcond3_x", "compcond3_y")


def check_compatibility(psi0: ReducedSolution, f, b, c: float, tol: float = 1e-6,
                        trace_tol: float = 1e-2) -> CompatReport:
    """Evaluate the corner compatibility conditions for the with-compat expansion.

    Residuals are reported relative to ``max|f|`` at the nodes.  The induced
    conditions on f are exact evaluations and use ``tol``; the psi0 conditions
    come from differentiated traces of the discrete solution and use
    ``trace_tol``.
    """
    grid = psi0.grid
    fvals = f.values if isinstance(f, Field) else sample(grid, f).values
    scale = float(np.abs(fvals).max(initial=0.0))
    sv, sw = _normal_stacks(psi0)
    xy, xyy, xxy = sv[1, 0], sv[2, 0], sw[2, 0]
    raw = {
        "compcond1": b[0] * xxy + b[1] * xyy - c * xy,
        "compcond2": xy,
        "compcond3_x": sv[2, -1],
        "compcond3_y": sw[2, -1],
        "f(0,1)": fvals[0, -1],
        "f(1,0)": fvals[-1, 0],
    }
    if b[0] == b[1]:
        raw["f(0,0)"] = fvals[0, 0]
    if scale == 0.0:
        res = {k: 0.0 if v == 0 else float("inf") for k, v in raw.items()}
    else:
        res = {k: float(abs(v) / scale) for k, v in raw.items()}
    flags = {k: res[k] <= (trace_tol if k in _TRACE_CONDITIONS else tol) for k in res}
    return CompatReport(res, scale, tol, trace_tol, flags)


@dataclass(eq=False)
class Expansion:
    variant: str
    eps: float
    b: tuple
    c: float
    grid: TensorGrid
    psi: dict  # i -> ReducedSolution
    v: dict
    w: dict
    z: dict
    compat: Optional[CompatReport] = None
    corner_reports: dict = field(default_factory=dict)
    stacks: dict = field(default_factory=dict, repr=False)

    def psi_field(self, i: int) -> Field:
        s = self.psi.get(i)
        return s.field if s is not None else Field.zeros(self.grid)

    def metadata(self) -> dict:
        terms = {}
        for name, fam in (("v", self.v), ("w", self.w), ("z", self.z)):
            for i, p in sorted(fam.items()):
                terms[f"{name}{i}"] = p.metadata()
        meta = {
            "variant": self.variant,
            "eps": self.eps,
            "b": list(self.b),
            "c": self.c,
            "grid": self.grid.describe(),
            "psi": sorted(self.psi),
            "terms": terms,
            "corner": {k: {"solvable": r.solvable, "residual": r.residual, "neumann_imposed": r.neumann_imposed}
                       for k, r in sorted(self.corner_reports.items())},
        }
        if self.compat is not None:
            meta["compat"] = self.compat.to_dict()
        return meta

    def to_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _edge_data_from_profile(values_row: np.ndarray, slope_row: np.ndarray) -> EdgeFunction:
    return EdgeFunction(-values_row, -float(slope_row[0]), -float(slope_row[-1]))


def _outflow_data(grid: TensorGrid, eps: float, vv: ExpPoly1D, ww: ExpPoly1D, zz: Optional[ExpPoly2D]):
    """Dirichlet data -(v + w + z) on x=0 and y=0, with end-point slopes."""
    total = realize(vv, eps, grid, "x").values + realize(ww, eps, grid, "y").values
    dy = realize(vv, eps, grid, "x", dy=1).values + realize(ww, eps, grid, "y", dy=1).values
    dx = realize(vv, eps, grid, "x", dx=1).values + realize(ww, eps, grid, "y", dx=1).values
    if zz is not None:
        total = total + realize(zz, eps, grid).values
        dy = dy + realize(zz, eps, grid, dy=1).values
        dx = dx + realize(zz, eps, grid, dx=1).values
    phi1 = EdgeFunction(-total[0, :], -float(dy[0, 0]), -float(dy[0, -1]))
    kappa1 = EdgeFunction(-total[:, 0], -float(dx[0, 0]), -float(dx[-1, 0]))
    return phi1, kappa1


def _reduced_data(grid: TensorGrid, phi1: EdgeFunction, kappa1: EdgeFunction) -> ReducedBoundaryData:
    z = ReducedBoundaryData.zeros(grid)
    return ReducedBoundaryData(phi1, z.phi2, z.phi3, kappa1, z.kappa2, z.kappa3)


def build_psi1(psi0: ReducedSolution, v1: ExpPoly1D, w1: ExpPoly1D, b, c: float, grid: TensorGrid,
               tol: Optional[float] = None) -> ReducedSolution:
    """Interior correction removing the Dirichlet misfit of v1 and w1."""
    phi1 = _edge_data_from_profile(v1.coeffs[0, 0], v1.coeffs[0, 1])
    kappa1 = _edge_data_from_profile(w1.coeffs[0, 0], w1.coeffs[0, 1])
    rhs = -nodal_biharmonic(psi0)
    return solve_reduced(b, c, rhs, _reduced_data(grid, phi1, kappa1), grid, compat_tol=tol)


def build_psi2(psi1: ReducedSolution, v2: ExpPoly1D, w2: ExpPoly1D, z2: ExpPoly2D, b, c: float,
               grid: TensorGrid, eps: float, compat: CompatReport) -> ReducedSolution:
    """Interior correction for v2, w2, z2; refused unless ``compat`` passed."""
    if not compat.passed:
        raise CompatibilityError(
            "compatibility conditions fail (" + ", ".join(compat.failures()) + "); psi2 is not constructed",
            compat,
        )
    phi1, kappa1 = _outflow_data(grid, eps, v2, w2, z2)
    rhs = -nodal_biharmonic(psi1)
    tol = compat.trace_tol * max(compat.scale, 1e-300)
    return solve_reduced(b, c, rhs, _reduced_data(grid, phi1, kappa1), grid, compat_tol=tol)


def _edge_rhs(family: dict, i: int, bn: float, bt: float, c: float) -> ExpPoly1D:
    """Right-hand side for profile i collected from lower profiles: -sum_m D_m v_{i+m+3}."""
    rate = family[1].rate
    acc = None
    for m in (-2, -1, 0):
        j = i - 3 - m  # D_m v_j contributes at the order of v_i
        if j < 1 or j not in family:
            continue
        term = edge_operator_terms(family[j], bn, bt, c)[m]
        acc = term if acc is None else acc + term
    if acc is None:
        return ExpPoly1D.zero(rate, family[1].n, STACK_DEPTH)
    return -acc


def build_expansion(spec: ProblemSpec, grid: TensorGrid, variant: str = "with-compat",
                    tol: float = 1e-6, trace_tol: float = 1e-2,
                    psi0: Optional[ReducedSolution] = None) -> Expansion:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    b, c, eps = spec.b, spec.c, spec.eps
    b1, b2 = b
    if psi0 is None:
        psi0 = solve_psi0(b, c, spec.f, grid)
    compat = None
    if variant == "with-compat":
        compat = check_compatibility(psi0, spec.f, b, c, tol, trace_tol)
        if not compat.passed:
            raise CompatibilityError(
                "with-compat expansion refused: " + ", ".join(compat.failures()), compat
            )
    stacks = {}
    sv0, sw0 = _normal_stacks(psi0)
    stacks[0] = (sv0, sw0)
    ny, nx = grid.y.size, grid.x.size
    v = {1: solve_edge_profile(b1, ExpPoly1D.zero(b1, ny, STACK_DEPTH), -sv0)}
    w = {1: solve_edge_profile(b2, ExpPoly1D.zero(b2, nx, STACK_DEPTH), -sw0)}
    reports = {}
    z2, reports[2] = solve_corner_profile(b, c, None, -v[1].dt().at(0), -w[1].dt().at(0), max_degree=2)
    z = {2: z2}

    psi1 = build_psi1(psi0, v[1], w[1], b, c, grid)
    sv1, sw1 = _normal_stacks(psi1)
    stacks[1] = (sv1, sw1)
    v[2] = solve_edge_profile(b1, _edge_rhs(v, 2, b1, b2, c), -sv1)
    w[2] = solve_edge_profile(b2, _edge_rhs(w, 2, b2, b1, c), -sw1)
    psi = {0: psi0, 1: psi1}

    if variant == "with-compat":
        z3, rep3 = solve_corner_z3(b, c, z2, -v[2].dt().at(0), -w[2].dt().at(0), trace_tol,
                                   compat.scale, condition=COMPCOND1)
        reports[3] = rep3
        if not rep3.solvable:
            raise CompatibilityError(f"corner term z3 has no solution ({COMPCOND1})", compat)
        z[3] = z3
        psi2 = build_psi2(psi1, v[2], w[2], z2, b, c, grid, eps, compat)
        psi[2] = psi2
        sv2, sw2 = _normal_stacks(psi2)
        stacks[2] = (sv2, sw2)
        nv3, nw3 = -sv2, -sw2
    else:
        a = z2.coeffs[0, 0]
        k = -c * a / (b1 + b2)
        z[3] = ExpPoly2D(b, np.array([[0.0, k], [k, 0.0]]))
        nv3, nw3 = np.zeros((STACK_DEPTH + 1, ny)), np.zeros((STACK_DEPTH + 1, nx))
    v[3] = solve_edge_profile(b1, _edge_rhs(v, 3, b1, b2, c), nv3)
    w[3] = solve_edge_profile(b2, _edge_rhs(w, 3, b2, b1, c), nw3)

    if variant == "with-compat":
        v[4] = solve_edge_profile(b1, _edge_rhs(v, 4, b1, b2, c), np.zeros((STACK_DEPTH + 1, ny)))
        w[4] = solve_edge_profile(b2, _edge_rhs(w, 4, b2, b1, c), np.zeros((STACK_DEPTH + 1, nx)))
        z[4], reports[4] = solve_corner_profile(b, c, z[3], None, None, max_degree=4,
                                                 require_neumann=False)
    return Expansion(variant, eps, b, c, grid, psi, v, w, z, compat, reports, stacks)


def assemble(exp: Expansion, grid: Optional[TensorGrid] = None) -> Field:
    """Nodal values of Psi."""
    grid = grid or exp.grid
    eps = exp.eps
    total = np.zeros(grid.shape)
    for i, s in exp.psi.items():
        total += eps ** i * s.values
    for i, p in exp.v.items():
        total += eps ** i * realize(p, eps, grid, "x").values
    for i, p in exp.w.items():
        total += eps ** i * realize(p, eps, grid, "y").values
    for i, p in exp.z.items():
        total += eps ** i * realize(p, eps, grid).values
    return Field(grid, total)


def layer_gradient(exp: Expansion) -> tuple[np.ndarray, np.ndarray]:
    """Exact x- and y-derivatives of the summed layer terms at the nodes."""
    grid, eps = exp.grid, exp.eps
    gx = np.zeros(grid.shape)
    gy = np.zeros(grid.shape)
    for i, p in exp.v.items():
        gx += eps ** i * realize(p, eps, grid, "x", dx=1).values
        gy += eps ** i * realize(p, eps, grid, "x", dy=1).values
    for i, p in exp.w.items():
        gx += eps ** i * realize(p, eps, grid, "y", dx=1).values
        gy += eps ** i * realize(p, eps, grid, "y", dy=1).values
    for i, p in exp.z.items():
        gx += eps ** i * realize(p, eps, grid, dx=1).values
        gy += eps ** i * realize(p, eps, grid, dy=1).values
    return gx, gy


def fields_csv(exp: Expansion) -> str:
    """Flat CSV of the nodal interior terms and the assembled Psi."""
    grid = exp.grid
    X, Y = grid.mesh()
    cols = {"x": X, "y": Y}
    for i in sorted(exp.psi):
        cols[f"psi{i}"] = exp.psi[i].values
    cols["Psi"] = assemble(exp).values
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    arrs = [a.ravel(order="F") for a in cols.values()]
    for row in zip(*arrs):
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()
