"""Third-order reduced problem ``(b.grad) Lap psi - c Lap psi = f``.

Boundary data: Dirichlet values on all four edges and the normal derivative on
the inflow edges x=1 and y=1.  The third-order operator is discretized as the
first-derivative stencil applied to nodal Laplacian values.  The Laplacian on
the x=1 / y=1 edges uses a ghost layer fixed by the Neumann data; next to x=0
and y=0 (where no Neumann data exists) the outer derivative is a one-sided
forward difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import fd_ops as fd
from .mesh import Field, TensorGrid
from .sparse import CsrMatrix, band_factorize, solve

_REDUCED_CLOSURE = fd.Closure(x0="onesided", x1="ghost", y0="onesided", y1="ghost")
_INFLOW = ("x=1", "y=1")


class WellPosednessError(ValueError):
    """Boundary data violate the corner compatibility conditions."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _endpoint_slope(fn: Callable, at: float, inward: float) -> float:
    # fourth-order one-sided difference with a small fixed step, independent of any grid
    h = 1e-3
    xs = at + inward * h * np.arange(5)
    w = fd.fornberg_weights(at, xs, 1)[1]
    return float(w @ np.asarray([fn(float(s)) for s in xs], dtype=float))


@dataclass(frozen=True, eq=False)
class EdgeFunction:
    """Boundary function sampled at edge nodes, with its end-point slopes."""

    values: np.ndarray
    slope0: float
    slope1: float

    @classmethod
    def from_callable(cls, fn: Callable[[float], float], coords: np.ndarray) -> "EdgeFunction":
        vals = np.array([fn(float(t)) for t in coords], dtype=float)
        return cls(vals, _endpoint_slope(fn, 0.0, 1.0), _endpoint_slope(fn, 1.0, -1.0))

    @classmethod
    def zeros(cls, n: int) -> "EdgeFunction":
        return cls(np.zeros(n), 0.0, 0.0)

    def __neg__(self):
        return EdgeFunction(-self.values, -self.slope0, -self.slope1)

    def __add__(self, other):
        return EdgeFunction(self.values + other.values, self.slope0 + other.slope0, self.slope1 + other.slope1)

    def scale(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))


@dataclass(frozen=True, eq=False)
class ReducedBoundaryData:
    """psi(0,y)=phi1, psi(1,y)=phi2, psi_x(1,y)=phi3, psi(x,0)=kappa1, psi(x,1)=kappa2, psi_y(x,1)=kappa3."""

    phi1: EdgeFunction
    phi2: EdgeFunction
    phi3: EdgeFunction
    kappa1: EdgeFunction
    kappa2: EdgeFunction
    kappa3: EdgeFunction

    @classmethod
    def zeros(cls, grid: TensorGrid) -> "ReducedBoundaryData":
        ny, nx = grid.gy.N + 1, grid.gx.N + 1
        z = EdgeFunction.zeros
        return cls(z(ny), z(ny), z(ny), z(nx), z(nx), z(nx))

    @classmethod
    def from_callables(cls, grid: TensorGrid, phi1, phi2, phi3, kappa1, kappa2, kappa3):
        fy = lambda fn: EdgeFunction.from_callable(fn, grid.y)  # noqa: E731
        fx = lambda fn: EdgeFunction.from_callable(fn, grid.x)  # noqa: E731
        return cls(fy(phi1), fy(phi2), fy(phi3), fx(kappa1), fx(kappa2), fx(kappa3))

    def scale(self) -> float:
        return max(f.scale() for f in (self.phi1, self.phi2, self.phi3, self.kappa1, self.kappa2, self.kappa3))


@dataclass(frozen=True)
class CornerReport:
    residuals: dict
    tol: float
    passed: bool


def check_corner_compatibility(data: ReducedBoundaryData, tol: float) -> CornerReport:
    """Evaluate the eight corner equalities of the reduced boundary data."""
    p1, p2, p3, k1, k2, k3 = data.phi1, data.phi2, data.phi3, data.kappa1, data.kappa2, data.kappa3
    res = {
        "phi1(0)-kappa1(0)": p1.values[0] - k1.values[0],
        "phi1(1)-kappa2(0)": p1.values[-1] - k2.values[0],
        "kappa1(1)-phi2(0)": k1.values[-1] - p2.values[0],
        "phi2(1)-kappa2(1)": p2.values[-1] - k2.values[-1],
        "kappa1'(1)-phi3(0)": k1.slope1 - p3.values[0],
        "phi1'(1)-kappa3(0)": p1.slope1 - k3.values[0],
        "kappa2'(1)-phi3(1)": k2.slope1 - p3.values[-1],
        "phi2'(1)-kappa3(1)": p2.slope1 - k3.values[-1],
    }
    res = {k: float(v) for k, v in res.items()}
    return CornerReport(res, tol, all(abs(v) <= tol for v in res.values()))


@dataclass(frozen=True, eq=False)
class ReducedSolution:
    """Nodal solution of the reduced problem together with the data that fixed its ghosts."""

    field: Field
    data: ReducedBoundaryData
    b: tuple
    c: float

    @property
    def grid(self) -> TensorGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def extended(self) -> np.ndarray:
        return fd.ghost_extension(
            self.grid, self.field.values, {"x=1": self.data.phi3.values, "y=1": self.data.kappa3.values}
        )

    def normal_derivative(self, edge: str) -> np.ndarray:
        """d/dx (x-edges) or d/dy (y-edges); imposed data on the inflow edges."""
        if edge == "x=1":
            return self.data.phi3.values.copy()
        if edge == "y=1":
            return self.data.kappa3.values.copy()
        return fd.normal_derivative_trace(self.field, edge, 4).normal


class _Operators:
    """Extended-vector operators shared by the reduced solve and its consumers."""

    def __init__(self, grid: TensorGrid, b, c: float):
        self.grid = grid
        lap_all = fd.laplacian_all(grid, _REDUCED_CLOSURE)
        self.third = (fd.convection_interior(grid, b, onesided_low=True) @ lap_all).tocsr()
        self.second = (fd.laplacian_interior(grid) @ fd.node_selection(grid)).tocsr()
        self.reduced = (self.third - c * self.second).tocsr()
        self.bih = (fd.laplacian_interior(grid) @ lap_all).tocsr()


_OPS_CACHE: dict = {}


def _ops(grid: TensorGrid, b, c: float) -> _Operators:
    key = (grid.gx, grid.gy, float(b[0]), float(b[1]), float(c))
    ops = _OPS_CACHE.get(key)
    if ops is None:
        if len(_OPS_CACHE) > 16:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[key] = _Operators(grid, b, c)
    return ops


def _interior_to_field(grid: TensorGrid, v: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = v.reshape((grid.gx.N - 1, grid.gy.N - 1), order="F")
    return out


def apply_reduced(sol: ReducedSolution) -> Field:
    """``(b.grad) Lap - c Lap`` at interior nodes (zero on the boundary)."""
    ops = _ops(sol.grid, sol.b, sol.c)
    return Field(sol.grid, _interior_to_field(sol.grid, ops.reduced @ sol.extended().ravel(order="F")))


def nodal_biharmonic(sol: ReducedSolution) -> Field:
    """Lap(Lap psi) at interior nodes with the reduced-problem boundary closure."""
    ops = _ops(sol.grid, sol.b, sol.c)
    return Field(sol.grid, _interior_to_field(sol.grid, ops.bih @ sol.extended().ravel(order="F")))


def _boundary_values(grid: TensorGrid, data: ReducedBoundaryData) -> np.ndarray:
    u = np.zeros(grid.shape)
    u[0, :] = data.phi1.values
    u[-1, :] = data.phi2.values
    u[:, 0] = data.kappa1.values
    u[:, -1] = data.kappa2.values
    return u


def solve_reduced(b, c: float, f, data: ReducedBoundaryData, grid: TensorGrid,
                  compat_tol: Optional[float] = None, check: bool = True) -> ReducedSolution:
    """Solve the reduced problem; ``f`` is a callable ``f(x, y)`` or a Field of nodal values."""
    if b[0] <= 0 or b[1] <= 0:
        raise ValueError("convection components must be positive")
    if c < 0:
        raise ValueError("c must be non-negative")
    fvals = f.values if isinstance(f, Field) else _sample_rhs(grid, f)
    if check:
        scale = max(1.0, data.scale())
        tol = 1e-8 * scale if compat_tol is None else compat_tol
        rep = check_corner_compatibility(data, tol)
        if not rep.passed:
            worst = max(rep.residuals, key=lambda k: abs(rep.residuals[k]))
            raise WellPosednessError(
                f"corner compatibility violated: {worst} = {rep.residuals[worst]:.3e}", rep
            )
    ops = _ops(grid, b, c)
    G, H = fd.ghost_map(grid, _INFLOW)
    node_op = (ops.reduced @ G).tocsr()
    A, B = fd.restrict_to_interior(grid, node_op)
    ub = _boundary_values(grid, data)
    mask = fd.interior_mask(grid)
    gdata = np.concatenate([data.phi3.values, data.kappa3.values])
    rhs = fvals[1:-1, 1:-1].ravel(order="F") - B @ ub.ravel(order="F")[~mask.ravel(order="F")] - ops.reduced @ (H @ gdata)
    lu = band_factorize(CsrMatrix.from_scipy(A))
    u = solve(lu, rhs)
    vals = ub.copy()
    vals[1:-1, 1:-1] = u.reshape((grid.gx.N - 1, grid.gy.N - 1), order="F")
    return ReducedSolution(Field(grid, vals), data, (float(b[0]), float(b[1])), float(c))


def solve_psi0(b, c: float, f, grid: TensorGrid) -> ReducedSolution:
    return solve_reduced(b, c, f, ReducedBoundaryData.zeros(grid), grid)


def _sample_rhs(grid: TensorGrid, f) -> np.ndarray:
    from .mesh import sample

    return sample(grid, f).values
