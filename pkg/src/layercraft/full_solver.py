"""Full fourth-order problem ``eps Lap^2 psi + (b.grad) Lap psi - c Lap psi = f``.

Dirichlet data ``g1`` are imposed at boundary nodes, the normal derivative
``g2`` (outward) through one ghost ring folded into the stencil.  Unknowns are
the interior nodes in y-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fd_ops as fd
from .mesh import Field, TensorGrid, sample
from .sparse import CsrMatrix, band_factorize, solve


def _zero(t):
    return 0.0 * np.asarray(t, dtype=float)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients, right-hand side and clamped boundary data.

    ``g1`` / ``g2`` map edge names to functions of the tangential coordinate;
    ``g2`` is the outward normal derivative.  Missing edges mean zero data.
    """

    b: tuple
    c: float
    eps: float
    f: Callable
    g1: dict = field(default_factory=dict)
    g2: dict = field(default_factory=dict)

    def __post_init__(self):
        b = tuple(float(v) for v in self.b)
        if len(b) != 2 or not (b[0] > 0 and b[1] > 0):
            raise ValueError("b must be a pair of positive numbers")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        for name, d in (("g1", self.g1), ("g2", self.g2)):
            unknown = set(d) - set(fd.EDGES)
            if unknown:
                raise ValueError(f"{name}: unknown edges {sorted(unknown)}")
        object.__setattr__(self, "b", b)
        self._check_corners()

    def _check_corners(self, tol: float = 1e-10):
        g = lambda e, t: float(self.g1[e](t)) if e in self.g1 else 0.0  # noqa: E731
        pairs = [
            (("x=0", 0.0), ("y=0", 0.0)), (("x=0", 1.0), ("y=1", 0.0)),
            (("x=1", 0.0), ("y=0", 1.0)), (("x=1", 1.0), ("y=1", 1.0)),
        ]
        for a, bb in pairs:
            va, vb = g(*a), g(*bb)
            if abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
                raise ValueError(f"g1 inconsistent at corner: {a[0]} gives {va}, {bb[0]} gives {vb}")

    def with_eps(self, eps: float) -> "ProblemSpec":
        return ProblemSpec(self.b, self.c, eps, self.f, dict(self.g1), dict(self.g2))

    @property
    def homogeneous(self) -> bool:
        return not self.g1 and not self.g2


@dataclass(frozen=True, eq=False)
class FullSolution:
    field: Field
    metadata: dict

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def _edge_samples(grid: TensorGrid, data: dict, edge: str) -> np.ndarray:
    t = fd.edge_coords(grid, edge)
    fn = data.get(edge)
    if fn is None:
        return np.zeros(t.size)
    v = np.asarray(fn(t), dtype=float) * np.ones(t.size)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite boundary data on {edge}")
    return v


def dirichlet_values(grid: TensorGrid, spec: ProblemSpec) -> np.ndarray:
    u = np.zeros(grid.shape)
    u[0, :] = _edge_samples(grid, spec.g1, "x=0")
    u[-1, :] = _edge_samples(grid, spec.g1, "x=1")
    u[:, 0] = _edge_samples(grid, spec.g1, "y=0")
    u[:, -1] = _edge_samples(grid, spec.g1, "y=1")
    return u


def _full_node_operator(grid: TensorGrid, spec: ProblemSpec, closure: fd.Closure):
    lap_all = fd.laplacian_all(grid, closure)
    lap_int = fd.laplacian_interior(grid)
    outer = spec.eps * lap_int + fd.convection_interior(grid, spec.b)
    return (outer @ lap_all - spec.c * lap_int @ fd.node_selection(grid)).tocsr()


def layer_resolution_warning(grid: TensorGrid, eps: float) -> Optional[str]:
    h = max(grid.gx.spacing[0], grid.gy.spacing[0])
    if h > eps / 2:
        return f"layer under-resolved: first cell {h:.3g} exceeds eps/2 = {eps / 2:.3g}"
    return None


def solve_full(spec: ProblemSpec, grid: TensorGrid) -> FullSolution:
    ext_op = _full_node_operator(grid, spec, fd.Closure())
    G, H = fd.ghost_map(grid, fd.EDGES)
    A, B = fd.restrict_to_interior(grid, (ext_op @ G).tocsr())
    fvals = sample(grid, spec.f).values
    ub = dirichlet_values(grid, spec)
    mask = fd.interior_mask(grid).ravel(order="F")
    gdata = np.concatenate([_edge_samples(grid, spec.g2, e) for e in fd.EDGES])
    rhs = fvals[1:-1, 1:-1].ravel(order="F") - B @ ub.ravel(order="F")[~mask] - ext_op @ (H @ gdata)
    lu = band_factorize(CsrMatrix.from_scipy(A))
    u = solve(lu, rhs)
    vals = ub.copy()
    vals[1:-1, 1:-1] = u.reshape((grid.gx.N - 1, grid.gy.N - 1), order="F")
    meta = {"grid": grid.describe(), "eps": spec.eps, "b": list(spec.b), "c": spec.c, "warnings": []}
    w = layer_resolution_warning(grid, spec.eps)
    if w:
        meta["warnings"].append(w)
    return FullSolution(Field(grid, vals), meta)


def apply_full_operator(spec: ProblemSpec, u: Field, neumann: Optional[dict] = None) -> Field:
    """Nodal ``L_h u`` at interior nodes (zero on the boundary).

    Without ``neumann`` the Laplacian on boundary nodes uses six-point one-sided
    differences, so no boundary condition is assumed.  With ``neumann`` (edge ->
    outward normal derivative samples) all four edges use the ghost rule.
    """
    grid = u.grid
    if neumann is None:
        closure = fd.Closure("onesided", "onesided", "onesided", "onesided")
        ext = fd.ghost_extension(grid, u.values, {})
    else:
        closure = fd.Closure()
        ext = fd.ghost_extension(grid, u.values, {e: neumann.get(e, np.zeros(fd.edge_coords(grid, e).size)) for e in fd.EDGES})
    op = _full_node_operator(grid, spec, closure)
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = (op @ ext.ravel(order="F")).reshape((grid.gx.N - 1, grid.gy.N - 1), order="F")
    return Field(grid, out)


POINCARE_SQ = 2.0 * math.pi ** 2
