"""Finite-difference stencils on tensor grids.

All second-order operators are built from three-point nonuniform stencils
(exact on quadratics).  Boundary closures are selected per edge:

* ``"ghost"``   - one mirrored ghost node outside the edge, whose value comes
                  from a Neumann condition (see :func:`ghost_extension`);
* ``"onesided"`` - six-point one-sided second derivatives (exact on quintics),
                  used when no normal-derivative data is available.

Vectors over the grid nodes use y-major lexicographic ordering
``k = i + j * (Nx + 1)``, i.e. ``values.ravel(order="F")``.  The *extended*
node set adds one ghost ring, indices ``-1 .. N+1`` on each axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Field, Grid1D, TensorGrid
from .sparse import CsrMatrix

EDGES = ("x=0", "x=1", "y=0", "y=1")


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights at ``z`` over nodes ``x`` for derivatives ``0..m``.

    Returns an array ``c`` of shape ``(m + 1, len(x))``; ``c[k] @ f(x)`` approximates
    the k-th derivative at ``z`` and is exact on polynomials of degree ``len(x) - 1``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def extended_nodes(g: Grid1D) -> np.ndarray:
    """Nodes with one mirrored ghost on each side."""
    x = g.nodes
    return np.concatenate([[-(x[1] - x[0])], x, [2.0 - x[-2]]])


def _d2_rows(g: Grid1D, left: str, right: str) -> sp.csr_matrix:
    """Second derivative at nodes 0..N from extended values (-1..N+1)."""
    xe = extended_nodes(g)
    N = g.N
    rows, cols, vals = [], [], []
    for i in range(N + 1):
        if (i == 0 and left == "onesided") or (i == N and right == "onesided"):
            idx = np.arange(0, 6) if i == 0 else np.arange(N - 5, N + 1)
            w = fornberg_weights(g.nodes[i], g.nodes[idx], 2)[2]
            cols_i = idx + 1
        else:
            e = i + 1
            w = fornberg_weights(xe[e], xe[e - 1:e + 2], 2)[2]
            cols_i = np.arange(e - 1, e + 2)
        rows.extend([i] * len(cols_i))
        cols.extend(cols_i)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N + 1, N + 3))


def _d1_interior(g: Grid1D, left: str) -> sp.csr_matrix:
    """First derivative at interior nodes 1..N-1 from node values 0..N.

    ``left="onesided"`` replaces the row at node 1 by a forward three-point
    difference over nodes 1, 2, 3.
    """
    x = g.nodes
    N = g.N
    rows, cols, vals = [], [], []
    for i in range(1, N):
        idx = np.arange(1, 4) if (i == 1 and left == "onesided") else np.arange(i - 1, i + 2)
        w = fornberg_weights(x[i], x[idx], 1)[1]
        rows.extend([i - 1] * 3)
        cols.extend(idx)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N - 1, N + 1))


def _d2_interior(g: Grid1D) -> sp.csr_matrix:
    x = g.nodes
    N = g.N
    rows, cols, vals = [], [], []
    for i in range(1, N):
        w = fornberg_weights(x[i], x[i - 1:i + 2], 2)[2]
        rows.extend([i - 1] * 3)
        cols.extend([i - 1, i, i + 1])
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N - 1, N + 1))


def _select(n_out: int, n_in: int, offset: int) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(n_out), (np.arange(n_out), np.arange(n_out) + offset)), shape=(n_out, n_in))


@dataclass(frozen=True)
class Closure:
    """Boundary closure for the inner Laplacian, one entry per edge."""

    x0: str = "ghost"
    x1: str = "ghost"
    y0: str = "ghost"
    y1: str = "ghost"


def laplacian_all(grid: TensorGrid, closure: Closure) -> sp.csr_matrix:
    """Discrete Laplacian at every grid node, acting on extended values."""
    gx, gy = grid.gx, grid.gy
    D2x = _d2_rows(gx, closure.x0, closure.x1)
    D2y = _d2_rows(gy, closure.y0, closure.y1)
    Sx = _select(gx.N + 1, gx.N + 3, 1)
    Sy = _select(gy.N + 1, gy.N + 3, 1)
    return (sp.kron(Sy, D2x) + sp.kron(D2y, Sx)).tocsr()


def laplacian_interior(grid: TensorGrid) -> sp.csr_matrix:
    """Five-point Laplacian at interior nodes from values at all nodes."""
    gx, gy = grid.gx, grid.gy
    Sx = _select(gx.N - 1, gx.N + 1, 1)
    Sy = _select(gy.N - 1, gy.N + 1, 1)
    return (sp.kron(Sy, _d2_interior(gx)) + sp.kron(_d2_interior(gy), Sx)).tocsr()


def convection_interior(grid: TensorGrid, b, onesided_low: bool = False) -> sp.csr_matrix:
    """``b1 d/dx + b2 d/dy`` at interior nodes from values at all nodes."""
    gx, gy = grid.gx, grid.gy
    left = "onesided" if onesided_low else "central"
    Sx = _select(gx.N - 1, gx.N + 1, 1)
    Sy = _select(gy.N - 1, gy.N + 1, 1)
    return (b[0] * sp.kron(Sy, _d1_interior(gx, left)) + b[1] * sp.kron(_d1_interior(gy, left), Sx)).tocsr()


def node_selection(grid: TensorGrid) -> sp.csr_matrix:
    """Restriction from extended values to the grid nodes."""
    gx, gy = grid.gx, grid.gy
    return sp.kron(_select(gy.N + 1, gy.N + 3, 1), _select(gx.N + 1, gx.N + 3, 1)).tocsr()


def interior_selection(grid: TensorGrid) -> sp.csr_matrix:
    gx, gy = grid.gx, grid.gy
    return sp.kron(_select(gy.N - 1, gy.N + 1, 1), _select(gx.N - 1, gx.N + 1, 1)).tocsr()


def ext_index(grid: TensorGrid, i, j):
    """Flat index of node ``(i, j)`` (ghosts at -1 and N+1) in the extended vector."""
    return (np.asarray(i) + 1) + (np.asarray(j) + 1) * (grid.gx.N + 3)


def ghost_extension(grid: TensorGrid, values: np.ndarray, neumann: dict) -> np.ndarray:
    """Extended nodal array (shape ``(Nx+3, Ny+3)``) with ghosts from Neumann data.

    ``neumann`` maps an edge name to an array of *outward* normal derivatives
    along that edge; the ghost is ``u_inner + 2 h g`` with ``h`` the first cell
    width next to the edge.  Edges without data get zero ghosts.
    """
    nx, ny = grid.shape
    ext = np.zeros((nx + 2, ny + 2))
    ext[1:-1, 1:-1] = values
    x, y = grid.x, grid.y
    if "x=0" in neumann:
        ext[0, 1:-1] = values[1, :] + 2.0 * (x[1] - x[0]) * np.asarray(neumann["x=0"])
    if "x=1" in neumann:
        ext[-1, 1:-1] = values[-2, :] + 2.0 * (x[-1] - x[-2]) * np.asarray(neumann["x=1"])
    if "y=0" in neumann:
        ext[1:-1, 0] = values[:, 1] + 2.0 * (y[1] - y[0]) * np.asarray(neumann["y=0"])
    if "y=1" in neumann:
        ext[1:-1, -1] = values[:, -2] + 2.0 * (y[-1] - y[-2]) * np.asarray(neumann["y=1"])
    return ext


def ghost_map(grid: TensorGrid, edges) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse maps ``ext = G @ u_nodes + H @ g`` for the ghost rule on ``edges``.

    ``g`` stacks the outward normal-derivative data of the listed edges (in the
    given order), each sampled at that edge's nodes.
    """
    nx, ny = grid.shape
    n_ext = (nx + 2) * (ny + 2)
    rows, cols, vals = [], [], []
    hrows, hcols, hvals = [], [], []
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    node = (ii + jj * nx).ravel(order="F")
    rows.extend(ext_index(grid, ii, jj).ravel(order="F"))
    cols.extend(node)
    vals.extend(np.ones(node.size))
    offset = 0
    x, y = grid.x, grid.y
    for edge in edges:
        if edge in ("x=0", "x=1"):
            jn = np.arange(ny)
            if edge == "x=0":
                gi, inner, h = -1, 1, x[1] - x[0]
            else:
                gi, inner, h = nx, nx - 2, x[-1] - x[-2]
            rows.extend(ext_index(grid, gi, jn))
            cols.extend(inner + jn * nx)
            vals.extend(np.ones(ny))
            hrows.extend(ext_index(grid, gi, jn))
            hcols.extend(offset + jn)
            hvals.extend(np.full(ny, 2.0 * h))
            offset += ny
        else:
            im = np.arange(nx)
            if edge == "y=0":
                gj, inner, h = -1, 1, y[1] - y[0]
            else:
                gj, inner, h = ny, ny - 2, y[-1] - y[-2]
            rows.extend(ext_index(grid, im, gj))
            cols.extend(im + inner * nx)
            vals.extend(np.ones(nx))
            hrows.extend(ext_index(grid, im, gj))
            hcols.extend(offset + im)
            hvals.extend(np.full(nx, 2.0 * h))
            offset += nx
    G = sp.csr_matrix((vals, (rows, cols)), shape=(n_ext, nx * ny))
    H = sp.csr_matrix((hvals, (hrows, hcols)), shape=(n_ext, offset))
    return G, H


def interior_mask(grid: TensorGrid) -> np.ndarray:
    nx, ny = grid.shape
    m = np.zeros((nx, ny), dtype=bool)
    m[1:-1, 1:-1] = True
    return m


def restrict_to_interior(grid: TensorGrid, M: sp.spmatrix) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Split a node-space operator into interior-unknown and boundary-data parts."""
    mask = interior_mask(grid).ravel(order="F")
    M = sp.csc_matrix(M)
    return M[:, np.flatnonzero(mask)].tocsr(), M[:, np.flatnonzero(~mask)].tocsr()


@dataclass(frozen=True, eq=False)
class StencilOperator:
    """Assembled operator on interior unknowns plus its boundary-data coupling.

    ``matrix`` acts on interior node values (y-major); ``node_matrix`` maps all
    nodal values (boundary included, ghosts eliminated by ``consumed``) to the
    interior outputs.
    """

    grid: TensorGrid
    matrix: CsrMatrix
    node_matrix: sp.csr_matrix = field(repr=False)
    consumed: str = "dirichlet"

    def apply(self, u: Field) -> Field:
        out = np.zeros(self.grid.shape)
        out[1:-1, 1:-1] = (self.node_matrix @ u.values.ravel(order="F")).reshape(
            (self.grid.gx.N - 1, self.grid.gy.N - 1), order="F"
        )
        return Field(self.grid, out)


def _clamped_node_map(grid: TensorGrid) -> sp.csr_matrix:
    """Extended values from nodal values with zero-Neumann ghosts on every edge."""
    G, _ = ghost_map(grid, EDGES)
    return G


def discrete_laplacian(grid: TensorGrid) -> StencilOperator:
    M = laplacian_interior(grid)
    A, _ = restrict_to_interior(grid, M)
    return StencilOperator(grid, CsrMatrix.from_scipy(A), M, "dirichlet")


def discrete_biharmonic(grid: TensorGrid) -> StencilOperator:
    """Laplacian composed with itself; clamped edges closed by ghost reflection."""
    M = (laplacian_interior(grid) @ laplacian_all(grid, Closure()) @ _clamped_node_map(grid)).tocsr()
    A, _ = restrict_to_interior(grid, M)
    return StencilOperator(grid, CsrMatrix.from_scipy(A), M, "clamped")


def discrete_conv_laplacian(grid: TensorGrid, b) -> StencilOperator:
    if b[0] <= 0 or b[1] <= 0:
        raise ValueError("convection components must be positive")
    M = (convection_interior(grid, b) @ laplacian_all(grid, Closure()) @ _clamped_node_map(grid)).tocsr()
    A, _ = restrict_to_interior(grid, M)
    return StencilOperator(grid, CsrMatrix.from_scipy(A), M, "clamped")


@dataclass(frozen=True, eq=False)
class Trace:
    """Values along one edge, ordered by the tangential coordinate."""

    edge: str
    coords: np.ndarray
    values: np.ndarray
    normal: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.edge not in EDGES:
            raise ValueError(f"unknown edge {self.edge!r}")
        if len(self.values) != len(self.coords):
            raise ValueError("trace length does not match edge node count")


def _edge_slice(values: np.ndarray, edge: str) -> np.ndarray:
    return {"x=0": values[0, :], "x=1": values[-1, :], "y=0": values[:, 0], "y=1": values[:, -1]}[edge]


def edge_coords(grid: TensorGrid, edge: str) -> np.ndarray:
    return grid.y if edge.startswith("x") else grid.x


def edge_trace(u: Field, edge: str) -> Trace:
    if edge not in EDGES:
        raise ValueError(f"unknown edge {edge!r}")
    return Trace(edge, edge_coords(u.grid, edge), _edge_slice(u.values, edge).copy())


def normal_derivative_trace(u: Field, edge: str, order: int = 4) -> Trace:
    """Coordinate derivative across ``edge`` (d/dx on x-edges, d/dy on y-edges).

    One-sided differences over ``order + 1`` nodes, exact on polynomials of
    degree ``order``.
    """
    if edge not in EDGES:
        raise ValueError(f"unknown edge {edge!r}")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    axis = 0 if edge.startswith("x") else 1
    nodes = u.grid.x if axis == 0 else u.grid.y
    if nodes.size < order + 1:
        raise ValueError(f"need at least {order + 1} nodes across the edge")
    if edge.endswith("0"):
        idx = np.arange(order + 1)
    else:
        idx = np.arange(nodes.size - order - 1, nodes.size)
    at = nodes[0] if edge.endswith("0") else nodes[-1]
    w = fornberg_weights(at, nodes[idx], 1)[1]
    vals = np.take(u.values, idx, axis=axis)
    d = np.tensordot(w, vals, axes=(0, axis))
    return Trace(edge, edge_coords(u.grid, edge), _edge_slice(u.values, edge).copy(), d)


def tangential_derivative(t: Trace, order: int = 4) -> np.ndarray:
    """Derivative of trace values along the edge (centered where possible)."""
    return derivative_1d(t.coords, t.values, order)


def derivative_1d(x: np.ndarray, v: np.ndarray, order: int = 4) -> np.ndarray:
    """First derivative of nodal data with ``order + 1``-point stencils, centered where possible."""
    n = x.size
    k = order + 1
    out = np.empty(n)
    half = k // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - k)
        idx = np.arange(lo, lo + k)
        out[i] = fornberg_weights(x[i], x[idx], 1)[1] @ v[idx]
    return out
