"""Tensor-product grids on the unit square and nodal fields living on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EvaluationError(ValueError):
    """A sampled function produced a non-finite value."""


@dataclass(frozen=True, eq=False)
class Grid1D:
    nodes: np.ndarray
    kind: str = "uniform"
    tau: float = 0.5

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a grid needs at least three nodes")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.N, "tau": float(self.tau)}

    def __eq__(self, other):
        if not isinstance(other, Grid1D):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash((self.kind, self.nodes.tobytes()))


def uniform_grid(N: int) -> Grid1D:
    """Equispaced grid with ``N`` cells (``N`` even, at least 4)."""
    if not isinstance(N, (int, np.integer)) or N < 4 or N % 2:
        raise ValueError(f"uniform grid needs an even cell count >= 4, got {N!r}")
    nodes = np.arange(N + 1, dtype=float) / N
    return Grid1D(nodes, "uniform", 0.5)


def shishkin_grid(N: int, eps: float, b_min: float, sigma: float = 4.0) -> Grid1D:
    """Piecewise-uniform grid with half the cells packed into ``[0, tau]``.

    ``tau = min(1/2, sigma * eps * ln(N) / b_min)``.  When the transition point
    clamps at 1/2 the result is the uniform grid.
    """
    if not isinstance(N, (int, np.integer)) or N < 8 or N % 2:
        raise ValueError(f"Shishkin grid needs an even cell count >= 8, got {N!r}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if b_min <= 0.0 or sigma <= 0.0:
        raise ValueError("b_min and sigma must be positive")
    tau = min(0.5, sigma * eps * math.log(N) / b_min)
    if tau == 0.5:
        return uniform_grid(N)
    half = N // 2
    fine = tau * np.arange(half + 1) / half
    coarse = tau + (1.0 - tau) * np.arange(1, half + 1) / half
    nodes = np.concatenate([fine, coarse])
    nodes[-1] = 1.0
    return Grid1D(nodes, "shishkin", tau)


@dataclass(frozen=True)
class TensorGrid:
    gx: Grid1D
    gy: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gx.N + 1, self.gy.N + 1)

    @property
    def x(self) -> np.ndarray:
        return self.gx.nodes

    @property
    def y(self) -> np.ndarray:
        return self.gy.nodes

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.gx.nodes, self.gy.nodes, indexing="ij")

    def describe(self) -> dict:
        return {"x": self.gx.describe(), "y": self.gy.describe()}

    def min_spacing(self) -> float:
        return float(min(self.gx.spacing.min(), self.gy.spacing.min()))


def layer_grid(N: int, eps: float, b: tuple[float, float], sigma: float = 4.0) -> TensorGrid:
    """Shishkin grid on both axes, graded towards x=0 and y=0."""
    return TensorGrid(shishkin_grid(N, eps, b[0], sigma), shishkin_grid(N, eps, b[1], sigma))


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values ``values[i, j] ~ u(x_i, y_j)`` on a tensor grid."""

    grid: TensorGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise EvaluationError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, s: float) -> "Field":
        return Field(self.grid, self.values * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    @classmethod
    def zeros(cls, grid: TensorGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))


def sample(grid: TensorGrid, g: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Field:
    """Evaluate ``g(x, y)`` at every node; ``g`` must accept numpy arrays."""
    X, Y = grid.mesh()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(g(X, Y), dtype=float), grid.shape).copy()
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise EvaluationError(
            f"non-finite sample at node ({i}, {j}) = ({grid.x[i]:.17g}, {grid.y[j]:.17g})"
        )
    return Field(grid, vals)
