"""Exponential-polynomial layer profiles and their profile equations.

An edge profile is ``v(xi, t) = sum_k c_k(t) xi**k * exp(-b xi)`` where each
coefficient ``c_k`` is a *stack*: samples of the function and of its first
few tangential derivatives on the edge nodes (array ``(depth + 1, n)``).
Tangential differentiation shifts the stack; differentiation in the
stretched variable acts on the polynomial exactly.  Every operation is
linear, so identities between profiles hold exactly in this algebra no
matter how the derivative rows were obtained.

A corner profile is ``z(xi, eta) = sum_{k,l} p_kl xi**k eta**l exp(-b1 xi - b2 eta)``
with scalar coefficients.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .mesh import Field, TensorGrid


class DerivativeDepthError(ValueError):
    """A tangential derivative was requested beyond the stored stack depth."""


class DegreeExhaustedError(ValueError):
    """The requested polynomial degree cannot represent the data."""


def _as_stack(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    return a


@dataclass(frozen=True, eq=False)
class ExpPoly1D:
    rate: float
    coeffs: np.ndarray  # (degree + 1, depth + 1, n)

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("decay rate must be positive")
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[0] < 1:
            raise ValueError("coefficients must have shape (degree+1, depth+1, n)")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite profile coefficient")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_stacks(cls, rate: float, stacks) -> "ExpPoly1D":
        stacks = [_as_stack(s) for s in stacks]
        depth = min(s.shape[0] for s in stacks)
        return cls(rate, np.stack([s[:depth] for s in stacks]))

    @classmethod
    def zero(cls, rate: float, n: int = 1, depth: int = 0) -> "ExpPoly1D":
        return cls(rate, np.zeros((1, depth + 1, n)))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def depth(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def n(self) -> int:
        return self.coeffs.shape[2]

    def dxi(self, k: int = 1) -> "ExpPoly1D":
        c = self.coeffs
        for _ in range(k):
            shifted = np.zeros_like(c)
            deg = c.shape[0] - 1
            shifted[:deg] = np.arange(1, deg + 1)[:, None, None] * c[1:]
            c = shifted - self.rate * c
        return ExpPoly1D(self.rate, c)

    def dt(self, k: int = 1) -> "ExpPoly1D":
        if k > self.depth:
            raise DerivativeDepthError(f"tangential derivative of order {k} exceeds stack depth {self.depth}")
        return ExpPoly1D(self.rate, self.coeffs[:, k:, :])

    def __mul__(self, s: float) -> "ExpPoly1D":
        return ExpPoly1D(self.rate, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __add__(self, other: "ExpPoly1D") -> "ExpPoly1D":
        if other.rate != self.rate:
            raise ValueError("cannot add profiles with different decay rates")
        deg = max(self.degree, other.degree)
        depth = min(self.depth, other.depth)
        n = max(self.n, other.n)
        out = np.zeros((deg + 1, depth + 1, n))
        out[: self.degree + 1] += self.coeffs[:, : depth + 1, :]
        out[: other.degree + 1] += other.coeffs[:, : depth + 1, :]
        return ExpPoly1D(self.rate, out)

    def __sub__(self, other):
        return self + (-other)

    def at(self, index: int) -> "ExpPoly1D":
        """Restrict the tangential samples to one node."""
        return ExpPoly1D(self.rate, self.coeffs[:, :, index:index + 1])

    def trim(self, rtol: float = 0.0) -> "ExpPoly1D":
        c = self.coeffs
        scale = np.abs(c).max(initial=0.0)
        deg = c.shape[0] - 1
        while deg > 0 and np.abs(c[deg]).max() <= rtol * scale:
            deg -= 1
        return ExpPoly1D(self.rate, c[: deg + 1])

    def poly(self, xi) -> np.ndarray:
        """Polynomial factor at ``xi`` for every tangential node (depth 0)."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.broadcast_shapes(xi.shape[:1] + (1,), (1, self.n)) if xi.ndim else (self.n,))
        for k in range(self.degree, -1, -1):
            out = out * (xi[..., None] if xi.ndim else xi) + self.coeffs[k, 0]
        return out

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        ex = np.exp(-self.rate * xi)
        return self.poly(xi) * (ex[..., None] if xi.ndim else ex)

    def max_coeff(self) -> float:
        return float(np.abs(self.coeffs[:, 0, :]).max(initial=0.0))

    def describe(self, var: str = "xi") -> str:
        terms = []
        for k in range(self.degree + 1):
            name = f"c{k}" + (f"*{var}" if k == 1 else f"*{var}^{k}" if k > 1 else "")
            terms.append(name)
        return f"({' + '.join(terms)})·exp(-{self.rate:g}·{var})"

    def coefficient_csv(self, coords=None) -> str:
        buf = io.StringIO()
        cols = ["t"] + [f"c{k}" for k in range(self.degree + 1)]
        buf.write(",".join(cols) + "\n")
        t = np.arange(self.n) if coords is None else coords
        for j in range(self.n):
            row = [t[j]] + [self.coeffs[k, 0, j] for k in range(self.degree + 1)]
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"type": "edge", "rate": self.rate, "degree": self.degree, "depth": self.depth}


def _inv_shift(c: np.ndarray, b: float) -> np.ndarray:
    """Apply ``(d/dxi - b)^{-1}`` to polynomial coefficients ``c`` (axis 0)."""
    deg = c.shape[0] - 1
    out = np.zeros_like(c)
    term = c.copy()
    for j in range(deg + 1):
        out -= term / b ** (j + 1)
        nxt = np.zeros_like(term)
        nxt[: deg] = np.arange(1, deg + 1)[:, None, None] * term[1:]
        term = nxt
    return out


def solve_edge_profile(b: float, rhs: ExpPoly1D, neumann0) -> ExpPoly1D:
    """Decaying solution of ``v'''' + b v''' = rhs`` with ``v_xi(0) = neumann0``.

    ``rhs`` must carry the same decay rate ``b``.  Writing ``v = p exp(-b xi)``
    the equation reads ``(D - b)^3 D p = r``; the result has degree
    ``deg(rhs) + 1`` and the free constant is fixed by the Neumann value.
    """
    if not b > 0:
        raise ValueError("decay rate must be positive")
    if rhs.rate != b:
        raise ValueError("right-hand side must decay with the same rate")
    nm = _as_stack(neumann0)
    depth = min(rhs.depth, nm.shape[0] - 1)
    n = max(rhs.n, nm.shape[1])
    r = np.broadcast_to(rhs.coeffs[:, : depth + 1, :], (rhs.degree + 1, depth + 1, n))
    q = _inv_shift(_inv_shift(_inv_shift(r, b), b), b)
    p = np.zeros((q.shape[0] + 1, depth + 1, n))
    p[1:] = q / np.arange(1, q.shape[0] + 1)[:, None, None]
    p[0] = (q[0] - np.broadcast_to(nm[: depth + 1], (depth + 1, n))) / b
    return ExpPoly1D(b, p)


def edge_operator_terms(v: ExpPoly1D, b_normal: float, b_tangent: float, c: float) -> dict:
    """Pieces of the full operator in stretched normal / plain tangential variables.

    Returns ``{m: profile}`` with ``L v = sum_m eps**m * profile_m`` for the
    unscaled profile ``v``.  Orders m = -3 .. 1.
    """
    bn, bt = b_normal, b_tangent
    out = {}
    v1 = v.dxi()
    out[-3] = v1.dxi(3) + v.dxi(3) * bn
    out[-2] = v.dxi(2).dt() * bt - v.dxi(2) * c
    out[-1] = v.dxi(2).dt(2) * 2.0 + v.dxi().dt(2) * bn
    if v.depth >= 3:
        out[0] = v.dt(3) * bt - v.dt(2) * c
    if v.depth >= 4:
        out[1] = v.dt(4)
    return out


@dataclass(frozen=True, eq=False)
class ExpPoly2D:
    rates: tuple
    coeffs: np.ndarray  # (dx + 1, dy + 1)

    def __post_init__(self):
        if not (self.rates[0] > 0 and self.rates[1] > 0):
            raise ValueError("decay rates must be positive")
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "rates", (float(self.rates[0]), float(self.rates[1])))

    @classmethod
    def zero(cls, rates) -> "ExpPoly2D":
        return cls(rates, np.zeros((1, 1)))

    @property
    def degree(self) -> tuple:
        return (self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1)

    def _pad(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] = self.coeffs
        return out

    def dxi(self) -> "ExpPoly2D":
        c = self.coeffs
        d = np.zeros_like(c)
        d[:-1] = np.arange(1, c.shape[0])[:, None] * c[1:]
        return ExpPoly2D(self.rates, d - self.rates[0] * c)

    def deta(self) -> "ExpPoly2D":
        c = self.coeffs
        d = np.zeros_like(c)
        d[:, :-1] = np.arange(1, c.shape[1])[None, :] * c[:, 1:]
        return ExpPoly2D(self.rates, d - self.rates[1] * c)

    def __add__(self, other: "ExpPoly2D") -> "ExpPoly2D":
        shape = tuple(max(a, b) for a, b in zip(self.coeffs.shape, other.coeffs.shape))
        return ExpPoly2D(self.rates, self._pad(shape) + other._pad(shape))

    def __mul__(self, s: float) -> "ExpPoly2D":
        return ExpPoly2D(self.rates, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def lap(self) -> "ExpPoly2D":
        return self.dxi().dxi() + self.deta().deta()

    def conv(self) -> "ExpPoly2D":
        return self.dxi() * self.rates[0] + self.deta() * self.rates[1]

    def principal(self) -> "ExpPoly2D":
        """``Lap^2 z + (b.grad) Lap z`` in the stretched variables."""
        lz = self.lap()
        return lz.lap() + lz.conv()

    def on_eta0(self) -> ExpPoly1D:
        """Restriction to eta = 0 as a profile in xi."""
        return ExpPoly1D(self.rates[0], self.coeffs[:, 0].reshape(-1, 1, 1))

    def on_xi0(self) -> ExpPoly1D:
        return ExpPoly1D(self.rates[1], self.coeffs[0, :].reshape(-1, 1, 1))

    def __call__(self, xi, eta):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        pv = np.polynomial.polynomial.polyval2d(xi, eta, self.coeffs)
        return pv * np.exp(-self.rates[0] * xi - self.rates[1] * eta)

    def max_coeff(self) -> float:
        return float(np.abs(self.coeffs).max(initial=0.0))

    def describe(self) -> str:
        terms = []
        for k in range(self.coeffs.shape[0]):
            for l in range(self.coeffs.shape[1]):
                if self.coeffs[k, l] != 0.0:
                    terms.append(f"{self.coeffs[k, l]:.6g}*xi^{k}*eta^{l}")
        body = " + ".join(terms) if terms else "0"
        return f"({body})·exp(-{self.rates[0]:g}·xi-{self.rates[1]:g}·eta)"

    def coefficient_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,l,p\n")
        for k in range(self.coeffs.shape[0]):
            for l in range(self.coeffs.shape[1]):
                buf.write(f"{k},{l},{self.coeffs[k, l]:.17g}\n")
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"type": "corner", "rates": list(self.rates), "degree": list(self.degree)}


@dataclass(frozen=True)
class SolvabilityReport:
    solvable: bool
    residual: float
    condition: str = ""
    neumann_imposed: bool = True


def _poly_coeffs_1d(p: ExpPoly1D | None) -> np.ndarray:
    if p is None:
        return np.zeros(1)
    if p.n != 1:
        raise ValueError("corner Neumann data must be scalar profiles")
    return p.coeffs[:, 0, 0]


def _corner_system(rates, d: int, rhs: np.ndarray, neta: np.ndarray, nxi: np.ndarray, with_neumann: bool):
    b1, b2 = rates
    n = (d + 1) ** 2
    cols = []
    for idx in range(n):
        e = np.zeros((d + 1, d + 1))
        e.flat[idx] = 1.0
        z = ExpPoly2D(rates, e)
        blocks = [z.principal().coeffs.ravel()]
        if with_neumann:
            blocks.append(z.deta().coeffs[:, 0])
            blocks.append(z.dxi().coeffs[0, :])
        cols.append(np.concatenate(blocks))
    A = np.array(cols).T
    target = [np.zeros((d + 1, d + 1))]
    target[0][: rhs.shape[0], : rhs.shape[1]] = rhs
    t = [target[0].ravel()]
    if with_neumann:
        ne = np.zeros(d + 1)
        ne[: neta.size] = neta
        nx = np.zeros(d + 1)
        nx[: nxi.size] = nxi
        t += [ne, nx]
    return A, np.concatenate(t)


def solve_corner_profile(b, c: float, prev: ExpPoly2D | None, neumann_eta0: ExpPoly1D | None,
                         neumann_xi0: ExpPoly1D | None, max_degree: int = 4, tol: float = 1e-8,
                         condition: str = "", require_neumann: bool = True):
    """Corner profile with ``principal(z) = c * Lap(prev)`` and prescribed edge slopes.

    The Neumann data are ``z_eta(xi, 0) = neumann_eta0(xi)`` and
    ``z_xi(0, eta) = neumann_xi0(eta)``.  Coefficient matching over monomials of
    increasing degree; the first degree with a consistent least-squares solution
    wins.  With ``require_neumann=False`` an inconsistent Neumann system falls
    back to matching the equation alone.
    """
    rates = (float(b[0]), float(b[1]))
    rhs = (prev.lap() * c).coeffs if prev is not None else np.zeros((1, 1))
    neta = _poly_coeffs_1d(neumann_eta0)
    nxi = _poly_coeffs_1d(neumann_xi0)
    need = max(rhs.shape[0] - 1, rhs.shape[1] - 1, neta.size - 1, nxi.size - 1)
    if need > max_degree:
        raise DegreeExhaustedError(f"data of degree {need} exceed max_degree={max_degree}")
    scale = max(np.abs(rhs).max(), np.abs(neta).max(), np.abs(nxi).max())
    if scale == 0.0:
        return ExpPoly2D.zero(rates), SolvabilityReport(True, 0.0, condition)

    def attempt(with_neumann):
        best = None
        for d in range(need, max_degree + 1):
            A, t = _corner_system(rates, d, rhs, neta, nxi, with_neumann)
            x, *_ = np.linalg.lstsq(A, t, rcond=None)
            res = float(np.abs(A @ x - t).max() / scale)
            if best is None or res < best[1]:
                best = (x.reshape(d + 1, d + 1), res)
            if res <= tol:
                return x.reshape(d + 1, d + 1), res, True
        return best[0], best[1], False

    coeffs, res, ok = attempt(True)
    if ok:
        return ExpPoly2D(rates, coeffs), SolvabilityReport(True, res, condition, True)
    if not require_neumann:
        coeffs2, res2, ok2 = attempt(False)
        if ok2:
            return ExpPoly2D(rates, coeffs2), SolvabilityReport(True, res2, condition, False)
    return ExpPoly2D(rates, coeffs), SolvabilityReport(False, res, condition, True)


def realize(p, eps: float, grid: TensorGrid, orientation: str = "x", dx: int = 0, dy: int = 0) -> Field:
    """Nodal values of an unstretched profile (or of its x/y derivatives).

    ``orientation="x"``: edge profile in ``xi = x/eps`` with coefficients sampled
    along y; ``"y"``: in ``eta = y/eps`` with coefficients along x.  Corner
    profiles ignore ``orientation``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x, y = grid.x, grid.y
    if isinstance(p, ExpPoly2D):
        q = p
        for _ in range(dx):
            q = q.dxi()
        for _ in range(dy):
            q = q.deta()
        X, Y = grid.mesh()
        vals = q(X / eps, Y / eps) * eps ** (-(dx + dy))
        return Field(grid, vals)
    if orientation == "x":
        q = p.dxi(dx).dt(dy) if dy else p.dxi(dx)
        if q.n != y.size:
            raise ValueError("profile coefficients do not match the y nodes")
        vals = q(x / eps) * eps ** (-dx)
        return Field(grid, vals)
    if orientation == "y":
        q = p.dxi(dy).dt(dx) if dx else p.dxi(dy)
        if q.n != x.size:
            raise ValueError("profile coefficients do not match the x nodes")
        vals = (q(y / eps) * eps ** (-dy)).T
        return Field(grid, vals)
    raise ValueError(f"unknown orientation {orientation!r}")


def corner_z3_defect(b, c: float, z2: ExpPoly2D, neumann_eta0: ExpPoly1D, neumann_xi0: ExpPoly1D) -> float:
    """Solvability defect of the linear corner ansatz for z3.

    The xi-slope of ``neumann_eta0`` fixes the xi coefficient, the eta-slope of
    ``neumann_xi0`` the eta coefficient, and the equation then demands
    ``b1 w_xi + b2 w_eta = -c z2(0,0)``.  The returned defect is
    ``b1^2 n1 + b2^2 m1 - c b1 b2 z2(0,0)``, which equals the mixed-trace
    quantity ``b1 psi0_xxy + b2 psi0_xyy - c psi0_xy`` at the corner up to sign.
    """
    b1, b2 = float(b[0]), float(b[1])
    n = _poly_coeffs_1d(neumann_eta0)
    m = _poly_coeffs_1d(neumann_xi0)
    n1 = n[1] if n.size > 1 else 0.0
    m1 = m[1] if m.size > 1 else 0.0
    return float(b1 ** 2 * n1 + b2 ** 2 * m1 - c * b1 * b2 * z2.coeffs[0, 0])


def solve_corner_z3(b, c: float, z2: ExpPoly2D, neumann_eta0: ExpPoly1D, neumann_xi0: ExpPoly1D,
                    tol: float, scale: float, condition: str = ""):
    """z3 with solvability decided by the explicit corner defect relative to ``scale``."""
    defect = abs(corner_z3_defect(b, c, z2, neumann_eta0, neumann_xi0))
    rel = defect / scale if scale > 0 else (0.0 if defect == 0.0 else float("inf"))
    z, rep = solve_corner_profile(b, c, z2, neumann_eta0, neumann_xi0, max_degree=3, tol=max(tol, 1e-8),
                                  condition=condition)
    ok = rel <= tol
    return z, SolvabilityReport(ok, rel, condition, True)
