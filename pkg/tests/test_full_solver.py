import numpy as np
import pytest
import sympy as sm

from layercraft import fd_ops as fd
from layercraft.full_solver import ProblemSpec, apply_full_operator, solve_full
from layercraft.mesh import TensorGrid, layer_grid, sample, uniform_grid

from conftest import one_f, ref_f, square

X, Y = sm.symbols("x y")


def lap(u):
    return sm.diff(u, X, 2) + sm.diff(u, Y, 2)


def manufactured(u, b, c, eps):
    Lu = lap(u)
    f = eps * lap(Lu) + b[0] * sm.diff(Lu, X) + b[1] * sm.diff(Lu, Y) - c * Lu
    return sm.lambdify((X, Y), u), sm.lambdify((X, Y), f)


def edge_data(u):
    """Dirichlet values and outward normal derivatives of a symbolic field."""
    T = sm.Symbol("t")
    g1 = {
        "x=0": u.subs({X: 0, Y: T}), "x=1": u.subs({X: 1, Y: T}),
        "y=0": u.subs({Y: 0, X: T}), "y=1": u.subs({Y: 1, X: T}),
    }
    g2 = {
        "x=0": -sm.diff(u, X).subs({X: 0, Y: T}), "x=1": sm.diff(u, X).subs({X: 1, Y: T}),
        "y=0": -sm.diff(u, Y).subs({Y: 0, X: T}), "y=1": sm.diff(u, Y).subs({Y: 1, X: T}),
    }
    mk = lambda e: np.vectorize(sm.lambdify(T, e), otypes=[float])  # noqa: E731
    return {k: mk(v) for k, v in g1.items()}, {k: mk(v) for k, v in g2.items()}


def test_zero_rhs_gives_zero():
    spec = ProblemSpec((1, 1), 1, 0.1, lambda x, y: 0 * x)
    assert not solve_full(spec, square(16)).values.any()


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec((0, 1), 1, 0.1, one_f)
    with pytest.raises(ValueError):
        ProblemSpec((1, 1), 0, 0.1, one_f)
    with pytest.raises(ValueError):
        ProblemSpec((1, 1), 1, 0.0, one_f)
    with pytest.raises(ValueError):
        ProblemSpec((1, 1), 1, 0.1, one_f, g1={"x=0": lambda t: 1 + 0 * t})


def test_clamped_mms_second_order():
    b, c, eps = (1.0, 2.0), 1.0, 0.5
    u, f = manufactured((sm.sin(sm.pi * X) * sm.sin(sm.pi * Y)) ** 2, b, c, eps)
    spec = ProblemSpec(b, c, eps, f)
    errs = []
    for N in (16, 32, 64):
        g = square(N)
        errs.append(np.abs(solve_full(spec, g).values - sample(g, u).values).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates.min() > 1.8, (errs, rates)


def test_inhomogeneous_mms_second_order():
    b, c, eps = (1.0, 1.0), 1.0, 0.25
    ue = sm.sin(X + 2 * Y) + X * Y ** 2
    u, f = manufactured(ue, b, c, eps)
    g1, g2 = edge_data(ue)
    spec = ProblemSpec(b, c, eps, f, g1, g2)
    errs = []
    for N in (16, 32, 64):
        g = square(N)
        errs.append(np.abs(solve_full(spec, g).values - sample(g, u).values).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates.min() > 1.8, (errs, rates)


def test_linear_system_residual():
    spec = ProblemSpec((1, 1), 1, 2 ** -4, ref_f)
    g = layer_grid(64, spec.eps, spec.b)
    sol = solve_full(spec, g)
    # with the clamped ghost rule the nodal operator is exactly the solved system
    r = apply_full_operator(spec, sol.field, neumann={}).values[1:-1, 1:-1] - sample(g, ref_f).values[1:-1, 1:-1]
    assert np.abs(r).max() <= 1e-8


def test_layer_warning():
    spec = ProblemSpec((1, 1), 1, 2 ** -7, one_f)
    sol = solve_full(spec, square(32))
    assert any("under-resolved" in w for w in sol.metadata["warnings"])
    sol = solve_full(spec.with_eps(0.5), square(32))
    assert sol.metadata["warnings"] == []


def test_approaches_reduced_solution_away_from_layers():
    from layercraft.reduced import solve_psi0

    g = square(64)
    far = []
    for eps in (2 ** -3, 2 ** -5):
        spec = ProblemSpec((1, 1), 1, eps, ref_f)
        u = solve_full(spec, g).values
        assert np.allclose(u[[0, -1], :], 0) and np.allclose(u[:, [0, -1]], 0)
        d = u - solve_psi0(spec.b, spec.c, ref_f, g).values
        far.append(np.abs(d[20:44, 20:44]).max())
    assert far[1] < far[0] / 2
