import math

import numpy as np
import pytest

from layercraft.analysis import (
    PREDICTED,
    DegenerateDataError,
    _layer_operator,
    estimate_order,
    fit_sweep,
    h1_seminorm,
    l2_norm,
    linf_norm,
    stability_check,
    sweep_point,
)
from layercraft.expansion import STACK_DEPTH, Expansion, _edge_rhs
from layercraft.full_solver import ProblemSpec
from layercraft.mesh import Field, TensorGrid, layer_grid, sample, shishkin_grid, uniform_grid
from layercraft.profiles import ExpPoly1D, edge_operator_terms, solve_edge_profile

from conftest import ref_f, square


def test_order_exact_power():
    eps = [2.0 ** -k for k in range(3, 8)]
    fit = estimate_order([(e, 7 * e ** 2.5) for e in eps])
    assert fit.slope == pytest.approx(2.5, abs=1e-12)
    assert estimate_order([(e, 3.0) for e in eps]).slope == pytest.approx(0.0, abs=1e-12)
    s = estimate_order([(e, 3 * e ** 2 + e ** 3) for e in eps]).slope
    assert 2.0 < s < 2.2


def test_order_degenerate():
    with pytest.raises(DegenerateDataError):
        estimate_order([(0.1, 0.0), (0.05, 1.0), (0.02, 1.0)])
    with pytest.raises(ValueError):
        estimate_order([(0.1, 1.0), (0.05, 1.0)])


def test_norms_on_known_fields():
    g = TensorGrid(shishkin_grid(128, 0.01, 1, 4), uniform_grid(64))
    one = sample(g, lambda x, y: 1 + 0 * x)
    assert l2_norm(one) == pytest.approx(1.0, rel=1e-12)
    s = sample(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    assert l2_norm(s) == pytest.approx(0.5, rel=1e-3)
    assert linf_norm(s) == pytest.approx(1.0, abs=1e-3)
    assert h1_seminorm(s) == pytest.approx(math.pi / math.sqrt(2), rel=1e-3)


def _analytic_stack(fn_derivs, coords):
    return np.array([d(coords) for d in fn_derivs])


def _synthetic_expansion(eps, N=256):
    """Edge family built from analytic traces; psi terms and the other families are left out."""
    b, c = (1.0, 1.0), 1.0
    g = layer_grid(N, eps, b)
    y = g.y
    # g(y) = sin(y) + y^2 / 2 with exact derivative rows
    rows0 = [np.sin(y) + y ** 2 / 2, np.cos(y) + y, 1 - np.sin(y), -np.cos(y)]
    for k in range(4, STACK_DEPTH + 1):
        rows0.append(np.real((1j) ** k * np.exp(1j * y)))
    rows1 = [np.exp(-y) * (-1) ** k for k in range(STACK_DEPTH + 1)]
    v = {1: solve_edge_profile(1.0, ExpPoly1D.zero(1.0, y.size, STACK_DEPTH), -np.array(rows0))}
    v[2] = solve_edge_profile(1.0, _edge_rhs(v, 2, 1.0, 1.0, c), -np.array(rows1))
    v[3] = solve_edge_profile(1.0, _edge_rhs(v, 3, 1.0, 1.0, c), np.zeros((STACK_DEPTH + 1, y.size)))
    v[4] = solve_edge_profile(1.0, _edge_rhs(v, 4, 1.0, 1.0, c), np.zeros((STACK_DEPTH + 1, y.size)))
    return Expansion("with-compat", eps, b, c, g, {}, v, {}, {})


def test_edge_family_cancels_through_first_order():
    exp = _synthetic_expansion(0.1, N=32)
    grouped = {}
    for i, p in exp.v.items():
        for m, t in edge_operator_terms(p, 1.0, 1.0, 1.0).items():
            grouped[i + m] = t if i + m not in grouped else grouped[i + m] + t
    for k in (-2, -1, 0, 1):
        assert np.abs(grouped[k].coeffs[:, 0]).max() < 1e-10, k
    assert np.abs(grouped[2].coeffs[:, 0]).max() > 1e-3


def test_layer_residual_scales_like_eps_five_halves():
    eps = [2.0 ** -k for k in range(4, 9)]
    norms = [l2_norm(Field(e.grid, _layer_operator(e))) for e in map(_synthetic_expansion, eps)]
    slope = estimate_order(list(zip(eps, norms))).slope
    assert abs(slope - 2.5) <= 0.3, (norms, slope)


def test_stability_small():
    spec = ProblemSpec((1, 1), 1, 0.1, ref_f)
    rep = stability_check(spec, square(32))
    assert rep.ratio <= 1.05 and not rep.trivial
    zero = stability_check(ProblemSpec((1, 1), 1, 0.1, lambda x, y: 0 * x), square(16))
    assert zero.trivial and zero.ratio == 0.0


def test_sweep_report_windows():
    spec = ProblemSpec((1, 1), 1, 2 ** -3, ref_f)
    pts = [sweep_point(spec.with_eps(e), layer_grid(48, e, spec.b), "no-compat") for e in (2 ** -2, 2 ** -3, 2 ** -4)]
    rep = fit_sweep("no-compat", pts)
    d = rep.to_dict()
    assert set(PREDICTED["no-compat"]) - {"err_linf"} <= set(d["slopes"])
    assert rep.to_csv().splitlines()[0].startswith("eps")
    assert "slope" in rep.to_csv()


def test_norm_examples():
    g = square(64)
    x = sample(g, lambda x, y: x + 0 * y)
    assert l2_norm(x) == pytest.approx(1 / math.sqrt(3), abs=1e-3)
    z = Field.zeros(g)
    assert l2_norm(z) == linf_norm(z) == h1_seminorm(z) == 0.0


def test_norms_monotone_under_domination(rng):
    g = square(32)
    v = rng.normal(size=g.shape)
    u = v * rng.uniform(0, 1, size=g.shape)
    U, V = Field(g, u), Field(g, v)
    assert l2_norm(U) <= l2_norm(V) and linf_norm(U) <= linf_norm(V)


def test_order_rescale_invariant():
    eps = [2.0 ** -k for k in range(2, 7)]
    pts = [(e, e ** 1.7 * (1 + e)) for e in eps]
    a = estimate_order(pts).slope
    assert estimate_order([(e, 1e6 * n) for e, n in pts]).slope == pytest.approx(a, abs=1e-12)


def test_residual_report_zero_rhs():
    from layercraft.analysis import residual_report
    from layercraft.expansion import build_expansion

    spec = ProblemSpec((1, 1), 1, 2 ** -4, lambda x, y: 0 * x)
    exp = build_expansion(spec, layer_grid(32, spec.eps, spec.b), "with-compat")
    rep = residual_report(spec, exp, include_full_solve=True)
    assert all(v == 0.0 for v in rep.norms.values())


def test_stability_linearity_and_constant_rhs():
    spec = ProblemSpec((1, 1), 1, 0.1, lambda x, y: 1 + 0 * x)
    g = square(128)
    r1 = stability_check(spec, g)
    assert r1.ratio <= 1.05
    r2 = stability_check(ProblemSpec((1, 1), 1, 0.1, lambda x, y: 2 + 0 * x), g)
    assert r2.ratio == pytest.approx(r1.ratio, rel=1e-12)


def test_weak_layer_trivial():
    from layercraft.analysis import weak_layer_check

    rep = weak_layer_check(ProblemSpec((1, 1), 1, 0.1, lambda x, y: 0 * x), lambda e: square(16), [0.2, 0.1, 0.05])
    assert rep.trivial and rep.value_slope is None
