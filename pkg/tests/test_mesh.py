import math

import numpy as np
import pytest

from layercraft.mesh import EvaluationError, Field, Grid1D, TensorGrid, sample, shishkin_grid, uniform_grid


def test_uniform_nodes():
    assert np.allclose(uniform_grid(4).nodes, [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(np.diff(uniform_grid(128).nodes), 1 / 128)


@pytest.mark.parametrize("N", [2, 5, 0, -4])
def test_uniform_rejects_bad_N(N):
    with pytest.raises(ValueError):
        uniform_grid(N)


def test_shishkin_clamps_to_uniform():
    g = shishkin_grid(8, 1.0, 1.0, 4.0)
    assert g.tau == 0.5
    assert np.array_equal(g.nodes, uniform_grid(8).nodes)


def test_shishkin_transition_point():
    g = shishkin_grid(64, 2 ** -6, 1.0, 4.0)
    assert g.tau == pytest.approx(math.log(64) / 16)
    assert g.nodes[32] == pytest.approx(g.tau)
    assert np.all(np.diff(g.nodes) > 0)
    assert np.diff(g.nodes).sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("args", [(6, 0.1, 1, 4), (64, 0.0, 1, 4), (64, 1.5, 1, 4), (64, 0.1, 0, 4), (64, 0.1, 1, -1)])
def test_shishkin_preconditions(args):
    with pytest.raises(ValueError):
        shishkin_grid(*args)


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid1D(np.array([0.0, 0.6, 0.5, 1.0]), "uniform")
    with pytest.raises(ValueError):
        Grid1D(np.array([0.1, 0.5, 1.0]), "uniform")


def test_sample_corners_and_zero():
    g = TensorGrid(uniform_grid(4), uniform_grid(4))
    u = sample(g, lambda x, y: x + y)
    assert (u.values[0, 0], u.values[-1, 0], u.values[0, -1], u.values[-1, -1]) == (0, 1, 1, 2)
    assert not sample(g, lambda x, y: 0 * x).values.any()
    e = sample(g, lambda x, y: np.exp(-x / 0.1) + 0 * y)
    assert e.values[0, 2] == 1.0


def test_sample_polynomial_exact():
    g = TensorGrid(shishkin_grid(16, 0.01, 1, 4), uniform_grid(8))
    X, Y = g.mesh()
    u = sample(g, lambda x, y: 3 * x ** 2 * y - y ** 3)
    assert np.array_equal(u.values, 3 * X ** 2 * Y - Y ** 3)


def test_sample_nonfinite_reports_location():
    g = TensorGrid(uniform_grid(4), uniform_grid(4))
    with pytest.raises(EvaluationError, match="node"):
        sample(g, lambda x, y: 1.0 / (x - 0.5) + 0 * y)


def test_field_checks_shape_and_finiteness():
    g = TensorGrid(uniform_grid(4), uniform_grid(4))
    with pytest.raises(ValueError):
        Field(g, np.zeros((4, 5)))
    with pytest.raises(ValueError):
        Field(g, np.full((5, 5), np.nan))
