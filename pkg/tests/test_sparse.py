import numpy as np
import pytest
import scipy.sparse as sp

from layercraft.sparse import SingularMatrixError, assemble, band_factorize, bandwidths, solve


def test_assemble_identity_and_duplicates():
    I = assemble([(0, 0, 1.0), (1, 1, 1.0)], 2)
    assert np.array_equal(I.toarray(), np.eye(2))
    A = assemble([(0, 0, 1.0), (0, 0, 2.0)], 1)
    assert A.data.tolist() == [3.0]
    Z = assemble([], 3)
    assert Z.data.size == 0 and Z.toarray().shape == (3, 3)


def test_assemble_out_of_range():
    with pytest.raises(ValueError):
        assemble([(0, 3, 1.0)], 3)


def test_csr_matvec_matches_triplets(rng):
    trip = [(int(i), int(j), float(v)) for i, j, v in zip(rng.integers(0, 20, 80), rng.integers(0, 20, 80), rng.normal(size=80))]
    A = assemble(trip, 20)
    x = rng.normal(size=20)
    ref = np.zeros(20)
    for i, j, v in trip:
        ref[i] += v * x[j]
    assert np.allclose(A @ x, ref, rtol=0, atol=1e-13)
    for r in range(20):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        assert np.all(np.diff(cols) > 0)


def test_identity_solve():
    lu = band_factorize(assemble([(i, i, 1.0) for i in range(5)], 5))
    b = np.arange(5.0)
    assert np.array_equal(solve(lu, b), b)


def test_poisson_against_dense():
    # interior system of -u'' on N=4: 3x3 tridiagonal
    A = assemble([(0, 0, 2), (0, 1, -1), (1, 0, -1), (1, 1, 2), (1, 2, -1), (2, 1, -1), (2, 2, 2)], 3)
    b = np.array([1.0, 2.0, 3.0])
    assert np.allclose(solve(band_factorize(A), b), np.linalg.solve(A.toarray(), b), rtol=1e-14)


def test_zero_matrix_singular():
    with pytest.raises(SingularMatrixError):
        band_factorize(assemble([], 3))


def test_random_banded_vs_dense(rng):
    n, kl, ku = 50, 3, 5
    M = sp.diags([rng.normal(size=n - abs(k)) for k in range(-kl, ku + 1)], list(range(-kl, ku + 1)))
    M = M + sp.eye(n) * 4
    from layercraft.sparse import CsrMatrix

    A = CsrMatrix.from_scipy(M)
    assert bandwidths(A) == (kl, ku)
    b = rng.normal(size=n)
    x = solve(band_factorize(A), b)
    ref = np.linalg.solve(M.toarray(), b)
    assert np.abs(x - ref).max() <= 1e-9 * np.abs(ref).max()
    assert np.abs(A @ x - b).max() <= 1e-9 * (A.norm_inf() * np.abs(x).max() + np.abs(b).max())
    x0 = rng.normal(size=n)
    assert np.allclose(solve(band_factorize(A), A @ x0), x0, rtol=1e-8)


def test_wrong_rhs_length():
    lu = band_factorize(assemble([(i, i, 1.0) for i in range(4)], 4))
    with pytest.raises(ValueError):
        solve(lu, np.ones(3))
