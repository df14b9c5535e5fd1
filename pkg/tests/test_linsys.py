import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhlpc.linsys import (
    ConvergenceError,
    DimensionError,
    Lsp,
    MatrixConstructionError,
    SingularMatrixError,
    SparseMatrix,
    canonicalize,
    cg_solve,
    csr_from_triplets,
    direct_solve_dense,
    oracle_solve,
    spmv,
)


def test_identity_from_triplets():
    a = csr_from_triplets(2, [(0, 0, 1.0), (1, 1, 1.0)])
    assert np.array_equal(a.todense(), np.eye(2))
    assert list(a.row_offsets) == [0, 1, 2]


def test_duplicates_are_summed():
    a = csr_from_triplets(2, [(0, 0, 2.0), (0, 0, 3.0)])
    assert a.nnz == 1
    assert a.todense()[0, 0] == 5.0


def test_symmetry_flag():
    assert csr_from_triplets(3, [(0, 1, 4.0), (1, 0, 4.0)]).is_symmetric()
    assert not csr_from_triplets(3, [(0, 1, 4.0), (1, 0, 3.0)]).is_symmetric()


def test_out_of_range_index_rejected():
    with pytest.raises(MatrixConstructionError):
        csr_from_triplets(2, [(0, 2, 1.0)])


def test_malformed_csr_rejected():
    with pytest.raises(MatrixConstructionError):
        SparseMatrix(2, 2, [0, 2, 2], [1, 0], [1.0, 1.0])      # unsorted columns
    with pytest.raises(MatrixConstructionError):
        SparseMatrix(2, 2, [0, 1], [0], [1.0])                  # short offsets


def test_spmv_examples():
    assert np.array_equal(spmv(csr_from_triplets(2, [(0, 0, 1), (1, 1, 1)]), [3, 4]), [3, 4])
    a = csr_from_triplets(2, [(0, 0, 4), (0, 1, 1), (1, 0, 1), (1, 1, 3)])
    assert np.array_equal(spmv(a, [1, 2]), [6, 7])
    assert np.array_equal(spmv(csr_from_triplets(3, []), [1, 2, 3]), [0, 0, 0])
    with pytest.raises(DimensionError):
        spmv(a, [1, 2, 3])


def _random_sparse(rng, n, density=0.3):
    m = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    r, c = np.nonzero(m)
    return csr_from_triplets(n, rows=r, cols=c, vals=m[r, c]), m


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.floats(-5, 5), st.floats(-5, 5))
def test_spmv_is_linear(seed, n, alpha, beta):
    rng = np.random.default_rng(seed)
    a, _ = _random_sparse(rng, n)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    lhs = spmv(a, alpha * u + beta * v)
    rhs = alpha * spmv(a, u) + beta * spmv(a, v)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_canonicalization_idempotent(seed, n):
    rng = np.random.default_rng(seed)
    k = 3 * n
    rows, cols = rng.integers(0, n, k), rng.integers(0, n, k)
    vals = rng.standard_normal(k)
    a = csr_from_triplets(n, rows=rows, cols=cols, vals=vals)
    b = canonicalize(a)
    assert np.array_equal(a.row_offsets, b.row_offsets)
    assert np.array_equal(a.col_indices, b.col_indices)
    assert np.array_equal(a.values, b.values)
    dense = np.zeros((n, n))
    np.add.at(dense, (rows, cols), vals)
    assert np.allclose(a.todense(), dense)


def test_cg_examples():
    eye = Lsp(csr_from_triplets(2, [(0, 0, 1), (1, 1, 1)]), [1, 2])
    assert np.allclose(cg_solve(eye).x, [1, 2])
    a = csr_from_triplets(2, [(0, 0, 4), (0, 1, 1), (1, 0, 1), (1, 1, 3)])
    # 2x2 inverse: [[3,-1],[-1,4]] / 11 applied to [1,2]
    assert np.allclose(cg_solve(Lsp(a, [1, 2])).x, [1 / 11, 7 / 11], atol=1e-10)
    res = cg_solve(Lsp(a, [0, 0]))
    assert res.iterations == 0 and np.array_equal(res.x, [0, 0])


def test_cg_reports_nonconvergence():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((20, 20))
    d = m.T @ m + 1e-3 * np.eye(20)
    r, c = np.nonzero(d)
    lsp = Lsp(csr_from_triplets(20, rows=r, cols=c, vals=d[r, c]), rng.standard_normal(20))
    with pytest.raises(ConvergenceError) as info:
        cg_solve(lsp, tol=1e-14, max_iter=2)
    assert info.value.residual > 1e-14 and info.value.iterations == 2


def test_direct_solve_examples():
    assert np.allclose(direct_solve_dense(np.eye(3), [1, 2, 3]), [1, 2, 3])
    assert np.allclose(direct_solve_dense([[4, 1], [1, 3]], [1, 2]), [1 / 11, 7 / 11])
    with pytest.raises(SingularMatrixError):
        direct_solve_dense([[1, 1], [1, 1]], [1, 2])


def test_cg_matches_dense_on_random_spd():
    """100 seeded SPD systems M^T M + n I with n <= 32."""
    worst = 0.0
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        n = int(rng.integers(2, 33))
        m = rng.standard_normal((n, n))
        d = m.T @ m + n * np.eye(n)
        b = rng.standard_normal(n)
        r, c = np.nonzero(d)
        tol = 1e-8
        x_cg = cg_solve(Lsp(csr_from_triplets(n, rows=r, cols=c, vals=d[r, c]), b), tol=tol).x
        x_lu = direct_solve_dense(d, b)
        err = np.linalg.norm(x_cg - x_lu) / np.linalg.norm(x_lu)
        worst = max(worst, err)
        assert err <= 10 * tol
    assert worst <= 1e-6


def test_rank_one_shift_pins_the_null_space():
    # periodic 1D Laplacian is singular; the shift term makes it definite
    n = 8
    trip = []
    for i in range(n):
        trip += [(i, i, 2.0), (i, (i + 1) % n, -1.0), (i, (i - 1) % n, -1.0)]
    a = csr_from_triplets(n, trip)
    b = np.sin(2 * np.pi * np.arange(n) / n)
    lsp = Lsp(a, b, shift=2.0 / n)
    x = cg_solve(lsp, tol=1e-12).x
    dense = a.todense() + 2.0 / n
    assert np.allclose(x, np.linalg.solve(dense, b), atol=1e-10)
    assert abs(x.mean()) < 1e-10
    assert np.allclose(lsp.matvec(x), dense @ x)


def test_oracle_solve_caches():
    a = csr_from_triplets(2, [(0, 0, 2), (1, 1, 4)])
    lsp = Lsp(a, [2, 4])
    x = oracle_solve(lsp)
    assert np.allclose(x, [1, 1])
    assert oracle_solve(lsp) is x


def test_coordinate_dump(tmp_path):
    a = csr_from_triplets(2, [(0, 1, 1.5), (1, 0, -2.0)])
    p = tmp_path / "a.txt"
    a.dump_coo(p)
    assert p.read_text().splitlines() == ["0 1 1.5", "1 0 -2.0"]
