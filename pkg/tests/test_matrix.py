import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hessenberg

from sliceeig import (CsrMatrix, gen_laplacian, laplacian_analytic_eigs, read_matrix_market,
                      write_matrix_market)
from sliceeig.errors import DimensionError, MatrixMarketError, SliceEigError, SymmetryError
from sliceeig.matrix import DenseSym, TriDiag, csr_matvec, dense_sym_eig
from sliceeig.tridiag import sym_tridiag_eig


def tridiag_121(n):
    return gen_laplacian((n,))


class TestCsrMatrix:
    def test_identity_matvec(self):
        eye = CsrMatrix(3, [0, 1, 2, 3], [0, 1, 2], [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(csr_matvec(eye, np.array([1.0, 2.0, 3.0])), [1, 2, 3])

    def test_laplacian_row_sums(self):
        np.testing.assert_array_equal(csr_matvec(tridiag_121(3), np.ones(3)), [1, 0, 1])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            csr_matvec(tridiag_121(3), np.ones(4))

    def test_rejects_unsorted_columns(self):
        with pytest.raises(SliceEigError):
            CsrMatrix(2, [0, 2, 4], [1, 0, 0, 1], [1.0, 2.0, 1.0, 2.0])

    def test_rejects_bad_row_ptr(self):
        with pytest.raises(SliceEigError):
            CsrMatrix(2, [0, 2, 1], [0, 1, 0], [1.0, 1.0, 1.0])

    def test_rejects_unsymmetric(self):
        with pytest.raises(SymmetryError):
            CsrMatrix.from_dense([[1.0, 2.0], [3.0, 1.0]])

    def test_symmetric_to_rounding(self):
        a = np.array([[1.0, 2.0], [2.0 + 1e-15, 1.0]])
        assert CsrMatrix.from_dense(a).nnz == 4

    def test_duplicates_summed(self):
        A = CsrMatrix.from_triplets(2, [0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0])
        np.testing.assert_array_equal(A.to_dense(), [[3.0, 0.0], [0.0, 5.0]])

    def test_read_only(self):
        with pytest.raises(ValueError):
            tridiag_121(3).vals[0] = 7.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
    def test_linearity_and_symmetry(self, nx, ny, a, b, seed):
        A = gen_laplacian((nx, ny))
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal((2, A.n))
        lhs = A.matvec(a * u + b * v)
        rhs = a * A.matvec(u) + b * A.matvec(v)
        assert np.linalg.norm(lhs - rhs) <= 1e-13 * max(1.0, np.linalg.norm(rhs)) * 10
        gap = abs(u @ A.matvec(v) - v @ A.matvec(u))
        assert gap <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v) * A.norm1()


class TestLaplacian:
    def test_1d_two_points(self):
        np.testing.assert_array_equal(gen_laplacian((2,)).to_dense(), [[2, -1], [-1, 2]])

    def test_2d_343_counts(self):
        A = gen_laplacian((343, 343))
        assert (A.n, A.nnz) == (117_649, 586_873)

    def test_3d_49_counts(self):
        A = gen_laplacian((49, 49, 49))
        assert (A.n, A.nnz) == (117_649, 809_137)

    def test_diagonal(self):
        assert np.all(gen_laplacian((4, 5, 3)).diagonal() == 6)

    @pytest.mark.parametrize("dims", [(0,), (3, 0), (1, 2, 3, 4), (200_000, 200_000)])
    def test_bad_dims(self, dims):
        with pytest.raises(SliceEigError):
            gen_laplacian(dims)

    def test_analytic_small(self):
        np.testing.assert_allclose(laplacian_analytic_eigs((2,)), [1.0, 3.0], atol=1e-15)

    def test_analytic_table_values(self):
        assert laplacian_analytic_eigs((343, 343))[-1] == pytest.approx(7.9998, abs=5e-5)
        e = laplacian_analytic_eigs((49, 49, 49))
        assert np.sum((e >= 0.40) & (e <= 0.570)) == 343
        assert np.sum((e >= 0.0) & (e <= 1.0)) == 1971
        assert e[-1] == pytest.approx(11.9882, abs=5e-5)

    @pytest.mark.parametrize("dims", [(7,), (20, 20), (5, 6, 7), (9, 3), (10, 10, 10)])
    def test_spectrum_matches_dense(self, dims):
        A = gen_laplacian(dims)
        lam, _ = dense_sym_eig(A.to_dense())
        np.testing.assert_allclose(lam, laplacian_analytic_eigs(dims), atol=1e-10)


class TestMatrixMarket:
    def test_identity_symmetric(self, tmp_path):
        p = tmp_path / "eye.mtx"
        p.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 2 1\n")
        A = read_matrix_market(p)
        np.testing.assert_array_equal(A.row_ptr, [0, 1, 2])

    def test_general_unsymmetric_rejected(self, tmp_path):
        p = tmp_path / "g.mtx"
        p.write_text("%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 1\n1 2 2\n2 1 3\n2 2 1\n")
        with pytest.raises(SymmetryError):
            read_matrix_market(p)

    @pytest.mark.parametrize("dims", [(5,), (4, 6), (3, 4, 5)])
    def test_round_trip(self, tmp_path, dims):
        A = gen_laplacian(dims)
        write_matrix_market(A, tmp_path / "a.mtx")
        B = read_matrix_market(tmp_path / "a.mtx")
        for x, y in zip(A.triplets(), B.triplets()):
            np.testing.assert_array_equal(x, y)

    @pytest.mark.parametrize("text, line", [
        ("%%MatrixMarket matrix array real general\n2 2\n", 1),
        ("%%MatrixMarket matrix coordinate complex symmetric\n2 2 1\n1 1 1 0\n", 1),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1\n", 2),
        ("%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 1\n2 x 1\n", 5),
        ("hello\n", 1),
    ])
    def test_parse_errors_carry_line(self, tmp_path, text, line):
        p = tmp_path / "bad.mtx"
        p.write_text(text)
        with pytest.raises(MatrixMarketError) as err:
            read_matrix_market(p)
        assert err.value.line == line
        assert f"line {line}" in str(err.value)


class TestDense:
    def test_mirrored_storage(self):
        M = DenseSym(3)
        M[0, 2] = 4.0
        assert M[2, 0] == 4.0

    def test_diag(self):
        lam, X = dense_sym_eig(DenseSym(3, np.diag([1.0, 2.0, 3.0])))
        np.testing.assert_array_equal(lam, [1, 2, 3])
        np.testing.assert_array_equal(np.abs(X), np.eye(3))

    def test_guard(self):
        with pytest.raises(SliceEigError):
            dense_sym_eig(np.eye(5001))

    def test_householder_consistency(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((30, 30))
        a = a + a.T
        h = hessenberg(a)
        T = TriDiag(np.diag(h), np.diag(h, 1))
        lam, _ = sym_tridiag_eig(T, False)
        np.testing.assert_allclose(lam, dense_sym_eig(a)[0], atol=1e-10)


class TestTridiag:
    def test_closed_form(self):
        lam, _ = sym_tridiag_eig(TriDiag([2.0, 2.0, 2.0], [-1.0, -1.0]))
        np.testing.assert_allclose(lam, [2 - np.sqrt(2), 2, 2 + np.sqrt(2)], atol=1e-14)

    def test_one_by_one(self):
        lam, Y = sym_tridiag_eig(TriDiag([5.0], []))
        assert lam.tolist() == [5.0] and Y.tolist() == [[1.0]]

    def test_shape_invariant(self):
        with pytest.raises(DimensionError):
            TriDiag([1.0, 2.0], [1.0, 2.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**31), st.sampled_from([1e-8, 1.0, 1e8]))
    def test_against_dense(self, m, seed, scale):
        rng = np.random.default_rng(seed)
        T = TriDiag(scale * rng.standard_normal(m), scale * rng.standard_normal(m - 1))
        lam, Y = sym_tridiag_eig(T, True)
        D = T.to_dense()
        assert lam.size == m
        assert np.all(np.diff(lam) >= 0)
        norm = max(T.norm(), 1e-300)
        assert np.abs(lam - np.linalg.eigvalsh(D)).max() <= 1e-10 * norm
        assert np.abs(D @ Y - Y * lam).max() <= 1e-12 * norm * m
        assert np.abs(Y.T @ Y - np.eye(m)).max() <= 1e-12 * m

    def test_repeated_and_split(self):
        T = TriDiag([1.0, 1.0, 3.0, 3.0], [0.0, 0.0, 0.0])
        lam, Y = sym_tridiag_eig(T)
        np.testing.assert_array_equal(lam, [1, 1, 3, 3])
        np.testing.assert_allclose(Y.T @ Y, np.eye(4), atol=1e-15)
