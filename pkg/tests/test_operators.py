import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mass_pencil
from sliceeig import (ChebSolver, CsrMatrix, Counters, NotSPDError, factor_shifted, factor_spd,
                      gen_laplacian, ls_pol_approx)
from sliceeig.errors import SliceEigError
from sliceeig.operators import apply_cheb, as_operator, block_apply


def mass(n):
    return CsrMatrix.from_scipy(sp.diags([np.ones(n - 1) / 6, 4 * np.ones(n) / 6, np.ones(n - 1) / 6],
                                         [-1, 0, 1]))


class TestSpdFactor:
    def test_identity(self):
        f = factor_spd(CsrMatrix.from_dense(np.eye(4)))
        v = np.arange(4.0)
        np.testing.assert_array_equal(f.solve(v), v)

    def test_diagonal(self):
        f = factor_spd(np.diag(np.arange(1.0, 6.0)))
        np.testing.assert_allclose(f.solve(np.ones(5)), 1 / np.arange(1.0, 6.0), rtol=1e-15)

    @pytest.mark.parametrize("B", [mass(100), gen_laplacian((12, 13)), gen_laplacian((5, 6, 7))])
    def test_residual_contract(self, B):
        f = factor_spd(B)
        rng = np.random.default_rng(0)
        M = B.to_scipy()
        for _ in range(100):
            v = rng.standard_normal(B.n)
            assert np.linalg.norm(M @ f.solve(v) - v) <= 1e-10 * np.linalg.norm(v)

    def test_cholesky_pieces(self):
        B = mass(40)
        f = factor_spd(B)
        v = np.random.default_rng(1).standard_normal(40)
        # B = G G^T
        np.testing.assert_allclose(f.mul_L(f.mul_LT(v)), B.matvec(v), atol=1e-14)
        np.testing.assert_allclose(f.solve_LT(f.solve_L(v)), f.solve(v), atol=1e-13)
        np.testing.assert_allclose(f.mul_L(f.solve_L(v)), v, atol=1e-13)

    def test_not_spd(self):
        with pytest.raises(NotSPDError) as err:
            factor_spd(np.diag([1.0, -2.0, 3.0]))
        assert err.value.pivot == 1

    def test_indefinite_laplacian_shift(self):
        A = gen_laplacian((10,)).to_scipy() - 1.0 * sp.identity(10)
        with pytest.raises(NotSPDError):
            factor_spd(A)


class TestShiftedFactor:
    def test_diagonal_division(self):
        f = factor_shifted(np.diag([1.0, 2.0, 3.0]), None, 1j)
        e2 = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(f.solve(e2), e2 / (2 - 1j), atol=1e-15)

    def test_real_shift_rejected(self):
        with pytest.raises(SliceEigError):
            factor_shifted(np.diag([1.0, 2.0, 3.0]), None, 2.0)

    def test_residual_laplacian(self):
        A = gen_laplacian((30, 30))
        sigma = 0.5 + 0.3j
        f = factor_shifted(A, None, sigma)
        M = A.to_scipy() - sigma * sp.identity(A.n)
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = rng.standard_normal(A.n) + 1j * rng.standard_normal(A.n)
            assert np.linalg.norm(M @ f.solve(v) - v) <= 1e-8 * np.linalg.norm(v)

    def test_pencil_residual(self):
        A, B = mass_pencil(150)
        sigma = 2.0 + 0.1j
        f = factor_shifted(A, B, sigma)
        M = A.to_scipy() - sigma * B.to_scipy()
        v = np.random.default_rng(3).standard_normal(150)
        assert np.linalg.norm(M @ f.solve(v) - v) <= 1e-8 * np.linalg.norm(v)

    def test_conjugate_pole(self):
        A = gen_laplacian((9, 8))
        sigma = 1.3 + 0.4j
        v = np.random.default_rng(4).standard_normal(A.n) + 1j * np.random.default_rng(5).standard_normal(A.n)
        a = factor_shifted(A, None, sigma).solve(v)
        b = factor_shifted(A, None, np.conj(sigma)).solve(np.conj(v))
        np.testing.assert_allclose(b, np.conj(a), atol=1e-12)


class TestLsPol:
    @pytest.mark.parametrize("target", ["inv", "invsqrt"])
    def test_identity_degree_zero(self, target):
        approx = ls_pol_approx(target, (1.0, 1.0))
        assert approx.degree == 0 and approx.coef[0] == 1.0
        v = np.arange(3.0)
        np.testing.assert_array_equal(apply_cheb(approx, np.eye(3), v), v)

    def test_inverse_on_grid(self):
        approx = ls_pol_approx("inv", (1.0, 2.0), tol=1e-8)
        t = np.linspace(1.0, 2.0, 1000)
        assert np.abs(approx(t) - 1 / t).max() <= 1e-8

    def test_scaled_mass_low_degree(self):
        _, B = mass_pencil(100)
        lam = np.linalg.eigvalsh(B.to_dense())
        approx = ls_pol_approx("inv", (lam[0], lam[-1]), tol=1e-10)
        assert lam[-1] / lam[0] < 3.01
        assert approx.degree <= 25

    def test_inverse_residual(self):
        _, B = mass_pencil(100)
        lam = np.linalg.eigvalsh(B.to_dense())
        tol = 1e-10
        approx = ls_pol_approx("inv", (lam[0], lam[-1]), tol=tol)
        v = np.random.default_rng(6).standard_normal(100)
        out = apply_cheb(approx, B, v)
        assert np.linalg.norm(B.matvec(out) - v) <= 10 * tol * np.linalg.norm(v) * lam[-1] / lam[0]

    def test_diagonal_elementwise(self):
        d = np.linspace(0.5, 2.0, 7)
        approx = ls_pol_approx("invsqrt", (0.5, 2.0), tol=1e-9)
        v = np.arange(1.0, 8.0)
        np.testing.assert_allclose(apply_cheb(approx, np.diag(d), v), approx(d) * v, rtol=1e-13)

    def test_semigroup(self):
        _, B = mass_pencil(80)
        lam = np.linalg.eigvalsh(B.to_dense())
        tol = 1e-10
        half = ls_pol_approx("invsqrt", (lam[0], lam[-1]), tol=tol)
        inv = ls_pol_approx("inv", (lam[0], lam[-1]), tol=tol)
        v = np.random.default_rng(7).standard_normal(80)
        twice = apply_cheb(half, B, apply_cheb(half, B, v))
        once = apply_cheb(inv, B, v)
        assert np.linalg.norm(twice - once) <= 20 * tol * np.linalg.norm(once) * lam[-1] / lam[0]

    def test_counts_b_products(self):
        approx = ls_pol_approx("inv", (1.0, 3.0), tol=1e-8)
        c = Counters()
        apply_cheb(approx, np.diag([1.0, 2.0, 3.0]), np.ones(3), c)
        assert c.n_B_matvec == approx.degree

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1.5, 50.0), st.sampled_from(["inv", "invsqrt"]))
    def test_degree_monotone_in_tol(self, kappa, target):
        degs = [ls_pol_approx(target, (1.0, kappa), tol=t, max_deg=400).degree
                for t in (1e-12, 1e-9, 1e-6, 1e-3)]
        assert degs == sorted(degs, reverse=True)

    def test_insufficient_degree(self):
        with pytest.raises(SliceEigError, match="relative error"):
            ls_pol_approx("inv", (1e-3, 1.0), tol=1e-12, max_deg=10)

    def test_chebsolver(self):
        approx = ls_pol_approx("inv", (1.0, 4.0), tol=1e-12)
        s = ChebSolver(approx, np.diag([1.0, 2.0, 4.0]))
        np.testing.assert_allclose(s.solve(np.ones(3)), [1.0, 0.5, 0.25], atol=1e-11)


class TestOperatorWrapping:
    def test_callable_needs_size(self):
        with pytest.raises(SliceEigError):
            as_operator(lambda x: x)

    def test_block_apply_paths(self):
        A = gen_laplacian((5, 4))
        X = np.random.default_rng(8).standard_normal((20, 3))
        ref = A.to_dense() @ X
        np.testing.assert_allclose(block_apply(A, X), ref, atol=1e-14)
        np.testing.assert_allclose(block_apply(A.to_scipy(), X), ref, atol=1e-14)
        np.testing.assert_allclose(block_apply(as_operator(A), X), ref, atol=1e-14)
