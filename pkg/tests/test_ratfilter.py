import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sliceeig import Counters, apply_rat, factor_shifted, find_ratf, gen_laplacian, laplacian_analytic_eigs
from sliceeig.errors import SliceEigError
from sliceeig.ratfilter import (MAX_TOTAL_MULTIPLICITY, RatWeight, apply_rat_pair, cauchy_poles, eval_rat,
                                ls_coeffs, ls_objective)


def diag_solvers(f, d, b=None):
    b = np.ones_like(d) if b is None else b
    return [lambda x, s=s: x / (d - s * b) for s in f.shifts()]


class TestCauchyPoles:
    def test_midpoint_three(self):
        poles, alpha = cauchy_poles(3, "midpoint")
        theta = np.array([np.pi / 6, np.pi / 2, 5 * np.pi / 6])
        np.testing.assert_allclose(poles, np.exp(1j * theta), atol=1e-15)
        np.testing.assert_allclose(alpha, -np.exp(1j * theta) / 6, atol=1e-15)

    @pytest.mark.parametrize("rule", ["midpoint", "gauss_legendre"])
    def test_single_pole(self, rule):
        poles, _ = cauchy_poles(1, rule)
        np.testing.assert_allclose(poles, [1j], atol=1e-15)

    def test_mapped_interval(self):
        poles, _ = cauchy_poles(4, interval=(2.0, 4.0))
        np.testing.assert_allclose(np.abs(poles - 3.0), 1.0, atol=1e-15)
        assert np.all(poles.imag > 0)

    def test_errors(self):
        with pytest.raises(SliceEigError):
            cauchy_poles(0)
        with pytest.raises(ValueError):
            cauchy_poles(3, "trapezoid")


class TestFilterShape:
    def test_gauss_center_value(self):
        f = find_ratf(p=3, kind="cauchy")
        assert 0.9 < f(0.0) < 1.1

    @pytest.mark.parametrize("p", [8, 10])
    def test_cauchy_approximates_step(self, p):
        f = find_ratf(p=p, kind="cauchy")
        t = np.concatenate([np.linspace(-0.8, 0.8, 41), np.linspace(1.2, 5, 41), -np.linspace(1.2, 5, 41)])
        assert np.abs(f(t) - (np.abs(t) <= 1)).max() <= 0.05

    @pytest.mark.parametrize("kw", [{"kind": "cauchy"}, {"p": 2, "repeats": 2}, {"p": 3, "repeats": (2, 1, 2)}])
    def test_endpoints_half(self, kw):
        f = find_ratf((0.4, 0.6), **kw)
        assert f(0.4) == pytest.approx(0.5, abs=1e-12)
        assert f(0.6) == pytest.approx(0.5, abs=1e-12)
        assert f.bar == 0.5

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.01, 3), st.floats(0, 4), st.sampled_from([1, 2, 3]))
    def test_reflection_symmetry(self, lo, width, x, p):
        f = find_ratf((lo, lo + width), p=p)
        c = lo + width / 2
        assert f(c - x * width) == pytest.approx(f(c + x * width), abs=1e-9)

    @pytest.mark.parametrize("kw", [{"kind": "cauchy"}, {"p": 1, "repeats": 3}])
    def test_decays(self, kw):
        f = find_ratf(**kw)
        vals = np.abs(f(np.array([10.0, 100.0, 1000.0])))
        assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-2

    def test_repeats_steepen_boundary(self):
        vals = [find_ratf(p=1, repeats=k)(1.1) for k in range(1, 7)]
        assert np.all(np.diff(vals) < 0)

    def test_ls_beats_cauchy_objective(self):
        poles, alpha = cauchy_poles(3)
        mults = (1, 1, 1)
        ls = ls_coeffs(poles, mults)
        cauchy = tuple(np.array([a]) for a in alpha)
        assert ls_objective(poles, mults, ls) <= ls_objective(poles, mults, cauchy)

    def test_ls_is_stationary(self):
        poles, _ = cauchy_poles(2)
        mults = (2, 2)
        best = ls_coeffs(poles, mults)
        base = ls_objective(poles, mults, best)
        rng = np.random.default_rng(0)
        for _ in range(5):
            bump = tuple(a + 1e-3 * (rng.standard_normal(a.size) + 1j * rng.standard_normal(a.size))
                         for a in best)
            assert ls_objective(poles, mults, bump) >= base


class TestValidation:
    def test_cap(self):
        with pytest.raises(SliceEigError, match=str(MAX_TOTAL_MULTIPLICITY)):
            find_ratf(p=1, repeats=MAX_TOTAL_MULTIPLICITY + 1)

    def test_rank_deficient(self):
        with pytest.raises(SliceEigError, match="rank-deficient"):
            ls_coeffs([1j, 1j], (1, 1))

    def test_lower_half_plane(self):
        with pytest.raises(SliceEigError):
            ls_coeffs([-1j], (1,))

    def test_palindrome(self):
        with pytest.raises(SliceEigError, match="reversed"):
            find_ratf(p=2, repeats=(1, 3))

    def test_cauchy_simple_only(self):
        with pytest.raises(SliceEigError):
            find_ratf(p=2, repeats=2, kind="cauchy")

    @pytest.mark.parametrize("kw", [{"interval": (1.0, 1.0)}, {"p": 3, "repeats": (1, 1)}])
    def test_shape_errors(self, kw):
        with pytest.raises(SliceEigError):
            find_ratf(**kw)

    def test_weight(self):
        with pytest.raises(ValueError):
            RatWeight(inside=0.0)
        with pytest.raises(ValueError):
            RatWeight(beta=1.0)


class TestApply:
    def test_diagonal(self):
        d = np.linspace(0.0, 3.0, 31)
        f = find_ratf((1.0, 1.6), p=3, repeats=(2, 1, 2))
        c = Counters()
        out = apply_rat(f, diag_solvers(f, d), None, np.ones(31), c)
        assert out.dtype == np.float64
        np.testing.assert_allclose(out, eval_rat(f, d), atol=1e-12)
        assert c.n_shift_solve == f.total_mult

    def test_eigenvector(self):
        A = gen_laplacian((30,))
        lam = laplacian_analytic_eigs((30,))
        x = np.sin(np.pi * 4 * np.arange(1, 31) / 31)
        f = find_ratf((0.1, 0.3))
        solvers = [factor_shifted(A, None, s) for s in f.shifts()]
        np.testing.assert_allclose(apply_rat(f, solvers, None, x), f(lam[3]) * x, atol=1e-11)

    def test_generalized_diagonal(self):
        a = np.linspace(1.0, 6.0, 15)
        b = np.linspace(2.0, 1.0, 15)
        f = find_ratf((1.5, 2.5), p=2, repeats=2)
        c = Counters()
        out = apply_rat(f, diag_solvers(f, a, b), np.diag(b), np.ones(15), c)
        np.testing.assert_allclose(out, f(a / b), atol=1e-12)
        assert c.n_B_matvec == f.total_mult

    def test_pair_matches_plain(self):
        a = np.linspace(1.0, 6.0, 15)
        b = np.linspace(2.0, 1.0, 15)
        f = find_ratf((1.5, 2.5), p=3, repeats=(2, 1, 2))
        z = np.random.default_rng(3).standard_normal(15)
        c = Counters()
        bx, x = apply_rat_pair(f, diag_solvers(f, a, b), np.diag(b), b * z, z, c)
        np.testing.assert_allclose(x, f(a / b) * z, atol=1e-12)
        np.testing.assert_allclose(bx, b * x, atol=1e-12)
        assert c.n_B_matvec == f.total_mult and c.n_shift_solve == f.total_mult

    def test_solver_count(self):
        f = find_ratf(p=3)
        with pytest.raises(SliceEigError):
            apply_rat(f, [lambda x: x], None, np.ones(3))

    def test_failed_solve_names_pole(self):
        f = find_ratf(p=1)

        def broken(x):
            raise ArithmeticError("singular")

        with pytest.raises(SliceEigError, match="pole 0"):
            apply_rat(f, [broken], None, np.ones(3))
