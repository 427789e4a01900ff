"""Design/family/target types and the deterministic moment quantities."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

import postselect as ps
from postselect.model import (
    IllConditionedError,
    conditional_from_gram,
    design_from_gram,
    mean_adjustment,
    scaled_omitted_bias,
    xi_from_gram,
)


def _design_with_gram(n, gram, seed=0):
    return design_from_gram(n, np.asarray(gram, dtype=float), seed=seed)


class TestTypes:
    def test_design_validation(self):
        with pytest.raises(ValueError):
            ps.RegressionDesign(np.ones((3, 3)))  # n == P
        with pytest.raises(ValueError):
            ps.RegressionDesign(np.ones((5, 2)))  # rank deficient
        with pytest.raises(ValueError):
            ps.RegressionDesign(np.array([[1.0, np.nan], [0.0, 1.0], [1.0, 2.0]]))
        d = ps.RegressionDesign(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 2.0]]))
        assert (d.n, d.P) == (3, 2)
        with pytest.raises(ValueError):
            d.X[0, 0] = 5.0  # immutable

    def test_family_validation(self):
        fam = ps.SelectionFamily(min_order=1, criticals=(2.015,))
        assert fam.P == 2
        assert fam.critical(1) == 0.0
        assert fam.critical(2) == 2.015
        with pytest.raises(ValueError):
            fam.critical(3)
        with pytest.raises(ValueError):
            ps.SelectionFamily(min_order=-1, criticals=(1.0,))
        with pytest.raises(ValueError):
            ps.SelectionFamily(min_order=0, criticals=())
        with pytest.raises(ValueError):
            ps.SelectionFamily(min_order=0, criticals=(0.0,))
        with pytest.raises(ValueError):
            ps.SelectionFamily(min_order=0, criticals=(np.inf,))

    def test_target_validation(self):
        with pytest.raises(ValueError):
            ps.TargetFunctional(np.ones((2, 2)))  # rank 1
        with pytest.raises(ValueError):
            ps.TargetFunctional(np.ones((3, 2)))  # k > P
        t = ps.TargetFunctional(np.array([[1.0, 0.0]]))
        assert (t.k, t.P) == (1, 2)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ps.ParameterPoint(theta=np.array([1.0]), sigma=0.0)
        with pytest.raises(ValueError):
            ps.ParameterPoint(theta=np.array([np.inf]), sigma=1.0)


class TestOrderOf:
    def test_examples(self):
        assert ps.order_of(np.zeros(4)) == 0
        assert ps.order_of(np.array([3.0, 0.0, 0.0])) == 1
        assert ps.order_of(np.array([0.0, -2.0, 0.0, 5.0])) == 4

    def test_exact_zero_semantics(self):
        assert ps.order_of(np.array([0.0, 1e-300])) == 2


class TestRestrictedMean:
    def test_orthogonal_columns_drop_cleanly(self):
        d = _design_with_gram(8, np.eye(3))
        theta = np.array([1.5, -2.0, 0.7])
        out = ps.restricted_ls_mean(d, theta, 1)
        assert out == pytest.approx([1.5, 0.0, 0.0], abs=1e-12)

    def test_full_order_is_identity(self):
        d = _design_with_gram(9, [[1.0, 0.4], [0.4, 2.0]])
        theta = np.array([0.3, -1.1])
        assert ps.restricted_ls_mean(d, theta, 2) == pytest.approx(theta)
        assert ps.restricted_ls_mean(d, theta, 0) == pytest.approx([0.0, 0.0])

    def test_two_by_two_cross_term(self):
        d = _design_with_gram(4, [[1.0, 0.5], [0.5, 1.0]])
        out = ps.restricted_ls_mean(d, np.array([0.0, 1.0]), 1)
        assert out == pytest.approx([0.5, 0.0], abs=1e-12)

    def test_trailing_entries_exactly_zero(self):
        d = _design_with_gram(12, np.eye(4) + 0.2)
        theta = np.array([1.0, 2.0, 3.0, 4.0])
        for p in range(5):
            out = ps.restricted_ls_mean(d, theta, p)
            assert np.all(out[p:] == 0.0)

    def test_order_containment_fixes_theta(self):
        d = _design_with_gram(10, np.eye(3) + 0.3)
        theta = np.array([2.0, -1.0, 0.0])
        for p in range(ps.order_of(theta), 4):
            assert ps.restricted_ls_mean(d, theta, p) == pytest.approx(theta, abs=1e-12)

    def test_out_of_range(self):
        d = _design_with_gram(8, np.eye(2))
        with pytest.raises(ValueError):
            ps.restricted_ls_mean(d, np.zeros(2), 3)


class TestXi:
    def test_identity_gram(self):
        d = _design_with_gram(9, np.eye(3))
        for p in (1, 2, 3):
            assert ps.xi(d, p) == pytest.approx(1.0, abs=1e-12)

    def test_correlated_two_by_two(self):
        d = _design_with_gram(9, [[1.0, 0.75], [0.75, 1.0]])
        assert ps.xi(d, 2) == pytest.approx(1.5118578920369089, abs=1e-12)

    def test_scalar_block(self):
        d = _design_with_gram(5, [[4.0]])
        assert ps.xi(d, 1) == pytest.approx(0.5, abs=1e-14)

    def test_out_of_range(self):
        d = _design_with_gram(8, np.eye(2))
        with pytest.raises(ValueError):
            ps.xi(d, 0)


class TestConditionalQuantities:
    def test_leading_identity_block_is_degenerate(self):
        # target = the first p coordinates: the tested coefficient is a
        # coordinate of the transform, so the conditional scale vanishes
        d = _design_with_gram(10, np.eye(3) + 0.25)
        target = ps.TargetFunctional(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        _, _, zeta_sq = ps.conditional_quantities(d, target, 2)
        assert zeta_sq == 0.0

    def test_two_regressor_closed_form(self):
        rho = 0.6
        d = _design_with_gram(9, [[1.0, rho], [rho, 1.0]])
        target = ps.TargetFunctional(np.array([[1.0, 0.0]]))
        C, b, zeta_sq = ps.conditional_quantities(d, target, 2)
        assert C[0] == pytest.approx(-rho / (1 - rho**2), abs=1e-12)
        assert zeta_sq == pytest.approx(1.0, abs=1e-10)

    def test_uncorrelated_target_keeps_full_scale(self):
        # second row of A orthogonal to the tested coefficient at p = 1:
        # with an identity gram the transform carries no information on it
        d = _design_with_gram(10, np.eye(2))
        target = ps.TargetFunctional(np.array([[0.0, 1.0]]))
        C, b, zeta_sq = ps.conditional_quantities(d, target, 1)
        assert np.all(C == 0.0)
        assert zeta_sq == pytest.approx(xi_from_gram(d.gram, 1) ** 2)

    @given(st.integers(0, 10**6))
    def test_zeta_between_zero_and_xi(self, seed):
        rng = np.random.default_rng(seed)
        P = int(rng.integers(1, 5))
        base = rng.standard_normal((P + 3, P))
        gram = base.T @ base / (P + 3) + 0.5 * np.eye(P)
        k = int(rng.integers(1, P + 1))
        A = rng.standard_normal((k, P))
        p = int(rng.integers(1, P + 1))
        _, _, zeta_sq = conditional_from_gram(gram, A, p)
        assert 0.0 <= zeta_sq <= xi_from_gram(gram, p) ** 2 + 1e-10

    @given(st.integers(0, 10**6))
    def test_generalized_inverse_invariance(self, seed):
        # on the column space of the leading target block, the conditional
        # regression value does not depend on the choice of generalized
        # inverse; perturb the pseudoinverse by the g-inverse family and
        # compare on rank-deficient cases
        rng = np.random.default_rng(seed)
        P, k, p = 3, 2, 1  # A[:, :p] is k x 1: rank 1 < k
        base = rng.standard_normal((P + 3, P))
        gram = base.T @ base / (P + 3) + 0.5 * np.eye(P)
        A = rng.standard_normal((k, P))
        C, b, _ = conditional_from_gram(gram, A, p)
        Ap = A[:, :p]
        chol = np.linalg.inv(gram[:p, :p])
        M = Ap @ chol @ Ap.T
        G1 = np.linalg.pinv(M)
        V = rng.standard_normal((k, k))
        G2 = G1 + V - G1 @ M @ V @ M @ G1
        assert np.allclose(M @ G2 @ M, M, atol=1e-8)
        w = rng.standard_normal(p)
        z = Ap @ w  # in the column space of A[:, :p]
        assert C @ G1 @ z == pytest.approx(C @ G2 @ z, abs=1e-10)


class TestGaussianComponent:
    def test_point_mass_at_zero_order(self, classic_components):
        design, _, target, params = classic_components
        comp = ps.gaussian_component(design, target, params, 0)
        assert comp.rank == 0
        assert comp.mean_shift == pytest.approx(
            -np.sqrt(design.n) * (target.A @ params.theta)
        )

    def test_full_model_variance(self):
        d = _design_with_gram(9, np.linalg.inv([[1.0, 0.75], [0.75, 1.0]]))
        target = ps.TargetFunctional(np.array([[1.0, 0.0]]))
        params = ps.ParameterPoint(theta=np.zeros(2), sigma=1.0)
        comp = ps.gaussian_component(d, target, params, 2)
        assert comp.covariance[0, 0] == pytest.approx(1.0, abs=1e-10)
        d2 = _design_with_gram(9, [[1.0, 0.75], [0.75, 1.0]])
        comp2 = ps.gaussian_component(d2, target, params, 2)
        assert comp2.covariance[0, 0] == pytest.approx(1.0 / (1 - 0.75**2), abs=1e-10)

    def test_contained_parameter_has_no_shift(self):
        d = _design_with_gram(9, [[1.0, 0.4], [0.4, 1.0]])
        target = ps.TargetFunctional(np.array([[1.0, 0.0]]))
        params = ps.ParameterPoint(theta=np.array([2.0, 0.0]), sigma=1.0)
        comp = ps.gaussian_component(d, target, params, 1)
        assert comp.mean_shift == pytest.approx([0.0], abs=1e-12)


class TestGramHelpers:
    def test_mean_adjustment_shapes(self):
        gram = np.eye(3) + 0.2
        assert mean_adjustment(gram, 0).shape == (0, 3)
        assert mean_adjustment(gram, 3).shape == (3, 0)

    def test_scaled_omitted_bias_identity_gram(self):
        out = scaled_omitted_bias(np.eye(3), np.array([2.0, -1.0]), 1)
        assert out == pytest.approx([0.0, -2.0, 1.0])

    def test_singular_block_raises(self):
        gram = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(IllConditionedError):
            xi_from_gram(gram, 2)


class TestDesignConstruction:
    def test_design_from_gram_exact(self):
        gram = np.array([[2.0, -0.3], [-0.3, 0.5]])
        d = design_from_gram(40, gram, seed=4)
        assert np.allclose(d.gram, gram, atol=1e-12)
        d2 = design_from_gram(40, gram, seed=4)
        assert np.array_equal(d.X, d2.X)

    def test_load_design_csv(self, tmp_path):
        X = np.random.default_rng(0).standard_normal((6, 2))
        path = tmp_path / "design.csv"
        np.savetxt(path, X, delimiter=",")
        d = ps.load_design_csv(path)
        assert d.n == 6 and d.P == 2
        assert np.allclose(d.X, X)
