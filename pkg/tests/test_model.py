import numpy as np
import pytest

from intmr.model import (
    DatasetBlock,
    IntegratedDataset,
    HyperParams,
    ModelFit,
    objective,
    residual_matrix,
    group_norms,
    predict,
)
from helpers import make_data, random_fit, objective_reference


def one_block_scalar():
    # n=1, p=q=1, no specific covariates
    return IntegratedDataset(
        (DatasetBlock(Y=np.array([[2.0]]), X=np.array([[1.0]]), Z=None),)
    )


class TestContainers:
    def test_block_shapes_and_missing_z(self):
        b = DatasetBlock(Y=np.ones((4, 2)), X=np.ones((4, 3)))
        assert (b.n, b.p, b.q, b.r) == (4, 3, 2, 0)
        assert b.Z.shape == (4, 0)

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DatasetBlock(Y=np.ones((4, 2)), X=np.ones((5, 3)))

    def test_non_finite_rejected(self):
        Y = np.ones((3, 2))
        Y[0, 0] = np.nan
        with pytest.raises(ValueError):
            DatasetBlock(Y=Y, X=np.ones((3, 1)))

    def test_blocks_are_read_only(self):
        b = DatasetBlock(Y=np.ones((3, 2)), X=np.ones((3, 1)))
        with pytest.raises(ValueError):
            b.Y[0, 0] = 5.0

    def test_dimension_agreement_across_blocks(self):
        b1 = DatasetBlock(Y=np.ones((3, 2)), X=np.ones((3, 2)))
        b2 = DatasetBlock(Y=np.ones((5, 2)), X=np.ones((5, 3)))
        with pytest.raises(ValueError):
            IntegratedDataset((b1, b2))

    def test_varying_specific_widths_allowed(self):
        b1 = DatasetBlock(Y=np.ones((3, 2)), X=np.ones((3, 2)), Z=np.ones((3, 4)))
        b2 = DatasetBlock(Y=np.ones((5, 2)), X=np.ones((5, 2)))
        data = IntegratedDataset((b1, b2))
        assert data.M == 2 and data.p == 2 and data.q == 2
        assert [b.r for b in data] == [4, 0]

    def test_hyperparams_validation(self):
        HyperParams(0.0, 0.0)
        with pytest.raises(ValueError):
            HyperParams(-1.0, 0.0)
        with pytest.raises(ValueError):
            HyperParams(0.0, -0.5)
        with pytest.raises(ValueError):
            HyperParams(0.1, 0.1, rho=0.0)

    def test_fit_supports_reflect_exact_zeros(self):
        B1 = np.array([[1.0, 0.0], [0.0, 0.0]])
        B2 = np.array([[0.5, 0.0], [0.0, 0.0]])
        fit = ModelFit(
            alpha=(np.zeros(2), np.zeros(2)),
            B=(B1, B2),
            C=(np.array([[0.0, 2.0]]), np.zeros((0, 2))),
        )
        assert np.array_equal(fit.support_B, [[True, False], [False, False]])
        assert np.array_equal(fit.support_C[0], [[False, True]])
        assert fit.support_is_homogeneous()


class TestResiduals:
    def test_perfect_fit_gives_zero(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 3))
        Z = rng.standard_normal((6, 2))
        B = rng.standard_normal((3, 2))
        C = rng.standard_normal((2, 2))
        a = rng.standard_normal(2)
        block = DatasetBlock(Y=a + X @ B + Z @ C, X=X, Z=Z)
        R = residual_matrix(block, a, B, C)
        assert np.abs(R).max() < 1e-12

    def test_matches_direct_arithmetic(self):
        rng = np.random.default_rng(1)
        data = make_data(rng, M=1, n=8, p=3, q=2, r=2)
        block = data[0]
        a = rng.standard_normal(2)
        B = rng.standard_normal((3, 2))
        C = rng.standard_normal((2, 2))
        R = residual_matrix(block, a, B, C)
        direct = block.Y - (np.ones((8, 1)) @ a[None, :] + block.X @ B + block.Z @ C)
        assert np.allclose(R, direct, atol=1e-14)

    def test_shape_mismatch_rejected(self):
        block = DatasetBlock(Y=np.ones((4, 2)), X=np.ones((4, 3)))
        with pytest.raises(ValueError):
            residual_matrix(block, np.zeros(2), np.zeros((2, 2)), np.zeros((0, 2)))

    def test_predict_inverts_residual(self):
        rng = np.random.default_rng(2)
        data = make_data(rng, M=1, n=5, p=2, q=2, r=1)
        block = data[0]
        fit = random_fit(rng, data)
        total = predict(block, fit.alpha[0], fit.B[0], fit.C[0]) + residual_matrix(
            block, fit.alpha[0], fit.B[0], fit.C[0]
        )
        assert np.allclose(total, block.Y, atol=1e-14)


class TestGroupNorms:
    def test_known_values(self):
        B1 = np.array([[3.0, 0.0]])
        B2 = np.array([[4.0, 0.0]])
        gn = group_norms([B1, B2])
        assert np.allclose(gn, [[5.0, 0.0]])

    def test_single_dataset_is_absolute_value(self):
        B = np.array([[-2.0, 0.5]])
        assert np.allclose(group_norms([B]), np.abs(B))


class TestObjective:
    def test_scalar_case_frozen(self):
        # loss 0.5*(2-1)^2 plus group penalty 1*|1|
        data = one_block_scalar()
        fit = ModelFit(alpha=(np.zeros(1),), B=(np.array([[1.0]]),), C=(np.zeros((0, 1)),))
        val = objective(data, fit, HyperParams(lam=1.0, gamma=0.0))
        assert val == pytest.approx(1.5, abs=1e-15)

    def test_zero_fit_is_pure_response_energy(self):
        rng = np.random.default_rng(3)
        data = make_data(rng, M=2, n=6, p=2, q=2, r=1)
        fit = ModelFit(
            alpha=tuple(np.zeros(2) for _ in range(2)),
            B=tuple(np.zeros((2, 2)) for _ in range(2)),
            C=tuple(np.zeros((b.r, 2)) for b in data),
        )
        val = objective(data, fit, HyperParams(5.0, 5.0))
        expect = sum(0.5 / b.n * (b.Y**2).sum() for b in data)
        assert val == pytest.approx(expect, rel=1e-14)

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            data = make_data(
                rng,
                M=int(rng.integers(1, 4)),
                n=int(rng.integers(4, 12)),
                p=int(rng.integers(0, 4)),
                q=int(rng.integers(1, 3)),
                r=int(rng.integers(0, 3)),
            )
            fit = random_fit(rng, data)
            lam, gamma = rng.uniform(0, 2, size=2)
            hp = HyperParams(lam=lam, gamma=gamma)
            mine = objective(data, fit, hp)
            ref = objective_reference(
                data, list(fit.alpha), list(fit.B), list(fit.C), lam, gamma
            )
            assert mine == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_dataset_permutation_invariance(self):
        rng = np.random.default_rng(5)
        data = make_data(rng, M=3, n=7, p=3, q=2, r=[1, 2, 0])
        fit = random_fit(rng, data)
        hp = HyperParams(0.4, 0.7)
        base = objective(data, fit, hp)
        perm = [2, 0, 1]
        data_p = IntegratedDataset(tuple(data[i] for i in perm))
        fit_p = ModelFit(
            alpha=tuple(fit.alpha[i] for i in perm),
            B=tuple(fit.B[i] for i in perm),
            C=tuple(fit.C[i] for i in perm),
        )
        assert objective(data_p, fit_p, hp) == pytest.approx(base, rel=1e-14)

    def test_zero_penalties_reduce_to_loss(self):
        rng = np.random.default_rng(6)
        data = make_data(rng, M=2, n=6, p=2, q=2, r=2)
        fit = random_fit(rng, data)
        val = objective(data, fit, HyperParams(0.0, 0.0))
        loss = sum(
            0.5
            / b.n
            * (residual_matrix(b, fit.alpha[m], fit.B[m], fit.C[m]) ** 2).sum()
            for m, b in enumerate(data)
        )
        assert val == pytest.approx(loss, rel=1e-14)

    def test_growing_a_coefficient_off_perfect_fit_increases(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((10, 2))
        B = np.array([[1.0, 0.0], [0.0, 2.0]])
        data = IntegratedDataset((DatasetBlock(Y=X @ B, X=X),))
        hp = HyperParams(0.3, 0.3)
        exact = ModelFit(alpha=(np.zeros(2),), B=(B,), C=(np.zeros((0, 2)),))
        bumped = B.copy()
        bumped[0, 1] += 0.5
        worse = ModelFit(alpha=(np.zeros(2),), B=(bumped,), C=(np.zeros((0, 2)),))
        assert objective(data, worse, hp) > objective(data, exact, hp)

    def test_convexity_along_segments(self):
        rng = np.random.default_rng(8)
        data = make_data(rng, M=2, n=8, p=3, q=2, r=2)
        hp = HyperParams(0.8, 0.6)
        for _ in range(50):
            f1 = random_fit(rng, data)
            f2 = random_fit(rng, data)
            t = float(rng.uniform())
            mix = ModelFit(
                alpha=tuple(t * a1 + (1 - t) * a2 for a1, a2 in zip(f1.alpha, f2.alpha)),
                B=tuple(t * b1 + (1 - t) * b2 for b1, b2 in zip(f1.B, f2.B)),
                C=tuple(t * c1 + (1 - t) * c2 for c1, c2 in zip(f1.C, f2.C)),
            )
            bound = t * objective(data, f1, hp) + (1 - t) * objective(data, f2, hp)
            assert objective(data, mix, hp) <= bound + 1e-12

    def test_fit_data_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        data = make_data(rng, M=2, n=6, p=3, q=2, r=2)
        other = make_data(rng, M=2, n=6, p=4, q=2, r=2)
        fit = random_fit(rng, other)
        with pytest.raises(ValueError):
            objective(data, fit, HyperParams(0.1, 0.1))
