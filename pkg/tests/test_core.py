import numpy as np
import pytest
from scipy import stats

from netggm.core import (
    CovariateMatrix,
    DataMatrix,
    NetworkStack,
    NotPositiveDefiniteError,
    PrecisionParam,
    assemble_precision,
    gaussian_loglik,
    partial_corr_of,
    precision_param_of,
    residualize,
    sample_cov,
    standardize_offdiag,
)


def random_valid_param(rng, p):
    # build from a random PD precision so validity is guaranteed
    a = rng.standard_normal((p, 2 * p))
    theta = a @ a.T / (2 * p) + 0.5 * np.eye(p)
    return precision_param_of(theta)


def test_assemble_two_by_two():
    q = PrecisionParam(sqrt_diag=[1.0, 1.0], partial_corr=[[0.0, -0.5], [-0.5, 0.0]])
    np.testing.assert_allclose(assemble_precision(q), [[1.0, 0.5], [0.5, 1.0]])


def test_assemble_zero_rho_is_diagonal():
    q = PrecisionParam(sqrt_diag=[2.0, 3.0], partial_corr=np.zeros((2, 2)))
    np.testing.assert_allclose(assemble_precision(q), np.diag([4.0, 9.0]))


def test_assemble_partial_corr_round_trip():
    rng = np.random.default_rng(42)
    for _ in range(10):
        q = random_valid_param(rng, 4)
        rho = partial_corr_of(assemble_precision(q))
        np.testing.assert_allclose(rho, q.partial_corr, atol=1e-12)


def test_partial_corr_trivial_cases():
    rho = partial_corr_of(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert rho[0, 1] == pytest.approx(-0.5)
    np.testing.assert_allclose(partial_corr_of(np.eye(4)), np.zeros((4, 4)))


def test_partial_corr_rejects_non_pd():
    with pytest.raises(NotPositiveDefiniteError, match="positive definite"):
        partial_corr_of(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_partial_corr_matches_conditional_correlation_oracle():
    # Oracle: population conditional correlation of (j, k) given the rest,
    # from the Schur complement of Sigma - an independent computation path.
    rng = np.random.default_rng(7)
    a = rng.standard_normal((3, 6))
    sigma = a @ a.T / 6 + 0.4 * np.eye(3)
    dinv = np.diag(1 / np.sqrt(np.diag(sigma)))
    sigma = dinv @ sigma @ dinv  # correlation matrix
    theta = np.linalg.inv(sigma)
    rho = partial_corr_of(theta)
    for j, k in [(0, 1), (0, 2), (1, 2)]:
        rest = [i for i in range(3) if i not in (j, k)]
        s_jk = sigma[np.ix_([j, k], [j, k])]
        s_jr = sigma[np.ix_([j, k], rest)]
        s_rr = sigma[np.ix_(rest, rest)]
        cond = s_jk - s_jr @ np.linalg.inv(s_rr) @ s_jr.T
        expect = cond[0, 1] / np.sqrt(cond[0, 0] * cond[1, 1])
        assert rho[j, k] == pytest.approx(expect, abs=1e-12)


def test_partial_corr_scale_invariance():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 8))
    theta = a @ a.T / 8 + 0.3 * np.eye(4)
    d = np.diag(rng.uniform(0.2, 3.0, 4))
    np.testing.assert_allclose(
        partial_corr_of(d @ theta @ d), partial_corr_of(theta), atol=1e-12)


def test_gaussian_loglik_scalar_case():
    S = np.array([[1.0]])
    val = gaussian_loglik(S, np.array([[1.0]]), n=2)
    assert val == pytest.approx(-np.log(2 * np.pi) - 1.0)


def test_gaussian_loglik_mle_property():
    rng = np.random.default_rng(11)
    y = rng.standard_normal((30, 3))
    S = sample_cov(DataMatrix(y))
    theta_mle = np.linalg.inv(S.S)
    base = gaussian_loglik(S, theta_mle, n=30)
    for _ in range(20):
        e = rng.standard_normal((3, 3)) * 0.05
        pert = theta_mle + 0.5 * (e + e.T)
        try:
            assert gaussian_loglik(S, pert, n=30) <= base + 1e-9
        except NotPositiveDefiniteError:
            pass


def test_gaussian_loglik_matches_density_product_oracle():
    # Oracle: direct sum of multivariate normal log densities over rows.
    rng = np.random.default_rng(5)
    y = rng.standard_normal((12, 3))
    S = sample_cov(DataMatrix(y))
    a = rng.standard_normal((3, 5))
    theta = a @ a.T / 5 + 0.5 * np.eye(3)
    expect = stats.multivariate_normal(
        mean=np.zeros(3), cov=np.linalg.inv(theta)).logpdf(y).sum()
    assert gaussian_loglik(S, theta, n=12) == pytest.approx(expect, rel=1e-10)


def test_gaussian_loglik_permutation_invariance():
    rng = np.random.default_rng(9)
    y = rng.standard_normal((15, 4))
    S = sample_cov(DataMatrix(y)).S
    a = rng.standard_normal((4, 6))
    theta = a @ a.T / 6 + 0.5 * np.eye(4)
    perm = rng.permutation(4)
    assert gaussian_loglik(S, theta, 15) == pytest.approx(
        gaussian_loglik(S[np.ix_(perm, perm)], theta[np.ix_(perm, perm)], 15))


def test_residualize_exact_fit_gives_zero():
    rng = np.random.default_rng(21)
    x = CovariateMatrix(rng.standard_normal((20, 2)), intercept=True)
    B = rng.standard_normal((3, 3))  # includes intercept row
    y = DataMatrix(x.design() @ B)
    res = residualize(y, x)
    assert np.max(np.abs(res.values)) < 1e-10


def test_residualize_intercept_only_demeans():
    rng = np.random.default_rng(22)
    y = DataMatrix(rng.standard_normal((15, 3)) + 5.0)
    x = CovariateMatrix(np.zeros((15, 0)), intercept=True)
    res = residualize(y, x)
    np.testing.assert_allclose(res.values, y.values - y.values.mean(0), atol=1e-12)


def test_residualize_orthogonality_and_idempotence():
    rng = np.random.default_rng(23)
    x = CovariateMatrix(rng.standard_normal((30, 3)), intercept=True)
    y = DataMatrix(rng.standard_normal((30, 4)))
    res = residualize(y, x)
    # normal equations: residuals orthogonal to every design column
    assert np.max(np.abs(x.design().T @ res.values)) < 1e-10
    res2 = residualize(res, x)
    np.testing.assert_allclose(res2.values, res.values, atol=1e-10)


def test_residualize_rank_deficient_names_columns():
    z = np.random.default_rng(2).standard_normal(10)
    x = CovariateMatrix(np.column_stack([z, 2.0 * z]), intercept=False)
    y = DataMatrix(np.random.default_rng(3).standard_normal((10, 2)))
    with pytest.raises(ValueError, match="collinear.*column 1"):
        residualize(y, x)


def test_sample_cov_identical_rows():
    c = np.array([1.0, -2.0, 0.5])
    y = DataMatrix(np.tile(c, (4, 1)))
    np.testing.assert_allclose(sample_cov(y).S, np.outer(c, c), atol=1e-12)


def test_sample_cov_antithetic_pair():
    v = np.array([0.7, -1.2])
    y = DataMatrix(np.vstack([v, -v]))
    np.testing.assert_allclose(sample_cov(y).S, np.outer(v, v), atol=1e-12)


def test_sample_cov_matches_loop_oracle():
    rng = np.random.default_rng(31)
    y = rng.standard_normal((5, 3))
    expect = np.zeros((3, 3))
    for i in range(5):
        expect += np.outer(y[i], y[i])
    expect /= 5
    np.testing.assert_allclose(sample_cov(DataMatrix(y)).S, expect, atol=1e-12)


def test_network_standardization_moments():
    rng = np.random.default_rng(41)
    a = rng.standard_normal((6, 6)) * 3 + 1
    a = 0.5 * (a + a.T)
    stack = NetworkStack(raw=(a,))
    iu = np.triu_indices(6, 1)
    vals = stack.standardized[0][iu]
    assert abs(vals.mean()) < 1e-10
    assert abs(vals.var() - 1.0) < 1e-10


def test_network_stack_rejects_asymmetry():
    a = np.eye(4)
    a[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetric"):
        NetworkStack(raw=(a,))


def test_standardize_offdiag_rejects_constant():
    with pytest.raises(ValueError, match="constant"):
        standardize_offdiag(np.ones((4, 4)))


def test_precision_param_validity_query():
    good = PrecisionParam(sqrt_diag=[1.0, 1.0], partial_corr=[[0, 0.3], [0.3, 0]])
    assert good.is_valid()
    # all pairs at +0.9 is an inconsistent pattern -> indefinite, still constructible
    r = np.array([[0, 0.9, 0.9], [0.9, 0, 0.9], [0.9, 0.9, 0]])
    bad = PrecisionParam(sqrt_diag=[1.0, 1.0, 1.0], partial_corr=r)
    assert not bad.is_valid()


def test_data_matrix_validation():
    with pytest.raises(ValueError, match="non-finite"):
        DataMatrix(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="2 observations"):
        DataMatrix(np.ones((1, 3)))
