import numpy as np
import pytest
import scipy.sparse as sp

from covplan.core.errors import SingularFactorError
from covplan.core.layout import scalar
from covplan.core.recovery import (
    covariance_cache,
    full_covariance,
    marginal_blocks,
    prior_columns,
    recover_backsubstitution,
    recover_recursive,
)


@pytest.mark.parametrize("seed", range(5))
def test_baselines_match_dense_inverse(spd_system, seed):
    lam, belief = spd_system(30 + 10 * seed, seed=seed)
    p = belief.permutation
    dense = np.linalg.inv(lam[np.ix_(p, p)])
    np.testing.assert_allclose(recover_recursive(belief.sqrt_factor), dense, atol=1e-9)
    np.testing.assert_allclose(recover_backsubstitution(belief.sqrt_factor), dense, atol=1e-9)


def test_recursive_on_banded_factor():
    r = sp.diags([np.full(6, 2.0), np.full(5, 0.5)], [0, 1], format="csr")
    expected = np.linalg.inv(r.toarray().T @ r.toarray())
    np.testing.assert_allclose(recover_recursive(r), expected, atol=1e-12)


def test_full_covariance_undoes_permutation(spd_system):
    lam, belief = spd_system(15, seed=2)
    for method in ("recursive", "backsub"):
        np.testing.assert_allclose(full_covariance(belief, method), np.linalg.inv(lam), atol=1e-9)


def test_prior_columns_and_marginals(spd_system):
    lam, belief = spd_system(20, seed=4)
    sigma = np.linalg.inv(lam)
    keys = [scalar(7), scalar(2), scalar(11)]
    np.testing.assert_allclose(prior_columns(belief, keys), sigma[:, [7, 2, 11]], atol=1e-10)
    np.testing.assert_allclose(
        marginal_blocks(belief, keys), sigma[np.ix_([7, 2, 11], [7, 2, 11])], atol=1e-10
    )
    assert prior_columns(belief, []).shape == (20, 0)


def test_conditional_cache_is_schur_complement(spd_system):
    lam, belief = spd_system(10, seed=5)
    sigma = np.linalg.inv(lam)
    y, f = [0, 3], [5, 8]
    expected = sigma[np.ix_(y, y)] - sigma[np.ix_(y, f)] @ np.linalg.solve(
        sigma[np.ix_(f, f)], sigma[np.ix_(f, y)]
    )
    cache = covariance_cache(belief, [scalar(0), scalar(3)], conditioned_on=[scalar(5), scalar(8)])
    assert cache.conditional
    np.testing.assert_allclose(cache.matrix, expected, atol=1e-10)
    # conditioning on F is the same as inverting the information without F
    keep = [i for i in range(10) if i not in f]
    inner = np.linalg.inv(lam[np.ix_(keep, keep)])
    np.testing.assert_allclose(cache.matrix, inner[np.ix_([0, 3], [0, 3])], atol=1e-10)


def test_zero_diagonal_is_singular():
    r = np.array([[1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(SingularFactorError):
        recover_backsubstitution(r)
    with pytest.raises(SingularFactorError):
        recover_recursive(r)
