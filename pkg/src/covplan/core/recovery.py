"""Covariance recovery from the square-root information factor."""

from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg as la
from scipy.sparse import linalg as spla

from covplan.core.belief import BeliefState
from covplan.core.errors import SingularFactorError
from covplan.core.layout import VariableKey, unique_keys
from covplan.core.lemmas import CovarianceCache, symmetrize
from covplan.core.ordering import inverse_permutation


def _check_diagonal(diag: np.ndarray) -> None:
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularFactorError(f"square-root factor (zero diagonal at {int(zero[0])})")


def recover_recursive(r) -> np.ndarray:
    """Sigma = R^-1 R^-T from the recursive entry formulas, last row first.

    Off-diagonal entries of row i only need the nonzeros of R's row i and the
    rows below it, so each row costs O(nnz(row) * n).
    """
    r = sp.csr_matrix(r)
    n = r.shape[0]
    diag = r.diagonal()
    _check_diagonal(diag)
    sigma = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        start, end = r.indptr[i], r.indptr[i + 1]
        cols, vals = r.indices[start:end], r.data[start:end]
        above = cols > i
        cols, vals = cols[above], vals[above]
        rii = diag[i]
        if cols.size:
            off = -(vals @ sigma[cols, i + 1 :]) / rii
            sigma[i, i + 1 :] = off
            sigma[i + 1 :, i] = off
            sigma[i, i] = (1.0 / rii - vals @ off[cols - i - 1]) / rii
        else:
            sigma[i, i] = 1.0 / (rii * rii)
    return sigma


def recover_backsubstitution(r) -> np.ndarray:
    """Sigma = V V^T with V = R \\ I, by sparse triangular solves."""
    r = sp.csr_matrix(r)
    n = r.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    _check_diagonal(r.diagonal())
    v = spla.spsolve_triangular(r, np.eye(n), lower=False)
    return symmetrize(v @ v.T)


RECOVERY_METHODS = {
    "recursive": recover_recursive,
    "backsub": recover_backsubstitution,
}


def full_covariance(belief: BeliefState, method: str = "backsub") -> np.ndarray:
    """Full covariance in layout order, recovered with a baseline method."""
    sigma_p = RECOVERY_METHODS[method](belief.sqrt_factor)
    pinv = inverse_permutation(belief.permutation)
    return sigma_p[np.ix_(pinv, pinv)]


def prior_columns(belief: BeliefState, keys: Sequence[VariableKey]) -> np.ndarray:
    """Columns Sigma^(:,Y) in layout order by two triangular solves."""
    cols = belief.layout.indices(keys)
    n = belief.dim
    if cols.size == 0 or n == 0:
        return np.zeros((n, cols.size))
    r = sp.csr_matrix(belief.sqrt_factor)
    pinv = inverse_permutation(belief.permutation)
    rhs = np.zeros((n, cols.size))
    rhs[pinv[cols], np.arange(cols.size)] = 1.0
    diag = r.diagonal()
    _check_diagonal(diag)
    v = spla.spsolve_triangular(r.T.tocsr(), rhs, lower=True)
    x = spla.spsolve_triangular(r, v, lower=False)
    return np.atleast_2d(x.reshape(n, cols.size))[pinv]


def marginal_blocks(belief: BeliefState, keys: Sequence[VariableKey]) -> np.ndarray:
    """Joint marginal covariance over ``keys``."""
    slab = prior_columns(belief, keys)
    return symmetrize(slab[belief.layout.indices(keys)])


def covariance_cache(
    belief: BeliefState,
    keys: Sequence[VariableKey],
    conditioned_on: Sequence[VariableKey] = (),
) -> CovarianceCache:
    """Cache over ``keys`` from a belief; conditional caches use a Schur complement over F."""
    keys = list(keys)
    conditioned_on = list(conditioned_on)
    if not conditioned_on:
        return CovarianceCache(tuple(keys), marginal_blocks(belief, keys))
    joint_keys = unique_keys(keys, conditioned_on)
    joint = marginal_blocks(belief, joint_keys)
    cache = CovarianceCache(tuple(joint_keys), joint)
    s_wf = cache.block(keys, conditioned_on)
    s_ff = cache.block(conditioned_on)
    conditional = cache.block(keys) - s_wf @ la.solve(s_ff, s_wf.T, assume_a="pos")
    return CovarianceCache(tuple(keys), symmetrize(conditional), tuple(conditioned_on))
