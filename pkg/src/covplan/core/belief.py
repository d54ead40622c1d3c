"""Information-form Gaussian belief with a square-root factor."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from covplan.core.errors import DimensionMismatchError, NotPositiveDefiniteError
from covplan.core.layout import StateLayout, total_dim
from covplan.core.lemmas import ChangeKind, InferenceChange
from covplan.core.ordering import fill_reducing_ordering

# pivots below this (relative to the largest diagonal entry) count as non-PD
PIVOT_TOLERANCE = 1e-12


def factorize(
    information: sp.spmatrix, ordering: Optional[np.ndarray] = None
) -> sp.csr_matrix:
    """Sparse upper-triangular R with R^T R = information[ordering][:, ordering].

    SuperLU factors the reordered matrix in the given order with diagonal
    pivots only, so Lambda = L U with U = D L^T and R = D^-1/2 U.
    """
    n = information.shape[0]
    if n == 0:
        return sp.csr_matrix((0, 0))
    lam = sp.csc_matrix(information)
    if ordering is not None:
        lam = lam[ordering, :][:, ordering].tocsc()
    scale = max(1.0, float(np.abs(lam.diagonal()).max()))
    try:
        lu = spla.splu(
            lam,
            permc_spec="NATURAL",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True, Equil=False),
        )
    except RuntimeError as e:
        # exactly singular: SuperLU does not say where
        raise NotPositiveDefiniteError("information matrix") from e
    swapped = np.flatnonzero(lu.perm_r != np.arange(n))
    if swapped.size:
        raise NotPositiveDefiniteError("information matrix", int(swapped[0]))
    u = lu.U.tocsr()
    pivots = u.diagonal()
    small = np.flatnonzero(pivots <= PIVOT_TOLERANCE * scale)
    if small.size:
        raise NotPositiveDefiniteError("information matrix", int(small[0]))
    r = sp.diags(1.0 / np.sqrt(pivots)) @ u
    return sp.triu(r, format="csr")


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Gaussian belief (mean, information matrix, information vector) plus its factor.

    ``sqrt_factor`` is R with R^T R = information[permutation][:, permutation].
    ``linearization_point`` is where the information matrix was linearized,
    per variable; it may lag the mean for variables not yet relinearized.
    """

    layout: StateLayout
    mean: np.ndarray
    information: sp.csr_matrix
    eta: np.ndarray
    sqrt_factor: sp.csr_matrix
    permutation: np.ndarray
    linearization_point: np.ndarray

    @classmethod
    def from_information(
        cls,
        layout: StateLayout,
        information: sp.spmatrix,
        mean: np.ndarray,
        linearization_point: Optional[np.ndarray] = None,
    ) -> "BeliefState":
        information = sp.csr_matrix(information)
        if information.shape != (layout.dim, layout.dim):
            raise DimensionMismatchError(
                "information matrix", (layout.dim, layout.dim), information.shape
            )
        mean = np.asarray(mean, dtype=float)
        if mean.shape != (layout.dim,):
            raise DimensionMismatchError("mean", (layout.dim,), mean.shape)
        information = sp.csr_matrix(0.5 * (information + information.T))
        permutation = fill_reducing_ordering(information, layout)
        r = factorize(information, permutation)
        lin = mean.copy() if linearization_point is None else np.asarray(linearization_point)
        return cls(layout, mean, information, information @ mean, r, permutation, lin)

    @classmethod
    def empty(cls) -> "BeliefState":
        z = np.zeros(0)
        return cls(
            StateLayout(), z, sp.csr_matrix((0, 0)), z, sp.csr_matrix((0, 0)),
            np.zeros(0, dtype=np.int64), z,
        )

    @property
    def dim(self) -> int:
        return self.layout.dim

    def value(self, key) -> np.ndarray:
        return self.mean[self.layout.slice(key)]

    def values(self) -> dict:
        return {k: self.value(k) for k in self.layout}


def _change_matrix(change: InferenceChange, layout: StateLayout, a_involved) -> sp.csr_matrix:
    """Embed change Jacobian blocks as an m x layout.dim sparse matrix."""
    m = a_involved.shape[0]
    full = np.zeros((m, layout.dim))
    full[:, layout.indices(change.involved)] = a_involved
    if change.new_keys:
        full[:, layout.indices(change.new_keys)] = change.a_new
    return sp.csr_matrix(full)


def apply_information_update(
    belief: BeliefState,
    change: InferenceChange,
    new_values: Optional[np.ndarray] = None,
) -> BeliefState:
    """Posterior belief after a change.

    Lambda_+ = Lambda_+^Aug + A^T A, minus A_-^T A_- for a relinearization.

    New variables take ``new_values`` as mean and linearization point (zeros
    if not given); the information vector is recomputed at the new mean.
    """
    if change.is_empty:
        return belief
    missing = [k for k in change.involved if k not in belief.layout]
    if missing:
        raise DimensionMismatchError("change variables", "keys in belief layout", missing)

    layout = belief.layout.extend(change.new_keys)
    prior = belief.information.tocoo()
    information = sp.csr_matrix(
        (prior.data, (prior.row, prior.col)), shape=(layout.dim, layout.dim)
    )
    if change.kind == ChangeKind.relinearization:
        a_minus = _change_matrix(change, layout, change.a_involved)
        a_plus = _change_matrix(change, layout, change.a_plus)
        information = information - a_minus.T @ a_minus + a_plus.T @ a_plus
    else:
        a = _change_matrix(change, layout, change.a_involved)
        information = information + a.T @ a

    if new_values is None:
        new_values = np.zeros(total_dim(change.new_keys))
    mean = np.concatenate([belief.mean, np.asarray(new_values, dtype=float)])
    lin = np.concatenate([belief.linearization_point, np.asarray(new_values, dtype=float)])
    return BeliefState.from_information(layout, information, mean, lin)
