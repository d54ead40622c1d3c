"""Incremental covariance updates after a change to the inference problem.

Every update works on small blocks only: the prior covariance of the
involved variables X^I, the cross block between the requested variables and
X^I, and the Jacobians of the change. No intermediate depends on the full
state dimension.

Change kinds:

    not_augmented     new factors over existing variables
    rectangular       new variables, more new rows than new dimensions
    squared           new variables, as many new rows as new dimensions
    relinearization   factors re-linearized: old rows removed, new rows added
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg as la

from covplan.core.errors import (
    DimensionMismatchError,
    InconsistentDowndateError,
    NotPositiveDefiniteError,
    RankDeficientError,
    SingularFactorError,
)
from covplan.core.layout import StateLayout, VariableKey, total_dim, unique_keys


class ChangeKind(str, Enum):
    not_augmented = "not_augmented"
    rectangular = "rectangular"
    squared = "squared"
    relinearization = "relinearization"


@dataclass(frozen=True, eq=False)
class InferenceChange:
    """One change to the inference problem, as noise-weighted Jacobian blocks.

    ``a_involved`` holds the columns of the involved old variables; for a
    relinearization it is the block at the old linearization point and
    ``a_plus`` the block at the new one.
    """

    kind: ChangeKind
    involved: tuple[VariableKey, ...]
    a_involved: np.ndarray
    new_keys: tuple[VariableKey, ...] = ()
    a_new: Optional[np.ndarray] = None
    a_plus: Optional[np.ndarray] = None

    def __post_init__(self):
        m = self.a_involved.shape[0]
        if self.a_involved.shape[1] != total_dim(self.involved):
            raise DimensionMismatchError(
                "involved Jacobian columns", total_dim(self.involved), self.a_involved.shape[1]
            )
        if self.new_keys:
            if self.a_new is None or self.a_new.shape != (m, total_dim(self.new_keys)):
                raise DimensionMismatchError(
                    "new-variable Jacobian",
                    (m, total_dim(self.new_keys)),
                    None if self.a_new is None else self.a_new.shape,
                )
        if self.kind == ChangeKind.relinearization:
            if self.a_plus is None or self.a_plus.shape != self.a_involved.shape:
                raise DimensionMismatchError(
                    "relinearized Jacobian",
                    self.a_involved.shape,
                    None if self.a_plus is None else self.a_plus.shape,
                )

    @classmethod
    def not_augmented(cls, involved: Sequence[VariableKey], a_involved) -> "InferenceChange":
        return cls(ChangeKind.not_augmented, tuple(involved), _as_2d(a_involved, involved))

    @classmethod
    def augmented(
        cls,
        involved: Sequence[VariableKey],
        a_involved,
        new_keys: Sequence[VariableKey],
        a_new,
    ) -> "InferenceChange":
        """Classify an augmenting change as squared or rectangular by its row count."""
        a_new = np.atleast_2d(np.asarray(a_new, dtype=float))
        m, n_new = a_new.shape
        if m < n_new:
            raise RankDeficientError(f"new-variable Jacobian with {m} rows for {n_new} columns")
        kind = ChangeKind.squared if m == n_new else ChangeKind.rectangular
        if not involved:
            a_involved = np.zeros((m, 0))
        return cls(kind, tuple(involved), _as_2d(a_involved, involved, m), tuple(new_keys), a_new)

    @classmethod
    def relinearization(
        cls, involved: Sequence[VariableKey], a_minus, a_plus
    ) -> "InferenceChange":
        a_minus = _as_2d(a_minus, involved)
        return cls(
            ChangeKind.relinearization,
            tuple(involved),
            a_minus,
            a_plus=_as_2d(a_plus, involved, a_minus.shape[0]),
        )

    @property
    def m(self) -> int:
        return self.a_involved.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.m == 0 and not self.new_keys


def _as_2d(a, keys, rows: Optional[int] = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        m = a.shape[0] if a.ndim == 2 else (rows or 0)
        return np.zeros((m, total_dim(keys)))
    return np.atleast_2d(a)


@dataclass
class CovarianceCache:
    """Joint covariance block over ``keys``, marginal or conditioned on ``conditioned_on``."""

    keys: tuple[VariableKey, ...]
    matrix: np.ndarray
    conditioned_on: tuple[VariableKey, ...] = ()

    def __post_init__(self):
        self.keys = tuple(self.keys)
        self.conditioned_on = tuple(self.conditioned_on)
        self._layout = StateLayout(self.keys)
        if self.matrix.shape != (self._layout.dim, self._layout.dim):
            raise DimensionMismatchError(
                "covariance cache", (self._layout.dim, self._layout.dim), self.matrix.shape
            )

    @property
    def layout(self) -> StateLayout:
        return self._layout

    @property
    def conditional(self) -> bool:
        return bool(self.conditioned_on)

    def __contains__(self, key: object) -> bool:
        return key in self._layout

    def block(self, rows: Sequence[VariableKey], cols: Optional[Sequence[VariableKey]] = None):
        ri = self._layout.indices(rows)
        ci = ri if cols is None else self._layout.indices(cols)
        return self.matrix[np.ix_(ri, ci)]

    def marginal(self, key: VariableKey) -> np.ndarray:
        s = self._layout.slice(key)
        return self.matrix[s, s]

    def restrict(self, keys: Sequence[VariableKey]) -> "CovarianceCache":
        return CovarianceCache(tuple(keys), self.block(keys), self.conditioned_on)


@dataclass
class UpdateWorkspace:
    """Intermediate matrices of the last update, kept for inspection."""

    matrices: dict[str, np.ndarray] = field(default_factory=dict)

    def record(self, **named: np.ndarray) -> None:
        self.matrices.update(named)

    def largest_dimension(self) -> int:
        dims = [max(a.shape) for a in self.matrices.values() if a.ndim and a.size]
        return max(dims, default=0)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.matrices[name]


def _record(workspace: Optional[UpdateWorkspace], **named) -> None:
    if workspace is not None:
        workspace.record(**named)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def chol_upper(a: np.ndarray, what: str) -> np.ndarray:
    """Upper Cholesky factor via LAPACK, reporting the failing pivot."""
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    c, info = la.lapack.dpotrf(a, lower=0)
    if info != 0:
        raise NotPositiveDefiniteError(what, info - 1 if info > 0 else None)
    return np.triu(c)


# ============================================================================
# Array kernels (shared by the cache-level updates and the SLAM pipeline)
# ============================================================================


def capacitance(sigma_i: np.ndarray, a_i: np.ndarray) -> np.ndarray:
    """C = I_m + A^I Sigma^I A^I^T."""
    return np.eye(a_i.shape[0], dtype=a_i.dtype) + a_i @ sigma_i @ a_i.T


def additive_factor(
    sigma_c: np.ndarray,
    sigma_i: np.ndarray,
    a_i: np.ndarray,
    workspace: Optional[UpdateWorkspace] = None,
) -> np.ndarray:
    """U with Sigma_+^Y = Sigma^Y - U U^T for purely additive information."""
    c = capacitance(sigma_i, a_i)
    r = chol_upper(symmetrize(c), "capacitance matrix")
    b = sigma_c @ a_i.T
    _record(workspace, C=c, B=b)
    if b.shape[1] == 0:
        return b
    # U = B R^-1, i.e. U R = B
    return la.solve_triangular(r, b.T, trans="T").T


def relinearization_factors(
    sigma_c: np.ndarray,
    sigma_i: np.ndarray,
    a_minus: np.ndarray,
    a_plus: np.ndarray,
    workspace: Optional[UpdateWorkspace] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(Uminus, Uplus) with Sigma_+^Y = Sigma^Y + Uminus Uminus^T - Uplus Uplus^T.

    Removes the rows ``a_minus`` and adds the rows ``a_plus`` (row counts may
    differ). The added rows enter as the negative term Uplus Uplus^T, so no
    complex factor is formed.
    """
    k = sigma_i.shape[0]
    r2 = chol_upper(symmetrize(capacitance(sigma_i, a_plus)), "added-rows capacitance")
    if a_plus.shape[0]:
        m2t = la.solve_triangular(r2, a_plus, trans="T")  # R2^-T A_+
    else:
        m2t = np.zeros((0, k))
    g = m2t @ sigma_i @ a_minus.T
    inner = np.eye(a_minus.shape[0]) - a_minus @ sigma_i @ a_minus.T + g.T @ g
    try:
        r1 = chol_upper(symmetrize(inner), "downdate inner matrix")
    except NotPositiveDefiniteError as e:
        raise InconsistentDowndateError(
            "removing the old linearization leaves the information matrix indefinite"
        ) from e
    rhs = a_minus.T - m2t.T @ g  # k x m_minus
    if a_minus.shape[0]:
        m1 = la.solve_triangular(r1, rhs.T, trans="T").T
    else:
        m1 = np.zeros((k, 0))
    _record(workspace, G=g, M1=m1, M2=m2t.T, R1=r1, R2=r2)
    return sigma_c @ m1, sigma_c @ m2t.T


def factor_symmetric(a: np.ndarray, what: str) -> Callable[[np.ndarray], np.ndarray]:
    """Solver for a symmetric system: Cholesky when real, LU when complex.

    Complex inputs are symmetric under the plain transpose and have no
    Cholesky factor.
    """
    complex_input = np.iscomplexobj(a)
    try:
        factor = la.lu_factor(a) if complex_input else la.cho_factor(symmetrize(a))
    except (ValueError, la.LinAlgError) as e:
        raise NotPositiveDefiniteError(what) from e

    def solve(b: np.ndarray) -> np.ndarray:
        if b.size == 0:
            return np.zeros(b.shape, dtype=np.result_type(a, b))
        return la.lu_solve(factor, b) if complex_input else la.cho_solve(factor, b)

    return solve


def _new_information(a_new: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Solver for A_new^T A_new, checking column rank."""
    if np.linalg.matrix_rank(a_new) < a_new.shape[1]:
        raise RankDeficientError("new-variable Jacobian")
    return factor_symmetric(a_new.T @ a_new, "new-variable information")


@dataclass
class RectangularBlocks:
    """Low-rank pieces of a rectangular update.

    ``sigma_old_y - b_g_inv @ b_old.T`` is the updated old block,
    ``new_cov`` the full posterior covariance of the new variables and
    ``cross_old_new`` the (rows of sigma_c) x new block.
    """

    b_old: np.ndarray
    b_g_inv: np.ndarray
    new_cov: np.ndarray
    cross_old_new: np.ndarray

    def old_correction(self) -> np.ndarray:
        return self.b_g_inv @ self.b_old.T


def rectangular_blocks(
    sigma_c: np.ndarray,
    sigma_i: np.ndarray,
    a_i: np.ndarray,
    a_new: np.ndarray,
    method: int = 2,
    workspace: Optional[UpdateWorkspace] = None,
) -> RectangularBlocks:
    """Rectangular-change pieces; works for real and complex (non-conjugate) Jacobians."""
    m = a_new.shape[0]
    solve_f = _new_information(a_new)
    k = np.eye(m, dtype=a_new.dtype) - a_new @ solve_f(a_new.T)
    k1 = k @ a_i
    g = np.eye(m, dtype=a_new.dtype) + k1 @ sigma_i @ k1.T
    solve_g = factor_symmetric(g, "projected capacitance")
    b = sigma_c @ k1.T
    b_g_inv = solve_g(b.T).T
    c = capacitance(sigma_i, a_i)
    solve_c = factor_symmetric(c, "capacitance matrix")
    reduced = a_new.T @ solve_c(a_new)
    solve_p = factor_symmetric(reduced, "new-variable reduced information")
    new_cov = symmetrize(solve_p(np.eye(reduced.shape[0], dtype=reduced.dtype)))
    if method == 1:
        inner = solve_c(a_i @ sigma_i @ a_i.T) - np.eye(m, dtype=c.dtype)
        cross = sigma_c @ a_i.T @ inner @ a_new @ new_cov
    elif method == 2:
        inner = k1.T @ solve_g(k1 @ sigma_i) - np.eye(sigma_i.shape[0], dtype=g.dtype)
        cross = solve_f((sigma_c @ inner @ a_i.T @ a_new).T).T
    else:
        raise ValueError(f"Unknown rectangular method: {method}")
    _record(workspace, K=k, K1=k1, G=g, B=b, C=c, P=new_cov)
    return RectangularBlocks(b, b_g_inv, new_cov, cross)


def squared_blocks(
    sigma_c: np.ndarray,
    sigma_i: np.ndarray,
    a_i: np.ndarray,
    a_new: np.ndarray,
    workspace: Optional[UpdateWorkspace] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A_iv, new covariance, old x new cross) for a squared change."""
    try:
        lu = la.lu_factor(a_new, check_finite=True)
    except (ValueError, la.LinAlgError) as e:
        raise SingularFactorError("new-variable Jacobian") from e
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * max(1.0, np.abs(a_new).max(initial=0.0))):
        raise SingularFactorError("new-variable Jacobian")
    a_iv = la.lu_solve(lu, np.eye(a_new.shape[0]))
    c = capacitance(sigma_i, a_i)
    new_cov = symmetrize(a_iv @ c @ a_iv.T)
    cross = -sigma_c @ a_i.T @ a_iv.T
    _record(workspace, C=c, Aiv=a_iv)
    return a_iv, new_cov, cross


# ============================================================================
# Cache-level updates
# ============================================================================


def _split_request(cache: CovarianceCache, change: InferenceChange, keys: Sequence[VariableKey]):
    new_set = set(change.new_keys)
    y_old = [k for k in keys if k not in new_set]
    y_new = [k for k in keys if k in new_set]
    missing = [k for k in unique_keys(y_old, change.involved) if k not in cache]
    if missing:
        raise DimensionMismatchError(
            "covariance cache", "blocks for requested and involved variables", missing
        )
    return y_old, y_new


def _assemble(
    keys: Sequence[VariableKey],
    y_old: list[VariableKey],
    y_new: list[VariableKey],
    old_block: np.ndarray,
    new_block: np.ndarray,
    cross: np.ndarray,
    conditioned_on,
) -> CovarianceCache:
    """Place old/new/cross blocks into a cache ordered as ``keys``."""
    joint_keys = list(y_old) + list(y_new)
    n_old = total_dim(y_old)
    joint = np.zeros((total_dim(joint_keys),) * 2)
    joint[:n_old, :n_old] = old_block
    joint[n_old:, n_old:] = new_block
    joint[:n_old, n_old:] = cross
    joint[n_old:, :n_old] = cross.T
    cache = CovarianceCache(tuple(joint_keys), symmetrize(joint), conditioned_on)
    return cache.restrict(keys) if joint_keys != list(keys) else cache


def update_not_augmented(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Optional[Sequence[VariableKey]] = None,
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Sigma_+^Y = Sigma^Y - B C^-1 B^T with B = Sigma^C A^I^T."""
    keys = list(cache.keys if keys is None else keys)
    y, _ = _split_request(cache, change, keys)
    sigma_c = cache.block(y, change.involved)
    u = additive_factor(sigma_c, cache.block(change.involved), change.a_involved, workspace)
    updated = symmetrize(cache.block(y) - u @ u.T)
    return CovarianceCache(tuple(y), updated, cache.conditioned_on)


def update_rectangular(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Sequence[VariableKey],
    method: int = 2,
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Old, new and cross blocks after adding variables with a rectangular Jacobian."""
    y_old, y_new = _split_request(cache, change, keys)
    sigma_c = cache.block(y_old, change.involved)
    blocks = rectangular_blocks(
        sigma_c, cache.block(change.involved), change.a_involved, change.a_new, method, workspace
    )
    old_block = cache.block(y_old) - blocks.old_correction()
    new_idx = StateLayout(change.new_keys).indices(y_new)
    new_block = blocks.new_cov[np.ix_(new_idx, new_idx)]
    cross = blocks.cross_old_new[:, new_idx]
    return _assemble(keys, y_old, y_new, old_block, new_block, cross, cache.conditioned_on)


def update_squared(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Sequence[VariableKey],
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Old blocks unchanged; new and cross blocks through A_new^-1."""
    y_old, y_new = _split_request(cache, change, keys)
    sigma_c = cache.block(y_old, change.involved)
    _, new_cov, cross = squared_blocks(
        sigma_c, cache.block(change.involved), change.a_involved, change.a_new, workspace
    )
    new_idx = StateLayout(change.new_keys).indices(y_new)
    return _assemble(
        keys,
        y_old,
        y_new,
        cache.block(y_old),
        new_cov[np.ix_(new_idx, new_idx)],
        cross[:, new_idx],
        cache.conditioned_on,
    )


def update_relinearized(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Optional[Sequence[VariableKey]] = None,
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Sigma_+^Y after swapping A_- for A_+ on the same factors."""
    keys = list(cache.keys if keys is None else keys)
    y, _ = _split_request(cache, change, keys)
    u_minus, u_plus = relinearization_factors(
        cache.block(y, change.involved),
        cache.block(change.involved),
        change.a_involved,
        change.a_plus,
        workspace,
    )
    updated = cache.block(y) + u_minus @ u_minus.T - u_plus @ u_plus.T
    return CovarianceCache(tuple(y), symmetrize(updated), cache.conditioned_on)


def restrict_to_unconditioned(change: InferenceChange, conditioned_on) -> InferenceChange:
    """Drop the Jacobian columns of conditioning variables."""
    fixed = set(conditioned_on)
    if not fixed.intersection(change.involved):
        return change
    kept = [k for k in change.involved if k not in fixed]
    idx = StateLayout(change.involved).indices(kept)
    a_plus = None if change.a_plus is None else change.a_plus[:, idx]
    return InferenceChange(
        change.kind,
        tuple(kept),
        change.a_involved[:, idx],
        change.new_keys,
        change.a_new,
        a_plus,
    )


def update_conditional(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Optional[Sequence[VariableKey]] = None,
    method: int = 2,
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Same updates on conditional blocks, using only the columns of unfocused variables."""
    if keys is not None and set(cache.conditioned_on).intersection(keys):
        raise DimensionMismatchError("conditional request", "keys disjoint from F", keys)
    return update_cache(
        cache, restrict_to_unconditioned(change, cache.conditioned_on), keys, method, workspace
    )


def update_cache(
    cache: CovarianceCache,
    change: InferenceChange,
    keys: Optional[Sequence[VariableKey]] = None,
    method: int = 2,
    workspace: Optional[UpdateWorkspace] = None,
) -> CovarianceCache:
    """Dispatch to the update matching the change kind."""
    if cache.conditional and set(cache.conditioned_on).intersection(change.involved):
        change = restrict_to_unconditioned(change, cache.conditioned_on)
    if keys is None:
        keys = list(cache.keys)
    if change.kind == ChangeKind.not_augmented:
        return update_not_augmented(cache, change, keys, workspace)
    if change.kind == ChangeKind.relinearization:
        return update_relinearized(cache, change, keys, workspace)
    if change.kind == ChangeKind.squared:
        return update_squared(cache, change, keys, workspace)
    return update_rectangular(cache, change, keys, method, workspace)
