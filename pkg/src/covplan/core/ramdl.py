"""Information objectives from prior covariance blocks of the involved variables.

Scores drop the dimension-dependent entropy constant. For increments that add
variables the unfocused score is 1/2 ln det(Lambda_+) / det(Lambda_-), which
is what makes scores of consecutive increments add up.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as la

from covplan.core.belief import BeliefState
from covplan.core.errors import DimensionMismatchError, NotPositiveDefiniteError
from covplan.core.factors import GaussianFactor
from covplan.core.layout import Kind, StateLayout, VariableKey, total_dim, unique_keys
from covplan.core.lemmas import (
    CovarianceCache,
    InferenceChange,
    capacitance,
    rectangular_blocks,
    squared_blocks,
    symmetrize,
)
from covplan.core.recovery import covariance_cache

# scores within this (relative) distance of the best count as ties
TIE_TOLERANCE = 1e-9


class QueryKind(str, Enum):
    unfocused = "unfocused"
    focused_old = "focused-old"
    focused_new = "focused-new"


class ScoreKind(str, Enum):
    unfocused_ig = "unfocused-IG"
    focused_ig = "focused-IG"
    focused_entropy = "focused-entropy"


@dataclass(frozen=True)
class FocusedQuery:
    """What to score: whole state, a set of old variables, or new variables.

    For ``focused-new`` an empty focus means each candidate's terminal pose.
    """

    kind: QueryKind = QueryKind.unfocused
    focus: tuple[VariableKey, ...] = ()

    @classmethod
    def unfocused(cls) -> "FocusedQuery":
        return cls()

    @classmethod
    def old(cls, keys: Sequence[VariableKey]) -> "FocusedQuery":
        return cls(QueryKind.focused_old, tuple(keys))

    @classmethod
    def new(cls, keys: Sequence[VariableKey] = ()) -> "FocusedQuery":
        return cls(QueryKind.focused_new, tuple(keys))

    def new_focus(self, increment: "ActionIncrement") -> list[VariableKey]:
        if self.focus:
            missing = [k for k in self.focus if k not in increment.new_keys]
            if missing:
                raise DimensionMismatchError("focused new variables", "new keys", missing)
            return list(self.focus)
        poses = [k for k in increment.new_keys if k.kind == Kind.pose]
        return poses[-1:] if poses else list(increment.new_keys[-1:])


@dataclass(frozen=True)
class InfoScore:
    value: float
    kind: ScoreKind

    @property
    def utility(self) -> float:
        """Larger is better: information gain as is, entropy negated."""
        return -self.value if self.kind == ScoreKind.focused_entropy else self.value

    def __add__(self, other: "InfoScore") -> "InfoScore":
        if other.kind != self.kind:
            raise ValueError(f"Cannot add {self.kind.value} and {other.kind.value} scores")
        return InfoScore(self.value + other.value, self.kind)


@dataclass(eq=False)
class ActionIncrement:
    """Factors and variables an action adds, realized as Jacobian blocks.

    ``values`` holds the predicted values of the new variables (and of the
    involved variables the Jacobians were linearized at).
    """

    id: int
    involved: tuple[VariableKey, ...]
    a_involved: np.ndarray
    new_keys: tuple[VariableKey, ...] = ()
    a_new: Optional[np.ndarray] = None
    factors: tuple[GaussianFactor, ...] = ()
    values: dict[VariableKey, np.ndarray] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.involved = tuple(self.involved)
        self.new_keys = tuple(self.new_keys)
        if self.new_keys and self.a_new is None:
            raise DimensionMismatchError("new-variable Jacobian", "array", None)
        if self.a_new is None:
            self.a_new = np.zeros((self.a_involved.shape[0], 0))

    @property
    def m(self) -> int:
        return self.a_involved.shape[0]

    def change(self) -> InferenceChange:
        if self.new_keys:
            return InferenceChange.augmented(
                self.involved, self.a_involved, self.new_keys, self.a_new
            )
        return InferenceChange.not_augmented(self.involved, self.a_involved)

    @property
    def kind(self):
        return self.change().kind

    def signature(self) -> tuple:
        return (
            self.involved,
            self.new_keys,
            self.a_involved.tobytes(),
            self.a_new.tobytes(),
            tuple(f.signature() for f in self.factors),
        )


def merge_increments(
    increment_id: int, segments: Sequence[ActionIncrement], label: str = ""
) -> ActionIncrement:
    """Concatenate consecutive increments into one over the first segment's prior."""
    new_keys: list[VariableKey] = []
    for seg in segments:
        new_keys.extend(seg.new_keys)
    new_set = set(new_keys)
    involved = unique_keys(*(s.involved for s in segments))
    involved = [k for k in involved if k not in new_set]
    cols = StateLayout(involved + new_keys)
    rows = sum(s.m for s in segments)
    a = np.zeros((rows, cols.dim))
    r = 0
    values: dict[VariableKey, np.ndarray] = {}
    factors: list[GaussianFactor] = []
    for seg in segments:
        a[r : r + seg.m, cols.indices(seg.involved)] += seg.a_involved
        if seg.new_keys:
            a[r : r + seg.m, cols.indices(seg.new_keys)] += seg.a_new
        r += seg.m
        values.update(seg.values)
        factors.extend(seg.factors)
    k = total_dim(involved)
    return ActionIncrement(
        increment_id,
        tuple(involved),
        a[:, :k],
        tuple(new_keys),
        a[:, k:],
        tuple(factors),
        values,
        label,
    )


# ============================================================================
# Scores
# ============================================================================


def logdet_spd(a: np.ndarray, what: str) -> float:
    """ln det of an SPD matrix via its Cholesky factor."""
    if a.shape[0] == 0:
        return 0.0
    c, info = la.lapack.dpotrf(symmetrize(a), lower=0)
    if info != 0:
        raise NotPositiveDefiniteError(what, info - 1 if info > 0 else None)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def _check(a_i: np.ndarray, sigma_i: np.ndarray, a_new: Optional[np.ndarray]) -> None:
    if sigma_i.shape != (a_i.shape[1], a_i.shape[1]):
        raise DimensionMismatchError(
            "involved covariance block", (a_i.shape[1],) * 2, sigma_i.shape
        )
    if a_new is not None and a_new.shape[0] != a_i.shape[0]:
        raise DimensionMismatchError("new-variable Jacobian rows", a_i.shape[0], a_new.shape[0])


def _half_logdet_ratio(a_i, sigma_i, a_new) -> float:
    c = capacitance(sigma_i, a_i)
    value = 0.5 * logdet_spd(c, "capacitance matrix")
    if a_new is not None and a_new.shape[1]:
        reduced = a_new.T @ la.solve(c, a_new, assume_a="pos")
        value += 0.5 * logdet_spd(reduced, "new-variable information")
    return value


def ig_unfocused(
    a_i: np.ndarray, sigma_i: np.ndarray, a_new: Optional[np.ndarray] = None
) -> InfoScore:
    """1/2 ln|I_m + A^I Sigma^I A^I^T| (+ 1/2 ln|A_new^T C^-1 A_new| when adding variables)."""
    a_i = np.atleast_2d(np.asarray(a_i, dtype=float))
    sigma_i = np.atleast_2d(np.asarray(sigma_i, dtype=float))
    _check(a_i, sigma_i, a_new)
    return InfoScore(_half_logdet_ratio(a_i, sigma_i, a_new), ScoreKind.unfocused_ig)


def ig_focused_old(
    a_i: np.ndarray,
    a_i_unfocused: np.ndarray,
    sigma_i: np.ndarray,
    sigma_unfocused_given_focus: np.ndarray,
    a_new: Optional[np.ndarray] = None,
) -> InfoScore:
    """Information gained about focused old variables.

    Difference of the full score and the score of the unfocused involved
    columns under their prior conditional covariance given the focus.
    """
    a_i = np.atleast_2d(np.asarray(a_i, dtype=float))
    a_u = np.asarray(a_i_unfocused, dtype=float).reshape(a_i.shape[0], -1)
    k = a_u.shape[1]
    sigma_u = np.asarray(sigma_unfocused_given_focus, dtype=float).reshape(k, k)
    _check(a_i, sigma_i, a_new)
    _check(a_u, sigma_u, a_new)
    value = _half_logdet_ratio(a_i, sigma_i, a_new) - _half_logdet_ratio(a_u, sigma_u, a_new)
    return InfoScore(value, ScoreKind.focused_ig)


def focused_new_covariance(
    change: InferenceChange, sigma_i: np.ndarray, focus: Sequence[VariableKey]
) -> np.ndarray:
    """Posterior covariance of new variables ``focus`` after an augmenting change."""
    if not change.new_keys:
        raise DimensionMismatchError("focused new variables", "augmenting change", "no new keys")
    empty = np.zeros((0, sigma_i.shape[0]))
    if change.a_new.shape[0] == change.a_new.shape[1]:
        _, new_cov, _ = squared_blocks(empty, sigma_i, change.a_involved, change.a_new)
    else:
        new_cov = rectangular_blocks(empty, sigma_i, change.a_involved, change.a_new).new_cov
    idx = StateLayout(change.new_keys).indices(focus)
    return new_cov[np.ix_(idx, idx)]


def entropy_focused_new(
    change: InferenceChange, sigma_i: np.ndarray, focus: Sequence[VariableKey]
) -> InfoScore:
    """1/2 ln det of the posterior marginal covariance of new focused variables."""
    cov = focused_new_covariance(change, np.atleast_2d(sigma_i), focus)
    value = 0.5 * logdet_spd(cov, "focused posterior covariance")
    return InfoScore(value, ScoreKind.focused_entropy)


# ============================================================================
# Candidate evaluation
# ============================================================================


def select_best(scores: dict[int, InfoScore]) -> int:
    """Highest utility; near-ties resolved to the lowest id."""
    if not scores:
        raise ValueError("No candidates to select from")
    best = max(s.utility for s in scores.values())
    tol = TIE_TOLERANCE * max(1.0, abs(best))
    return min(i for i, s in scores.items() if s.utility >= best - tol)


def score_increment(
    increment: ActionIncrement,
    cache: CovarianceCache,
    query: FocusedQuery,
    conditional: Optional[CovarianceCache] = None,
) -> InfoScore:
    """Score one increment from cached prior blocks."""
    involved = list(increment.involved)
    sigma_i = cache.block(involved)
    a_new = increment.a_new if increment.new_keys else None
    if query.kind == QueryKind.unfocused:
        return ig_unfocused(increment.a_involved, sigma_i, a_new)
    if query.kind == QueryKind.focused_old:
        focus = set(query.focus)
        unfocused = [k for k in involved if k not in focus]
        idx = StateLayout(involved).indices(unfocused)
        sigma_u = conditional.block(unfocused) if unfocused else np.zeros((0, 0))
        a_u = increment.a_involved[:, idx]
        return ig_focused_old(increment.a_involved, a_u, sigma_i, sigma_u, a_new)
    return entropy_focused_new(increment.change(), sigma_i, query.new_focus(increment))


@dataclass
class FlatEvaluation:
    scores: dict[int, InfoScore]
    best: int
    requested: list[VariableKey]


def evaluate_candidates_flat(
    candidates: Sequence[ActionIncrement], belief: BeliefState, query: Optional[FocusedQuery] = None
) -> FlatEvaluation:
    """One prior-block computation for all involved variables, then per-candidate scores."""
    query = query or FocusedQuery.unfocused()
    if not candidates:
        raise ValueError("No candidates to evaluate")
    x_all = unique_keys(*(c.involved for c in candidates))
    conditional = None
    if query.kind == QueryKind.focused_old:
        focus = list(query.focus)
        cache = covariance_cache(belief, unique_keys(x_all, focus))
        rest = [k for k in x_all if k not in set(focus)]
        conditional = covariance_cache(belief, rest, conditioned_on=focus)
    else:
        cache = covariance_cache(belief, x_all)
    scores = {c.id: score_increment(c, cache, query, conditional) for c in candidates}
    return FlatEvaluation(scores, select_best(scores), x_all)
