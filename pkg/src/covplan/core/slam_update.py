"""Per-step marginal covariance maintenance for SLAM.

A step adds a pose (and the landmarks first seen from it), re-observes old
landmarks and relinearizes some old factors. The information matrix goes

    Lambda_k = Lambda_{k-1}^Aug + A_S^T A_S + A_O^T A_O - A_-^T A_- + A_+^T A_+

and the per-variable marginals are updated either in two stages (a squared
change with the odometry and new-landmark rows, then an additive or
relinearizing change with everything else) or in one rectangular stage whose
removed rows are multiplied by the imaginary unit.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from covplan.core.belief import BeliefState
from covplan.core.layout import StateLayout, VariableKey, total_dim, unique_keys
from covplan.core.lemmas import (
    UpdateWorkspace,
    additive_factor,
    rectangular_blocks,
    relinearization_factors,
    squared_blocks,
    symmetrize,
)
from covplan.core.recovery import full_covariance, prior_columns

# imaginary residue allowed in the one-stage update before taking the real part
IMAGINARY_TOLERANCE = 1e-8


class Strategy(str, Enum):
    two_stage = "twostage"
    one_stage = "onestage"


@dataclass
class MarginalTable:
    """Per-variable marginal covariance blocks."""

    layout: StateLayout
    blocks: dict[VariableKey, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_covariance(cls, layout: StateLayout, sigma: np.ndarray) -> "MarginalTable":
        return cls(layout, {k: sigma[layout.slice(k), layout.slice(k)].copy() for k in layout})

    @classmethod
    def from_belief(cls, belief: BeliefState, method: str = "backsub") -> "MarginalTable":
        return cls.from_covariance(belief.layout, full_covariance(belief, method))

    def __getitem__(self, key: VariableKey) -> np.ndarray:
        return self.blocks[key]

    def __len__(self) -> int:
        return len(self.blocks)

    def max_difference(self, other: "MarginalTable") -> float:
        """Largest absolute entry difference over shared variables."""
        diffs = [
            float(np.abs(block - other.blocks[key]).max(initial=0.0))
            for key, block in self.blocks.items()
            if key in other.blocks
        ]
        return max(diffs, default=0.0)


@dataclass
class SlamStepChange:
    """Jacobian blocks of one SLAM step, each over its own column keys.

    squared part:  rows of F_new^S over (prev_pose | new_keys)
    observations:  rows of F_old^L over obs_keys (new pose and old landmarks)
    relinearized:  rows of F_R over relin_keys at the old and new points
    """

    new_keys: tuple[VariableKey, ...]
    a_s_new: np.ndarray
    prev_pose: Optional[VariableKey] = None
    a_s_prev: Optional[np.ndarray] = None
    obs_keys: tuple[VariableKey, ...] = ()
    a_obs: Optional[np.ndarray] = None
    relin_keys: tuple[VariableKey, ...] = ()
    a_minus: Optional[np.ndarray] = None
    a_plus: Optional[np.ndarray] = None

    def __post_init__(self):
        m_s = self.a_s_new.shape[0]
        if self.a_s_prev is None:
            self.a_s_prev = np.zeros((m_s, total_dim(self._prev())))
        if self.a_obs is None:
            self.a_obs = np.zeros((0, total_dim(self.obs_keys)))
        if self.a_minus is None:
            self.a_minus = np.zeros((0, total_dim(self.relin_keys)))
        if self.a_plus is None:
            self.a_plus = np.zeros((0, total_dim(self.relin_keys)))

    def _prev(self) -> list[VariableKey]:
        return [self.prev_pose] if self.prev_pose is not None else []

    @property
    def m(self) -> int:
        """Rows of the stacked one-stage Jacobian."""
        return sum(a.shape[0] for a in (self.a_s_new, self.a_obs, self.a_minus, self.a_plus))

    @property
    def old_involved(self) -> list[VariableKey]:
        new = set(self.new_keys)
        obs_old = [k for k in self.obs_keys if k not in new]
        return unique_keys(self._prev(), obs_old, self.relin_keys)

    @property
    def stage_two_keys(self) -> list[VariableKey]:
        new = set(self.new_keys)
        old = [k for k in unique_keys(self.obs_keys, self.relin_keys) if k not in new]
        return old + [k for k in self.obs_keys if k in new]


@dataclass
class StepUpdate:
    table: MarginalTable
    fallback: bool = False
    workspace: UpdateWorkspace = field(default_factory=UpdateWorkspace)


def _embed(a: np.ndarray, keys, columns: StateLayout) -> np.ndarray:
    out = np.zeros((a.shape[0], columns.dim), dtype=a.dtype)
    if a.size:
        out[:, columns.indices(keys)] = a
    return out


def _diagonal_correction(u: np.ndarray, layout: StateLayout) -> dict[VariableKey, np.ndarray]:
    """Per-variable diagonal blocks of U U^T."""
    return {k: u[layout.slice(k)] @ u[layout.slice(k)].T for k in layout}


def _two_stage(table: MarginalTable, prior: BeliefState, step: SlamStepChange, ws) -> dict:
    old_layout = prior.layout
    layout = old_layout.extend(step.new_keys)
    new_layout = StateLayout(step.new_keys)
    n = old_layout.dim
    q2 = step.stage_two_keys
    q2_old = [k for k in q2 if k in old_layout]
    q2_new = [k for k in q2 if k not in old_layout]
    prev = step._prev()
    q = unique_keys(prev, q2_old)
    q_layout = StateLayout(q)

    slab = prior_columns(prior, q)
    sigma_prev_cols = slab[:, q_layout.indices(prev)]
    sigma_prev = sigma_prev_cols[old_layout.indices(prev)] if prev else np.zeros((0, 0))

    # stage 1: squared change with the previous pose as the only involved variable
    a_iv, new_cov, cross = squared_blocks(
        sigma_prev_cols, sigma_prev, step.a_s_prev, step.a_s_new, ws
    )
    blocks = {k: table[k].copy() for k in old_layout}
    for key in step.new_keys:
        s = new_layout.slice(key)
        blocks[key] = new_cov[s, s].copy()

    rows = [a.shape[0] for a in (step.a_obs, step.a_minus, step.a_plus)]
    if not any(rows):
        return blocks

    # columns of the midpoint covariance for the stage-two involved variables
    mid = np.zeros((layout.dim, total_dim(q2)))
    q2_layout = StateLayout(q2)
    old_cols = q2_layout.indices(q2_old)
    mid[:n, old_cols] = slab[:, q_layout.indices(q2_old)]
    if prev:
        sigma_prev_q2 = slab[np.ix_(old_layout.indices(prev), q_layout.indices(q2_old))]
        mid[n:, old_cols] = -a_iv @ step.a_s_prev @ sigma_prev_q2
    if q2_new:
        new_idx = new_layout.indices(q2_new)
        new_cols = q2_layout.indices(q2_new)
        mid[:n, new_cols] = cross[:, new_idx]
        mid[n:, new_cols] = new_cov[:, new_idx]
    sigma_i = symmetrize(mid[layout.indices(q2)])

    a_plus = np.vstack(
        [
            _embed(step.a_plus, step.relin_keys, q2_layout),
            _embed(step.a_obs, step.obs_keys, q2_layout),
        ]
    )
    if step.a_minus.shape[0] == 0:
        u = additive_factor(mid, sigma_i, a_plus, ws)
        for key, corr in _diagonal_correction(u, layout).items():
            blocks[key] = blocks[key] - corr
    else:
        a_minus = _embed(step.a_minus, step.relin_keys, q2_layout)
        u_minus, u_plus = relinearization_factors(mid, sigma_i, a_minus, a_plus, ws)
        plus = _diagonal_correction(u_minus, layout)
        minus = _diagonal_correction(u_plus, layout)
        for key in layout:
            blocks[key] = blocks[key] + plus[key] - minus[key]
    return blocks


def _one_stage(table: MarginalTable, prior: BeliefState, step: SlamStepChange, ws) -> dict:
    old_layout = prior.layout
    involved = step.old_involved
    i_layout = StateLayout(involved)
    new_layout = StateLayout(step.new_keys)
    prev = step._prev()

    slab = prior_columns(prior, involved)
    sigma_i = symmetrize(slab[old_layout.indices(involved)])

    # B = [A_S; i A_-; A_+; A_O] split into involved-old and new columns
    obs_old = [k for k in step.obs_keys if k in old_layout]
    obs_new = [k for k in step.obs_keys if k not in old_layout]
    obs_layout = StateLayout(step.obs_keys)
    a_obs_old = step.a_obs[:, obs_layout.indices(obs_old)]
    a_obs_new = step.a_obs[:, obs_layout.indices(obs_new)]
    a_i = np.vstack(
        [
            _embed(step.a_s_prev, prev, i_layout),
            1j * _embed(step.a_minus, step.relin_keys, i_layout),
            _embed(step.a_plus, step.relin_keys, i_layout),
            _embed(a_obs_old, obs_old, i_layout),
        ]
    ).astype(complex)
    m_r = step.a_minus.shape[0] + step.a_plus.shape[0]
    a_new = np.vstack(
        [
            step.a_s_new,
            np.zeros((m_r, new_layout.dim)),
            _embed(a_obs_new, obs_new, new_layout),
        ]
    ).astype(complex)

    parts = rectangular_blocks(slab.astype(complex), sigma_i.astype(complex), a_i, a_new, 2, ws)
    correction = parts.b_g_inv
    blocks = {}
    for key in old_layout:
        s = old_layout.slice(key)
        blocks[key] = table[key] - correction[s] @ parts.b_old[s].T
    for key in step.new_keys:
        s = new_layout.slice(key)
        blocks[key] = parts.new_cov[s, s]

    residue = max(float(np.abs(b.imag).max(initial=0.0)) for b in blocks.values())
    scale = max(1.0, max(float(np.abs(b.real).max(initial=0.0)) for b in blocks.values()))
    if residue > IMAGINARY_TOLERANCE * scale:
        raise ArithmeticError(f"one-stage update left imaginary residue {residue:.3e}")
    return {k: symmetrize(b.real) for k, b in blocks.items()}


def needs_fallback(step: SlamStepChange, prior_dim: int, ratio: float) -> bool:
    """True when the step touches more than ``ratio`` of the prior state (loop closures)."""
    if prior_dim == 0:
        return False
    return step.m > ratio * prior_dim or total_dim(step.old_involved) > ratio * prior_dim


def slam_step_update(
    table: MarginalTable,
    prior: BeliefState,
    step: SlamStepChange,
    posterior: BeliefState,
    strategy: Strategy = Strategy.two_stage,
    fallback_ratio: float = 1.0,
) -> StepUpdate:
    """Marginals of every variable after a SLAM step, from the previous step's marginals."""
    if needs_fallback(step, prior.dim, fallback_ratio):
        return StepUpdate(MarginalTable.from_belief(posterior, "backsub"), fallback=True)
    ws = UpdateWorkspace()
    if Strategy(strategy) == Strategy.two_stage:
        blocks = _two_stage(table, prior, step, ws)
    else:
        blocks = _one_stage(table, prior, step, ws)
    return StepUpdate(MarginalTable(posterior.layout, blocks), workspace=ws)
