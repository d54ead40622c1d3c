"""Gauss-Newton MAP inference over a factor graph."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from covplan.core.belief import BeliefState, factorize
from covplan.core.errors import NotPositiveDefiniteError, UnderconstrainedError
from covplan.core.factors import FactorGraph, linearize_factors, wrap_angle
from covplan.core.layout import Kind, StateLayout, VariableKey
from covplan.core.ordering import fill_reducing_ordering


@dataclass
class SolverConfig:
    max_iters: int = 25
    step_tol: float = 1e-10
    relin_threshold: float = 0.05


@dataclass
class RelinearizationReport:
    """Variables whose linearization point moved past the threshold, and factors touching them."""

    relinearized: list[VariableKey] = field(default_factory=list)
    factor_indices: list[int] = field(default_factory=list)
    iterations: int = 0
    final_step: float = 0.0

    @property
    def relinearized_poses(self) -> int:
        return sum(1 for k in self.relinearized if k.kind == Kind.pose)

    @property
    def relinearized_landmarks(self) -> int:
        return sum(1 for k in self.relinearized if k.kind == Kind.landmark)


def retract(layout: StateLayout, point: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """point + delta, with pose headings wrapped."""
    out = point + delta
    for key in layout:
        if key.kind == Kind.pose:
            s = layout.slice(key)
            out[s.start + 2] = wrap_angle(out[s.start + 2])
    return out


def _information(graph: FactorGraph, point: np.ndarray):
    jac, residual = linearize_factors(graph.factors, point, graph.layout)
    a = jac.matrix
    return sp.csr_matrix(a.T @ a), a.T @ residual


def _underconstrained_keys(information: sp.spmatrix, layout: StateLayout, ordering, index):
    """Variables without information, or the owner of the failing pivot."""
    diag = information.diagonal()
    empty = [k for k in layout if np.all(diag[layout.slice(k)] == 0.0)]
    if empty:
        return empty
    if index is not None and ordering is not None and len(ordering):
        return [layout.owner(int(ordering[min(index, len(ordering) - 1)]))]
    return []


def _factorize_or_raise(information, layout):
    ordering = fill_reducing_ordering(information, layout)
    try:
        return ordering, factorize(information, ordering)
    except NotPositiveDefiniteError as e:
        raise UnderconstrainedError(
            _underconstrained_keys(information, layout, ordering, e.index)
        ) from e


def _solve(r: sp.csr_matrix, ordering: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    y = spla.spsolve_triangular(r.T.tocsr(), rhs[ordering], lower=True)
    x_p = spla.spsolve_triangular(r, y, lower=False)
    x = np.empty_like(x_p)
    x[ordering] = x_p
    return x


def solve_map(
    graph: FactorGraph,
    initial: np.ndarray,
    config: Optional[SolverConfig] = None,
    linearization_point: Optional[dict[VariableKey, np.ndarray]] = None,
) -> tuple[BeliefState, RelinearizationReport]:
    """Gauss-Newton to convergence, then the belief at per-variable linearization points.

    ``linearization_point`` maps variables to the point their factors were
    last linearized at (defaults to ``initial`` for every variable). A
    variable is relinearized at the MAP estimate when its estimate moved
    farther than ``relin_threshold`` from that point; variables missing from
    the map are always linearized at the estimate.
    """
    config = config or SolverConfig()
    layout = graph.layout
    x = np.array(initial, dtype=float)
    report = RelinearizationReport()
    if layout.dim == 0:
        return BeliefState.empty(), report

    # iterations count applied steps; the pass that finds a step below
    # step_tol only confirms convergence
    for _ in range(config.max_iters):
        information, rhs = _information(graph, x)
        ordering, r = _factorize_or_raise(information, layout)
        delta = _solve(r, ordering, rhs)
        report.final_step = float(np.linalg.norm(delta))
        if report.final_step < config.step_tol:
            break
        x = retract(layout, x, delta)
        report.iterations += 1

    if linearization_point is None:
        linearization_point = {k: np.array(initial[layout.slice(k)]) for k in layout}
    lin = x.copy()
    for key in layout:
        old = linearization_point.get(key)
        if old is None:
            continue
        moved = x[layout.slice(key)] - old
        if key.kind == Kind.pose:
            moved[2] = wrap_angle(moved[2])
        if np.linalg.norm(moved) > config.relin_threshold:
            report.relinearized.append(key)
        else:
            lin[layout.slice(key)] = old
    report.factor_indices = graph.touching(report.relinearized)

    information, _ = _information(graph, lin)
    try:
        belief = BeliefState.from_information(layout, information, x, lin)
    except NotPositiveDefiniteError as e:
        raise UnderconstrainedError(
            _underconstrained_keys(information, layout, None, None)
        ) from e
    return belief, report
