import numpy as np
import pytest

from covplan.core.errors import UnderconstrainedError
from covplan.core.factors import FactorGraph, between_factor, prior_factor
from covplan.core.layout import StateLayout, scalar
from covplan.core.solver import SolverConfig, solve_map


def chain_graph():
    layout = StateLayout([scalar(0), scalar(1)])
    factors = [
        prior_factor(scalar(0), [1.0], [[0.01]]),
        between_factor(scalar(0), scalar(1), [2.0], [[0.1]]),
    ]
    return FactorGraph(layout, factors)


def test_consistent_chain_solves_exactly():
    belief, report = solve_map(chain_graph(), np.zeros(2))
    np.testing.assert_allclose(belief.mean, [1.0, 3.0], atol=1e-10)
    assert report.iterations == 1
    assert report.final_step < 1e-10
    # linear problem: information is independent of the point
    expected = np.array([[100.0 + 10.0, -10.0], [-10.0, 10.0]])
    np.testing.assert_allclose(belief.information.toarray(), expected, atol=1e-9)


def test_least_squares_compromise():
    layout = StateLayout([scalar(0)])
    graph = FactorGraph(
        layout,
        [prior_factor(scalar(0), [0.0], [[1.0]]), prior_factor(scalar(0), [2.0], [[1.0]])],
    )
    belief, _ = solve_map(graph, np.zeros(1))
    np.testing.assert_allclose(belief.mean, [1.0], atol=1e-12)


def test_unconstrained_variable_is_reported():
    layout = StateLayout([scalar(0), scalar(1)])
    graph = FactorGraph(layout, [prior_factor(scalar(0), [1.0], [[1.0]])])
    with pytest.raises(UnderconstrainedError) as info:
        solve_map(graph, np.zeros(2))
    assert scalar(1) in info.value.keys


def test_relinearization_report():
    graph = chain_graph()
    lin = {scalar(0): np.array([1.0]), scalar(1): np.array([0.0])}
    belief, report = solve_map(graph, np.array([1.0, 0.0]), SolverConfig(), lin)
    assert report.relinearized == [scalar(1)]
    assert report.factor_indices == [1]
    # s0 keeps its old point, s1 moves to the estimate
    np.testing.assert_allclose(belief.linearization_point, [1.0, 3.0], atol=1e-10)


def test_empty_graph():
    belief, report = solve_map(FactorGraph(StateLayout()), np.zeros(0))
    assert belief.dim == 0 and report.iterations == 0


def test_infinite_threshold_never_relinearizes():
    graph = chain_graph()
    lin = {scalar(0): np.array([0.0]), scalar(1): np.array([0.0])}
    belief, report = solve_map(graph, np.zeros(2), SolverConfig(relin_threshold=np.inf), lin)
    assert report.relinearized == []
    assert report.factor_indices == []
    np.testing.assert_allclose(belief.linearization_point, [0.0, 0.0])
    np.testing.assert_allclose(belief.mean, [1.0, 3.0], atol=1e-10)


def test_zero_threshold_relinearizes_every_moved_variable():
    graph = chain_graph()
    graph.extend([scalar(2)], [between_factor(scalar(1), scalar(2), [1.0], [[0.1]])])
    lin = {k: np.zeros(1) for k in graph.layout}
    _, report = solve_map(graph, np.zeros(3), SolverConfig(relin_threshold=0.0), lin)
    assert report.relinearized == [scalar(0), scalar(1), scalar(2)]
    assert report.factor_indices == [0, 1, 2]
