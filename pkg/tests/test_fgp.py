import numpy as np
import pytest

from covplan.core.fgp import (
    PathCandidate,
    build_trajectory_tree,
    evaluate_tree,
    ig_additivity_check,
    outline,
    outline_text,
    query_required_covariances,
)
from covplan.core.layout import scalar
from covplan.core.ramdl import (
    ActionIncrement,
    FocusedQuery,
    evaluate_candidates_flat,
    merge_increments,
)
from covplan.core.verify import random_candidate_tree


def segment(label, involved, new, rng):
    m = len(new) + 1
    return ActionIncrement(
        0, involved, rng.normal(size=(m, len(involved))), new, rng.normal(size=(m, len(new))),
        label=label,
    )


@pytest.fixture
def shared_prefix(rng):
    first = segment("w0", [scalar(0), scalar(2)], [scalar(10)], rng)
    left = segment("w1", [scalar(10), scalar(4)], [scalar(11)], rng)
    right = segment("w2", [scalar(10), scalar(1)], [scalar(11)], rng)
    return [
        PathCandidate(0, [first, left]),
        PathCandidate(1, [first, right]),
        PathCandidate(2, [first, left]),
    ]


def test_candidates_share_prefix_nodes(shared_prefix):
    tree = build_trajectory_tree(shared_prefix)
    assert len(tree.nodes) == 4
    assert len(tree.root.children) == 1
    assert tree.leaves[0] is tree.leaves[2]
    assert tree.leaves[0].candidates == [0, 2]
    assert tree.leaves[1].depth == 2


def test_empty_candidate_set_is_rejected():
    with pytest.raises(ValueError):
        build_trajectory_tree([])


def test_requests_never_reach_above_their_new_variables(shared_prefix, spd_system):
    _, belief = spd_system(6)
    tree = build_trajectory_tree(shared_prefix)
    requests = query_required_covariances(tree)
    assert set(requests[tree.root.id]) == {scalar(0), scalar(1), scalar(2), scalar(4)}
    assert all(k in belief.layout for k in requests[tree.root.id])
    middle = tree.root.children[next(iter(tree.root.children))]
    assert set(requests[middle.id]) == {scalar(10), scalar(4), scalar(1)}


@pytest.mark.parametrize(
    "query",
    [FocusedQuery.unfocused(), FocusedQuery.old([scalar(1), scalar(3)]), FocusedQuery.new()],
    ids=["unfocused", "focused-old", "focused-new"],
)
def test_tree_matches_flat_evaluation(spd_system, query):
    rng = np.random.default_rng(21)
    lam, belief = spd_system(30, seed=3)
    candidates = random_candidate_tree(rng, list(belief.layout), 30)
    flat = evaluate_candidates_flat(
        [merge_increments(c.id, c.segments) for c in candidates], belief, query
    )
    ev = evaluate_tree(build_trajectory_tree(candidates), belief, query)
    assert set(ev.scores) == set(flat.scores)
    for cid, score in flat.scores.items():
        assert ev.scores[cid].kind == score.kind
        assert ev.scores[cid].value == pytest.approx(score.value, rel=1e-8, abs=1e-10)
    assert ev.best == flat.best
    assert ev.tree.max_evaluations() == 1


def test_rectangular_methods_give_the_same_tree_scores(spd_system):
    rng = np.random.default_rng(5)
    _, belief = spd_system(20, seed=5)
    candidates = random_candidate_tree(rng, list(belief.layout), 20)
    one = evaluate_tree(build_trajectory_tree(candidates), belief, method=1)
    two = evaluate_tree(build_trajectory_tree(candidates), belief, method=2)
    for cid in one.scores:
        assert one.scores[cid].value == pytest.approx(two.scores[cid].value, rel=1e-9)


def test_ig_adds_up_along_a_path(spd_system, rng):
    _, belief = spd_system(8, seed=9)
    path = [
        segment("a", [scalar(0)], [scalar(8)], rng),
        segment("b", [scalar(8), scalar(5)], [scalar(9), scalar(10)], rng),
        segment("c", [scalar(10), scalar(3)], [scalar(11)], rng),
    ]
    summed, direct = ig_additivity_check(path, belief)
    assert summed == pytest.approx(direct, rel=1e-9)


def test_outline_lists_nodes_depth_first(shared_prefix, spd_system):
    _, belief = spd_system(6)
    ev = evaluate_tree(build_trajectory_tree(shared_prefix), belief)
    lines = outline(ev.tree)
    assert [d for d, _ in lines] == [0, 1, 2, 2]
    assert lines[0][1].startswith("node 0 (root)")
    assert "w0" in lines[1][1] and "kind=rectangular" in lines[1][1]
    assert lines[2][1].endswith("candidates=0,2")
    assert lines[3][1].endswith("candidates=1")
    text = outline_text(ev.tree)
    assert text.splitlines()[2].startswith("    node")
