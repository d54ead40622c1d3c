import numpy as np
import pytest

from covplan.core.errors import DimensionMismatchError, NotPositiveDefiniteError
from covplan.core.layout import StateLayout, landmark, pose, scalar
from covplan.core.ramdl import (
    ActionIncrement,
    FocusedQuery,
    InfoScore,
    ScoreKind,
    entropy_focused_new,
    evaluate_candidates_flat,
    ig_focused_old,
    ig_unfocused,
    logdet_spd,
    merge_increments,
    select_best,
)
from covplan.core.recovery import covariance_cache
from covplan.core.verify import embed, padded


def logdet(a):
    return np.linalg.slogdet(a)[1]


def dense_ig(lam, layout, a_rows, keys):
    a = embed(a_rows, keys, layout)
    return 0.5 * (logdet(padded(lam, layout.dim) + a.T @ a) - logdet(lam))


def test_unfocused_ig_matches_determinant_ratio(spd_system, rng):
    lam, belief = spd_system(10, seed=1)
    xi = [scalar(2), scalar(5), scalar(9)]
    a = rng.normal(size=(4, 3))
    score = ig_unfocused(a, covariance_cache(belief, xi).matrix)
    assert score.kind == ScoreKind.unfocused_ig
    assert score.value == pytest.approx(dense_ig(lam, belief.layout, a, xi), rel=1e-9)


def test_augmenting_ig_includes_new_variables(spd_system, rng):
    lam, belief = spd_system(8, seed=2)
    xi = [scalar(0), scalar(3)]
    new = [landmark(0), pose(0)]
    plus = belief.layout.extend(new)
    a_i = rng.normal(size=(7, 2))
    a_new = rng.normal(size=(7, 5))
    score = ig_unfocused(a_i, covariance_cache(belief, xi).matrix, a_new)
    expected = dense_ig(lam, plus, np.hstack([a_i, a_new]), xi + new)
    assert score.value == pytest.approx(expected, rel=1e-9)


def test_more_measurements_never_lose_information(spd_system, rng):
    _, belief = spd_system(6, seed=3)
    xi = [scalar(1), scalar(4)]
    sigma = covariance_cache(belief, xi).matrix
    a = rng.normal(size=(5, 2))
    gains = [ig_unfocused(a[:k], sigma).value for k in range(1, 6)]
    assert all(g >= 0 for g in gains)
    assert all(b >= a - 1e-12 for a, b in zip(gains, gains[1:]))


def test_focused_old_ig_matches_marginal_determinants(spd_system, rng):
    lam, belief = spd_system(9, seed=4)
    focus = [scalar(1), scalar(6)]
    xi = [scalar(1), scalar(3), scalar(7)]
    a = rng.normal(size=(4, 3))
    unfocused = [scalar(3), scalar(7)]
    score = ig_focused_old(
        a,
        a[:, 1:],
        covariance_cache(belief, xi).matrix,
        covariance_cache(belief, unfocused, conditioned_on=focus).matrix,
    )
    layout = belief.layout
    idx = layout.indices(focus)
    full = embed(a, xi, layout)
    prior = np.linalg.inv(lam)[np.ix_(idx, idx)]
    post = np.linalg.inv(lam + full.T @ full)[np.ix_(idx, idx)]
    assert score.kind == ScoreKind.focused_ig
    assert score.value == pytest.approx(0.5 * (logdet(prior) - logdet(post)), rel=1e-8)


def test_fully_focused_involved_set_scores_like_unfocused(spd_system, rng):
    _, belief = spd_system(6, seed=2)
    xi = [scalar(0), scalar(4)]
    a = rng.normal(size=(3, 2))
    sigma_i = covariance_cache(belief, xi).matrix
    score = ig_focused_old(a, np.zeros((3, 0)), sigma_i, np.zeros((0, 0)))
    assert score.kind == ScoreKind.focused_ig
    assert score.value == pytest.approx(ig_unfocused(a, sigma_i).value, rel=1e-12)


@pytest.mark.parametrize("rows", [3, 6])
def test_focused_new_entropy_of_terminal_pose(spd_system, rng, rows):
    lam, belief = spd_system(7, seed=5)
    xi = [scalar(0), scalar(6)]
    new = [pose(0)]
    inc = ActionIncrement(
        0, xi, rng.normal(size=(rows, 2)), new, rng.normal(size=(rows, 3)) + np.eye(rows, 3)
    )
    assert FocusedQuery.new().new_focus(inc) == [pose(0)]
    score = entropy_focused_new(inc.change(), covariance_cache(belief, xi).matrix, new)

    plus = belief.layout.extend(new)
    a = embed(np.hstack([inc.a_involved, inc.a_new]), xi + new, plus)
    post = np.linalg.inv(padded(lam, plus.dim) + a.T @ a)
    idx = plus.indices(new)
    assert score.kind == ScoreKind.focused_entropy
    assert score.value == pytest.approx(0.5 * logdet(post[np.ix_(idx, idx)]), rel=1e-8)


def test_new_focus_defaults_and_validation(rng):
    inc = ActionIncrement(
        0, [scalar(0)], np.ones((7, 1)), [pose(1), landmark(2)], rng.normal(size=(7, 5))
    )
    assert FocusedQuery.new().new_focus(inc) == [pose(1)]
    no_pose = ActionIncrement(1, [scalar(0)], np.ones((3, 1)), [landmark(2)], np.ones((3, 2)))
    assert FocusedQuery.new().new_focus(no_pose) == [landmark(2)]
    with pytest.raises(DimensionMismatchError):
        FocusedQuery.new([pose(9)]).new_focus(inc)


def test_select_best_breaks_ties_by_lowest_id():
    scores = {
        4: InfoScore(2.0, ScoreKind.unfocused_ig),
        2: InfoScore(2.0 + 1e-12, ScoreKind.unfocused_ig),
        7: InfoScore(1.0, ScoreKind.unfocused_ig),
    }
    assert select_best(scores) == 2
    with pytest.raises(ValueError):
        select_best({})


def test_entropy_scores_prefer_the_smallest_value():
    scores = {
        0: InfoScore(1.5, ScoreKind.focused_entropy),
        1: InfoScore(-0.5, ScoreKind.focused_entropy),
    }
    assert select_best(scores) == 1
    assert scores[1].utility == 0.5


def test_scores_add_only_within_a_kind():
    total = InfoScore(1.0, ScoreKind.focused_ig) + InfoScore(0.5, ScoreKind.focused_ig)
    assert total == InfoScore(1.5, ScoreKind.focused_ig)
    with pytest.raises(ValueError):
        InfoScore(1.0, ScoreKind.unfocused_ig) + InfoScore(1.0, ScoreKind.focused_ig)


def test_increment_requires_new_jacobian():
    with pytest.raises(DimensionMismatchError):
        ActionIncrement(0, [scalar(0)], np.ones((2, 1)), [scalar(5)])


def test_merge_chains_segments(spd_system, rng):
    lam, belief = spd_system(6, seed=6)
    first = ActionIncrement(
        0, [scalar(2)], rng.normal(size=(3, 1)), [scalar(6)], rng.normal(size=(3, 1)), label="a"
    )
    second = ActionIncrement(
        1,
        [scalar(6), scalar(4)],
        rng.normal(size=(2, 2)),
        [scalar(7)],
        rng.normal(size=(2, 1)),
        label="b",
    )
    merged = merge_increments(9, [first, second], "ab")
    assert merged.id == 9 and merged.label == "ab"
    assert merged.involved == (scalar(2), scalar(4))
    assert merged.new_keys == (scalar(6), scalar(7))
    assert merged.m == 5

    plus = belief.layout.extend([scalar(6), scalar(7)])
    a = np.zeros((5, plus.dim))
    a[:3, plus.indices([scalar(2), scalar(6)])] = np.hstack([first.a_involved, first.a_new])
    a[3:, plus.indices([scalar(6), scalar(4), scalar(7)])] = np.hstack(
        [second.a_involved, second.a_new]
    )
    merged_rows = embed(
        np.hstack([merged.a_involved, merged.a_new]), list(merged.involved + merged.new_keys), plus
    )
    np.testing.assert_array_equal(merged_rows, a)

    score = ig_unfocused(
        merged.a_involved, covariance_cache(belief, merged.involved).matrix, merged.a_new
    )
    expected = 0.5 * (logdet(padded(lam, plus.dim) + a.T @ a) - logdet(lam))
    assert score.value == pytest.approx(expected, rel=1e-9)


def test_flat_evaluation_scores_every_candidate(spd_system, rng):
    lam, belief = spd_system(10, seed=7)
    involved = [[scalar(0), scalar(3)], [scalar(3), scalar(8)], [scalar(5)]]
    cands = [
        ActionIncrement(i, keys, rng.normal(size=(2, len(keys))))
        for i, keys in enumerate(involved)
    ]
    result = evaluate_candidates_flat(cands, belief)
    assert result.requested == [scalar(0), scalar(3), scalar(8), scalar(5)]
    for c in cands:
        expected = dense_ig(lam, belief.layout, c.a_involved, list(c.involved))
        assert result.scores[c.id].value == pytest.approx(expected, rel=1e-9)
    assert result.best == max(result.scores, key=lambda i: result.scores[i].value)


def test_flat_focused_old_evaluation(spd_system, rng):
    lam, belief = spd_system(8, seed=8)
    focus = [scalar(0), scalar(1)]
    involved = [[scalar(0), scalar(3)], [scalar(1)], [scalar(4), scalar(6)]]
    cands = [
        ActionIncrement(i, keys, rng.normal(size=(3, len(keys))))
        for i, keys in enumerate(involved)
    ]
    result = evaluate_candidates_flat(cands, belief, FocusedQuery.old(focus))
    layout = StateLayout([scalar(i) for i in range(8)])
    idx = layout.indices(focus)
    prior = logdet(np.linalg.inv(lam)[np.ix_(idx, idx)])
    for c in cands:
        a = embed(c.a_involved, list(c.involved), layout)
        post = logdet(np.linalg.inv(lam + a.T @ a)[np.ix_(idx, idx)])
        assert result.scores[c.id].value == pytest.approx(0.5 * (prior - post), rel=1e-8, abs=1e-12)


def test_flat_evaluation_needs_candidates(spd_system):
    _, belief = spd_system(3)
    with pytest.raises(ValueError):
        evaluate_candidates_flat([], belief)


def test_logdet_spd():
    assert logdet_spd(np.zeros((0, 0)), "empty") == 0.0
    assert logdet_spd(np.diag([2.0, 3.0]), "diag") == pytest.approx(np.log(6.0))
    with pytest.raises(NotPositiveDefiniteError):
        logdet_spd(np.array([[1.0, 2.0], [2.0, 1.0]]), "indefinite")
