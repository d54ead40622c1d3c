import numpy as np
import pytest

from covplan.core import verify
from covplan.core.verify import CaseResult, random_candidate_tree, run_case, run_suites


def test_case_result_tolerance():
    assert CaseResult("s", 0, "c", 1e-9, 1e-9).ok
    assert CaseResult("s", 0, "c", 0.0, 0.0).ok
    assert not CaseResult("s", 0, "c", 2e-9, 1e-9).ok
    assert not CaseResult("s", 0, "c", np.nan, 1.0).ok
    assert not CaseResult("s", 0, "c", np.inf, np.inf).ok


@pytest.mark.slow
@pytest.mark.parametrize("suite", list(verify.SUITES))
def test_every_suite_passes_on_small_instances(suite):
    results = run_suites(3, max_n=20, suites=[suite])
    assert results, suite
    failed = [r for r in results if not r.ok]
    assert not failed, failed


def test_results_are_sorted_by_suite_then_seed():
    results = run_suites(3, max_n=10, suites=["ig", "lemmas"])
    keys = [(r.suite, r.seed) for r in results]
    order = {"ig": 0, "lemmas": 1}
    assert keys == sorted(keys, key=lambda k: (order[k[0]], k[1]))
    assert {r.suite for r in results} == {"ig", "lemmas"}


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suites(1, suites=["nope"])


def test_exceptions_become_failed_cases(monkeypatch):
    def broken(seed, max_n):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setitem(verify.SUITES, "broken", broken)
    (result,) = run_case("broken", 4, 10)
    assert result.case == "error" and result.seed == 4
    assert not result.ok
    assert "LinAlgError" in result.detail


def test_random_candidate_tree_shares_prefixes():
    rng = np.random.default_rng(0)
    keys = list(verify.scalar_belief(verify.random_information(rng, 12)).layout)
    candidates = random_candidate_tree(rng, keys, 12)
    assert 20 <= len(candidates) <= 180
    assert [c.id for c in candidates] == list(range(len(candidates)))
    assert candidates[0].segments[0] is candidates[1].segments[0]
    assert all(len(c.segments) == 3 for c in candidates)


def test_planner_suite_checks_every_query_kind():
    results = verify.planner_suite(2, 12)
    cases = {r.case for r in results}
    for kind in ("unfocused", "focused-old", "focused-new"):
        assert {f"{kind}-flat-vs-tree", f"{kind}-tree-vs-dense", f"{kind}-argmax"} <= cases
    failed = [r for r in results if not r.ok]
    assert not failed, failed


def test_slam_suite_includes_the_loop_closure():
    results = verify.slam_suite(0, 20, steps=3)
    cases = {r.case: r for r in results}
    assert cases["loop-closure-fallback"].ok
    for name in ("twostage", "onestage", "strategies"):
        assert cases[f"loop-closure-{name}"].ok, cases[f"loop-closure-{name}"]
