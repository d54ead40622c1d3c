"""Randomized oracle suites: incremental results against dense linear algebra.

Each suite takes a seed and a size cap and returns one CaseResult per check.
Dense oracles assemble the posterior information matrix explicitly and
invert it or take its determinant with numpy.
"""

from dataclasses import dataclass
from multiprocessing import Pool
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from covplan.core.belief import BeliefState
from covplan.core.factors import compose, range_bearing
from covplan.core.fgp import (
    PathCandidate,
    build_trajectory_tree,
    evaluate_tree,
    ig_additivity_check,
)
from covplan.core.layout import StateLayout, VariableKey, scalar, unique_keys
from covplan.core.lemmas import (
    InferenceChange,
    update_conditional,
    update_not_augmented,
    update_rectangular,
    update_relinearized,
    update_squared,
)
from covplan.core.ramdl import (
    ActionIncrement,
    FocusedQuery,
    InfoScore,
    QueryKind,
    ScoreKind,
    entropy_focused_new,
    evaluate_candidates_flat,
    ig_focused_old,
    ig_unfocused,
    merge_increments,
    select_best,
)
from covplan.core.recovery import covariance_cache, recover_backsubstitution, recover_recursive
from covplan.core.settings import ScenarioConfig
from covplan.core.slam import SlamEstimator, SlamStep
from covplan.core.slam_update import MarginalTable, Strategy, needs_fallback, slam_step_update
from covplan.core.solver import SolverConfig
from covplan.core.world import Observation, SensorModel, WorldConfig, goal_control

LEMMA_TOLERANCE = 1e-8
METHOD_TOLERANCE = 1e-10
BASELINE_TOLERANCE = 1e-9
IG_TOLERANCE = 1e-9
FOCUSED_TOLERANCE = 1e-8
STRATEGY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CaseResult:
    suite: str
    seed: int
    case: str
    error: float
    tolerance: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error)) and self.error <= self.tolerance


# ============================================================================
# Random problems and dense oracles
# ============================================================================


def random_information(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sparse-ish SPD information matrix B^T B + I."""
    density = min(1.0, 3.0 / n)
    b = rng.normal(size=(n + 5, n)) * (rng.random((n + 5, n)) < density)
    return b.T @ b + np.eye(n)


def scalar_belief(information: np.ndarray) -> BeliefState:
    n = information.shape[0]
    layout = StateLayout([scalar(i) for i in range(n)])
    return BeliefState.from_information(layout, sp.csr_matrix(information), np.zeros(n))


def pick(rng: np.random.Generator, keys: Sequence[VariableKey], low: int, high: int):
    """Random subset of ``low``..``high`` keys, kept in layout order."""
    high = max(low, min(high, len(keys)))
    size = int(rng.integers(low, high + 1))
    return [keys[i] for i in sorted(rng.choice(len(keys), size=size, replace=False))]


def embed(a: np.ndarray, keys: Sequence[VariableKey], layout: StateLayout) -> np.ndarray:
    out = np.zeros((a.shape[0], layout.dim))
    out[:, layout.indices(keys)] = a
    return out


def padded(information: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim))
    n = information.shape[0]
    out[:n, :n] = information
    return out


def logdet(a: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(a)
    if sign <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return float(value)


def block(sigma: np.ndarray, layout: StateLayout, rows, cols=None) -> np.ndarray:
    ri = layout.indices(rows)
    ci = ri if cols is None else layout.indices(cols)
    return sigma[np.ix_(ri, ci)]


def conditional_block(sigma: np.ndarray, layout: StateLayout, keys, given) -> np.ndarray:
    s_yf = block(sigma, layout, keys, given)
    return block(sigma, layout, keys) - s_yf @ np.linalg.solve(block(sigma, layout, given), s_yf.T)


def relative(actual: np.ndarray, expected: np.ndarray) -> float:
    return float(np.linalg.norm(actual - expected) / max(np.linalg.norm(expected), 1e-12))


def scaled(actual: float, expected: float) -> float:
    return abs(actual - expected) / max(1.0, abs(expected))


def _new_keys(n: int, count: int, start: int = 0) -> list[VariableKey]:
    return [scalar(n + start + i) for i in range(count)]


# ============================================================================
# Suites
# ============================================================================


def lemma_suite(seed: int, max_n: int) -> list[CaseResult]:
    """Every lemma (and the conditional variant) against dense posterior inverses."""
    rng = np.random.default_rng([seed, 11])
    n = int(rng.integers(5, max(6, max_n + 1)))
    lam = random_information(rng, n)
    belief = scalar_belief(lam)
    layout = belief.layout
    keys = list(layout)
    out: list[CaseResult] = []

    def case(name, err, tol, detail=""):
        out.append(CaseResult("lemmas", seed, name, err, tol, detail))

    # additive factors, no new variables
    xi = pick(rng, keys, 1, 6)
    m = int(rng.integers(1, 9))
    a_i = rng.normal(size=(m, len(xi)))
    y = pick(rng, keys, 1, 6)
    cache = covariance_cache(belief, unique_keys(y, xi))
    result = update_not_augmented(cache, InferenceChange.not_augmented(xi, a_i), y)
    a = embed(a_i, xi, layout)
    sigma = np.linalg.inv(lam + a.T @ a)
    case("not-augmented", relative(result.matrix, block(sigma, layout, y)), LEMMA_TOLERANCE)

    # new variables, more rows than new dimensions
    n_new = int(rng.integers(1, 6))
    new = _new_keys(n, n_new)
    m = n_new + int(rng.integers(1, 6))
    a_i = rng.normal(size=(m, len(xi)))
    a_new = rng.normal(size=(m, n_new))
    change = InferenceChange.augmented(xi, a_i, new, a_new)
    plus = layout.extend(new)
    y_old = pick(rng, keys, 0, 5)
    y_new = pick(rng, new, 1, n_new)
    y = y_old + y_new
    cache = covariance_cache(belief, unique_keys(y_old, xi))
    a = embed(np.hstack([a_i, a_new]), xi + new, plus)
    sigma = np.linalg.inv(padded(lam, plus.dim) + a.T @ a)
    expected = block(sigma, plus, y)
    r1 = update_rectangular(cache, change, y, method=1).matrix
    r2 = update_rectangular(cache, change, y, method=2).matrix
    case("rectangular-method-1", relative(r1, expected), LEMMA_TOLERANCE)
    case("rectangular-method-2", relative(r2, expected), LEMMA_TOLERANCE)
    case("rectangular-methods-agree", relative(r1, r2), METHOD_TOLERANCE)

    # new variables, as many rows as new dimensions
    a_i = rng.normal(size=(n_new, len(xi)))
    a_new = rng.normal(size=(n_new, n_new)) + 3.0 * np.eye(n_new)
    change = InferenceChange.augmented(xi, a_i, new, a_new)
    a = embed(np.hstack([a_i, a_new]), xi + new, plus)
    sigma = np.linalg.inv(padded(lam, plus.dim) + a.T @ a)
    result = update_squared(cache, change, y)
    case("squared", relative(result.matrix, block(sigma, plus, y)), LEMMA_TOLERANCE)
    if y_old:
        same = np.array_equal(result.block(y_old), cache.block(y_old))
        case("squared-conservation", 0.0 if same else np.inf, 0.0)

    # relinearization: the prior already holds A_-^T A_-
    m = int(rng.integers(1, 7))
    a_minus = rng.normal(size=(m, len(xi)))
    a_plus = a_minus + 0.1 * rng.normal(size=a_minus.shape)
    am = embed(a_minus, xi, layout)
    ap = embed(a_plus, xi, layout)
    relin_belief = scalar_belief(lam + am.T @ am)
    y = pick(rng, keys, 1, 6)
    cache = covariance_cache(relin_belief, unique_keys(y, xi))
    result = update_relinearized(cache, InferenceChange.relinearization(xi, a_minus, a_plus), y)
    sigma = np.linalg.inv(lam + ap.T @ ap)
    case("relinearized", relative(result.matrix, block(sigma, layout, y)), LEMMA_TOLERANCE)

    # conditional on F, additive and augmenting
    if n >= 4:
        given = pick(rng, keys, 1, min(5, max(1, n // 3)))
        rest = [k for k in keys if k not in set(given)]
        y = pick(rng, rest, 1, 5)
        xi = pick(rng, keys, 1, 6)
        unfocused = [k for k in xi if k not in set(given)]
        m = int(rng.integers(1, 8))
        a_i = rng.normal(size=(m, len(xi)))
        cache = covariance_cache(belief, unique_keys(y, unfocused), conditioned_on=given)
        result = update_conditional(cache, InferenceChange.not_augmented(xi, a_i), y)
        a = embed(a_i, xi, layout)
        sigma = np.linalg.inv(lam + a.T @ a)
        expected = conditional_block(sigma, layout, y, given)
        case("conditional", relative(result.matrix, expected), LEMMA_TOLERANCE)

        m = n_new + int(rng.integers(1, 4))
        a_i = rng.normal(size=(m, len(xi)))
        a_new = rng.normal(size=(m, n_new))
        change = InferenceChange.augmented(xi, a_i, new, a_new)
        y_all = y + pick(rng, new, 1, n_new)
        result = update_conditional(cache, change, y_all)
        a = embed(np.hstack([a_i, a_new]), xi + new, plus)
        sigma = np.linalg.inv(padded(lam, plus.dim) + a.T @ a)
        expected = conditional_block(sigma, plus, y_all, given)
        case("conditional-rectangular", relative(result.matrix, expected), LEMMA_TOLERANCE)
    return out


def baseline_suite(seed: int, max_n: int) -> list[CaseResult]:
    """Recursive and back-substitution recovery against the dense inverse."""
    rng = np.random.default_rng([seed, 12])
    n = int(rng.integers(2, max(3, min(150, max_n) + 1)))
    lam = random_information(rng, n)
    belief = scalar_belief(lam)
    p = belief.permutation
    expected = np.linalg.inv(lam[np.ix_(p, p)])
    rec = recover_recursive(belief.sqrt_factor)
    back = recover_backsubstitution(belief.sqrt_factor)
    detail = f"n={n}"
    cases = {
        "recursive": relative(rec, expected),
        "backsub": relative(back, expected),
        "agree": relative(rec, back),
    }
    return [
        CaseResult("baselines", seed, name, err, BASELINE_TOLERANCE, detail)
        for name, err in cases.items()
    ]


def ig_suite(seed: int, max_n: int) -> list[CaseResult]:
    """Information objectives against dense determinants."""
    rng = np.random.default_rng([seed, 13])
    n = int(rng.integers(4, max(5, min(40, max_n) + 1)))
    lam = random_information(rng, n)
    belief = scalar_belief(lam)
    layout = belief.layout
    keys = list(layout)
    prior_logdet = logdet(lam)
    out: list[CaseResult] = []

    def case(name, err, tol):
        out.append(CaseResult("ig", seed, name, err, tol))

    xi = pick(rng, keys, 1, 6)
    m = int(rng.integers(1, 9))
    a_i = rng.normal(size=(m, len(xi)))
    sigma_i = covariance_cache(belief, xi).matrix
    a = embed(a_i, xi, layout)
    posterior = lam + a.T @ a
    expected = 0.5 * (logdet(posterior) - prior_logdet)
    case("unfocused", scaled(ig_unfocused(a_i, sigma_i).value, expected), IG_TOLERANCE)

    n_new = int(rng.integers(1, 5))
    new = _new_keys(n, n_new)
    plus = layout.extend(new)
    a_new = rng.normal(size=(m + n_new, n_new))
    a_i2 = rng.normal(size=(m + n_new, len(xi)))
    a2 = embed(np.hstack([a_i2, a_new]), xi + new, plus)
    posterior2 = padded(lam, plus.dim) + a2.T @ a2
    expected = 0.5 * (logdet(posterior2) - prior_logdet)
    case(
        "unfocused-augmenting",
        scaled(ig_unfocused(a_i2, sigma_i, a_new).value, expected),
        IG_TOLERANCE,
    )

    focus = pick(rng, keys, 1, min(5, n - 1))
    unfocused = [k for k in xi if k not in set(focus)]
    idx = StateLayout(xi).indices(unfocused)
    sigma_u = (
        covariance_cache(belief, unfocused, conditioned_on=focus).matrix
        if unfocused
        else np.zeros((0, 0))
    )
    prior_sigma = np.linalg.inv(lam)
    prior_focus = logdet(block(prior_sigma, layout, focus))
    post_focus = logdet(block(np.linalg.inv(posterior), layout, focus))
    score = ig_focused_old(a_i, a_i[:, idx], sigma_i, sigma_u)
    case("focused-old", scaled(score.value, 0.5 * (prior_focus - post_focus)), FOCUSED_TOLERANCE)

    post_focus2 = logdet(block(np.linalg.inv(posterior2), plus, focus))
    score = ig_focused_old(a_i2, a_i2[:, idx], sigma_i, sigma_u, a_new)
    case(
        "focused-old-augmenting",
        scaled(score.value, 0.5 * (prior_focus - post_focus2)),
        FOCUSED_TOLERANCE,
    )

    change = InferenceChange.augmented(xi, a_i2, new, a_new)
    target = new[-1:]
    entropy = entropy_focused_new(change, sigma_i, target).value
    expected = 0.5 * logdet(block(np.linalg.inv(posterior2), plus, target))
    case("focused-new", scaled(entropy, expected), FOCUSED_TOLERANCE)
    return out


def _random_segment(
    rng: np.random.Generator,
    label: str,
    old: Sequence[VariableKey],
    previous: Optional[VariableKey],
    new: list[VariableKey],
) -> ActionIncrement:
    involved = pick(rng, old, 1, 3)
    if previous is not None:
        involved.append(previous)
    extra = int(rng.integers(0, 3))
    m = len(new) + extra
    a_new = rng.normal(size=(m, len(new)))
    if extra == 0:
        a_new += 2.0 * np.eye(len(new))
    return ActionIncrement(
        0, tuple(involved), rng.normal(size=(m, len(involved))), tuple(new), a_new, label=label
    )


def _dense_path_ig(lam: np.ndarray, layout: StateLayout, path: Sequence[ActionIncrement]) -> float:
    merged = merge_increments(0, path)
    plus = layout.extend(merged.new_keys)
    a = embed(
        np.hstack([merged.a_involved, merged.a_new]),
        list(merged.involved) + list(merged.new_keys),
        plus,
    )
    return 0.5 * (logdet(padded(lam, plus.dim) + a.T @ a) - logdet(lam))


def additivity_suite(seed: int, max_n: int) -> list[CaseResult]:
    """Per-segment information gains along a path add up to the whole path's gain."""
    rng = np.random.default_rng([seed, 14])
    n = int(rng.integers(4, max(5, min(60, max_n) + 1)))
    lam = random_information(rng, n)
    belief = scalar_belief(lam)
    keys = list(belief.layout)
    segments = int(rng.integers(2, 6))
    path, previous = [], None
    for d in range(segments):
        new = _new_keys(n, int(rng.integers(1, 3)), start=2 * d)
        path.append(_random_segment(rng, f"p{d}", keys, previous, new))
        previous = new[-1]
    summed, direct = ig_additivity_check(path, belief)
    dense = _dense_path_ig(lam, belief.layout, path)
    detail = f"segments={segments}"
    cases = {"sum-vs-direct": scaled(summed, direct), "direct-vs-dense": scaled(direct, dense)}
    return [
        CaseResult("additivity", seed, name, err, IG_TOLERANCE, detail)
        for name, err in cases.items()
    ]


def random_candidate_tree(
    rng: np.random.Generator, keys: Sequence[VariableKey], n: int
) -> list[PathCandidate]:
    """Three-level prefix-sharing candidate set (20 to 180 candidates)."""
    widths = (int(rng.integers(2, 7)), int(rng.integers(2, 6)), int(rng.integers(5, 7)))
    candidates: list[PathCandidate] = []

    def grow(depth: int, label: str, previous, prefix: list[ActionIncrement]):
        if depth == len(widths):
            candidates.append(PathCandidate(len(candidates), list(prefix)))
            return
        for b in range(widths[depth]):
            name = f"{label}.{b}" if label else str(b)
            new = _new_keys(n, int(rng.integers(1, 3)), start=2 * depth)
            seg = _random_segment(rng, name, keys, previous, new)
            grow(depth + 1, name, new[-1], prefix + [seg])

    grow(0, "", None, [])
    return candidates


def _dense_score(
    lam: np.ndarray, layout: StateLayout, path: Sequence[ActionIncrement], query: FocusedQuery
) -> InfoScore:
    """Score of a whole path from the dense posterior information matrix."""
    if query.kind == QueryKind.unfocused:
        return InfoScore(_dense_path_ig(lam, layout, path), ScoreKind.unfocused_ig)
    merged = merge_increments(0, path)
    plus = layout.extend(merged.new_keys)
    a = embed(
        np.hstack([merged.a_involved, merged.a_new]),
        list(merged.involved) + list(merged.new_keys),
        plus,
    )
    sigma = np.linalg.inv(padded(lam, plus.dim) + a.T @ a)
    if query.kind == QueryKind.focused_old:
        focus = list(query.focus)
        prior = logdet(block(np.linalg.inv(lam), layout, focus))
        return InfoScore(0.5 * (prior - logdet(block(sigma, plus, focus))), ScoreKind.focused_ig)
    value = 0.5 * logdet(block(sigma, plus, query.new_focus(merged)))
    return InfoScore(value, ScoreKind.focused_entropy)


def planner_suite(seed: int, max_n: int) -> list[CaseResult]:
    """Tree and flat evaluation against dense brute force, for every query kind."""
    rng = np.random.default_rng([seed, 15])
    n = int(rng.integers(10, max(11, max_n + 1)))
    lam = random_information(rng, n)
    belief = scalar_belief(lam)
    keys = list(belief.layout)
    candidates = random_candidate_tree(rng, keys, n)
    merged = [merge_increments(c.id, c.segments) for c in candidates]
    focus = pick(rng, keys, 1, 3)
    queries = [FocusedQuery.unfocused(), FocusedQuery.old(focus), FocusedQuery.new()]

    out: list[CaseResult] = []
    for query in queries:
        flat = evaluate_candidates_flat(merged, belief, query)
        # counters accumulate per tree, so each query gets its own
        tree = build_trajectory_tree(candidates)
        ev = evaluate_tree(tree, belief, query)
        dense = {c.id: _dense_score(lam, belief.layout, c.segments, query) for c in candidates}
        dense_best = select_best(dense)
        gap = max(scaled(flat.scores[i].value, ev.scores[i].value) for i in flat.scores)
        gap_dense = max(scaled(ev.scores[i].value, dense[i].value) for i in dense)
        same = flat.best == ev.best == dense_best
        name = query.kind.value
        detail = (
            f"candidates={len(candidates)} flat={flat.best} tree={ev.best} dense={dense_best}"
        )
        out += [
            CaseResult("planner", seed, f"{name}-flat-vs-tree", gap, LEMMA_TOLERANCE, detail),
            CaseResult(
                "planner", seed, f"{name}-tree-vs-dense", gap_dense, FOCUSED_TOLERANCE, detail
            ),
            CaseResult("planner", seed, f"{name}-argmax", 0.0 if same else 1.0, 0.0, detail),
            CaseResult(
                "planner",
                seed,
                f"{name}-single-evaluation",
                tree.max_evaluations() - 1.0,
                0.0,
                detail,
            ),
        ]
    return out


def scripted_loop(
    seed: int, side: int = 4, relin_threshold: float = 0.05
) -> tuple[SlamEstimator, SlamStep]:
    """Drive a square of ``side`` steps per edge and close it on the start landmarks.

    Landmarks near the start are seen only from x0 and from the final pose.
    Odometry carries a forward and heading bias, so the drift accumulated
    along the square is corrected all at once on the last step.
    """
    rng = np.random.default_rng([seed, 16])
    sensor = SensorModel()
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, 4))
    radii = rng.uniform(3.0, 6.0, 4)
    landmarks = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])

    def observe_all(truth: np.ndarray) -> list[Observation]:
        noise_std = np.array([sensor.range_std, sensor.bearing_std])
        return [
            Observation(i, range_bearing(truth, lm) + noise_std * rng.normal(size=2))
            for i, lm in enumerate(landmarks)
        ]

    estimator = SlamEstimator(sensor, SolverConfig(relin_threshold=relin_threshold))
    truth = np.zeros(3)
    step = estimator.initialize(truth, observe_all(truth))
    total = 4 * side
    for k in range(1, total + 1):
        control = np.array([5.0, 0.0, np.pi / 2 if k % side == 0 else 0.0])
        truth = compose(truth, control)
        odometry = control + np.array([0.2, 0.0, 0.01]) * rng.uniform(0.5, 1.5)
        step = estimator.step(odometry, observe_all(truth) if k == total else [])
    return estimator, step


def slam_suite(seed: int, max_n: int, steps: int = 30) -> list[CaseResult]:
    """Two-stage and one-stage SLAM updates against dense marginals.

    Covers a short exploration run and a scripted loop closure, which must
    trigger the fallback and still match with the fallback disabled.
    """
    from covplan.core.runner import Simulation

    config = ScenarioConfig(
        world=WorldConfig(width=200.0, height=200.0, landmarks=40, goals=4),
        solver=SolverConfig(relin_threshold=0.01),
        seed=seed,
    )
    run, _ = Simulation.start(config)
    errors = {"twostage": 0.0, "onestage": 0.0, "strategies": 0.0}
    relinearized = 0
    for _ in range(steps):
        step = run.move(goal_control(run.sim.pose, run.goal, config.world))
        for name, err in _strategy_errors(step).items():
            errors[name] = max(errors[name], err)
        relinearized += bool(step.change.relin_keys)
        if step.posterior.dim > max(max_n, 50) * 4:
            break
    detail = f"steps={steps} relinearization_steps={relinearized}"
    out = [
        CaseResult("slam", seed, "twostage", errors["twostage"], LEMMA_TOLERANCE, detail),
        CaseResult("slam", seed, "onestage", errors["onestage"], LEMMA_TOLERANCE, detail),
        CaseResult("slam", seed, "strategies", errors["strategies"], STRATEGY_TOLERANCE, detail),
    ]

    _, closure = scripted_loop(seed)
    change = closure.change
    fallback = needs_fallback(change, closure.prior.dim, 1.0)
    detail = f"relinearized={len(closure.report.relinearized)} m={change.m}"
    out.append(
        CaseResult("slam", seed, "loop-closure-fallback", 0.0 if fallback else 1.0, 0.0, detail)
    )
    tolerances = {
        "twostage": LEMMA_TOLERANCE,
        "onestage": LEMMA_TOLERANCE,
        "strategies": STRATEGY_TOLERANCE,
    }
    for name, err in _strategy_errors(closure).items():
        out.append(CaseResult("slam", seed, f"loop-closure-{name}", err, tolerances[name], detail))
    return out


def _strategy_errors(step: SlamStep) -> dict[str, float]:
    """Scaled gaps of both strategies (fallback disabled) to the posterior's own marginals."""
    table = MarginalTable.from_belief(step.prior)
    reference = MarginalTable.from_belief(step.posterior)
    args = (table, step.prior, step.change, step.posterior)
    two = slam_step_update(*args, Strategy.two_stage, np.inf)
    one = slam_step_update(*args, Strategy.one_stage, np.inf)
    scale = max(1.0, max(float(np.abs(b).max()) for b in reference.blocks.values()))
    return {
        "twostage": reference.max_difference(two.table) / scale,
        "onestage": reference.max_difference(one.table) / scale,
        "strategies": two.table.max_difference(one.table) / scale,
    }


SUITES: dict[str, Callable[[int, int], list[CaseResult]]] = {
    "lemmas": lemma_suite,
    "baselines": baseline_suite,
    "ig": ig_suite,
    "additivity": additivity_suite,
    "planner": planner_suite,
    "slam": slam_suite,
}


def run_case(suite: str, seed: int, max_n: int) -> list[CaseResult]:
    """One suite for one seed; exceptions become failed cases."""
    try:
        return SUITES[suite](seed, max_n)
    except Exception as e:  # reported as a failed case
        return [CaseResult(suite, seed, "error", np.inf, 0.0, f"{type(e).__name__}: {e}")]


def run_suites(
    seeds: int,
    max_n: int = 200,
    suites: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> list[CaseResult]:
    """All (suite, seed) jobs, sharded over ``workers`` processes, sorted by suite then seed."""
    names = list(suites or SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"Unknown suites: {', '.join(unknown)}")
    jobs = [(name, seed, max_n) for name in names for seed in range(seeds)]
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            batches = pool.starmap(run_case, jobs)
    else:
        batches = [run_case(*job) for job in jobs]
    results = [r for batch in batches for r in batch]
    order = {name: i for i, name in enumerate(names)}
    return sorted(results, key=lambda r: (order[r.suite], r.seed))
