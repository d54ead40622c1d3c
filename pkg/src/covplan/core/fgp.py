"""Action tree with shared trajectory prefixes and covariance propagation along it.

Each edge is an action increment, each node the belief after the increments on
its root path. A bottom-up pass collects which covariance blocks every node
must provide; a top-down pass fills them from the root's one-time blocks with
the incremental updates. Each edge is scored once, and a candidate's score is
the sum over its path.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Optional, Protocol, Sequence

import numpy as np

from covplan.core.belief import BeliefState
from covplan.core.layout import Kind, VariableKey, unique_keys
from covplan.core.lemmas import CovarianceCache, update_cache, update_conditional
from covplan.core.ramdl import (
    ActionIncrement,
    FocusedQuery,
    InfoScore,
    QueryKind,
    ScoreKind,
    evaluate_candidates_flat,
    logdet_spd,
    merge_increments,
    score_increment,
    select_best,
)
from covplan.core.recovery import covariance_cache


class Trajectory(Protocol):
    id: int
    segments: Sequence[ActionIncrement]


@dataclass
class PathCandidate:
    id: int
    segments: list[ActionIncrement]


@dataclass(eq=False)
class FGPEdge:
    increment: ActionIncrement
    segment_id: Hashable
    score: Optional[InfoScore] = None


@dataclass(eq=False)
class FGPNode:
    id: int
    parent: Optional["FGPNode"] = None
    edge: Optional[FGPEdge] = None
    children: dict = field(default_factory=dict)
    candidates: list[int] = field(default_factory=list)
    request: list[VariableKey] = field(default_factory=list)
    conditional_request: list[VariableKey] = field(default_factory=list)
    cache: Optional[CovarianceCache] = None
    conditional: Optional[CovarianceCache] = None

    @property
    def depth(self) -> int:
        return 0 if self.parent is None else self.parent.depth + 1

    def path(self) -> list[FGPEdge]:
        edges = []
        node = self
        while node.edge is not None:
            edges.append(node.edge)
            node = node.parent
        return edges[::-1]


@dataclass
class FGPTree:
    root: FGPNode
    nodes: list[FGPNode]
    leaves: dict[int, FGPNode]
    counters: Counter = field(default_factory=Counter)

    @property
    def edges(self) -> list[FGPEdge]:
        return [n.edge for n in self.nodes if n.edge is not None]

    def max_evaluations(self) -> int:
        """Largest number of times any edge was propagated or scored."""
        return max(self.counters.values(), default=0)


def segment_identity(increment: ActionIncrement) -> Hashable:
    """Two segments are the same iff labels (waypoint ids) and factor templates match."""
    return (increment.label, increment.signature())


def build_trajectory_tree(candidates: Sequence[Trajectory]) -> FGPTree:
    """Prefix trie over the candidates' segment sequences."""
    if not candidates:
        raise ValueError("Cannot build an action tree without candidates")
    root = FGPNode(0)
    nodes = [root]
    leaves: dict[int, FGPNode] = {}
    for cand in sorted(candidates, key=lambda c: c.id):
        node = root
        for seg in cand.segments:
            key = segment_identity(seg)
            child = node.children.get(key)
            if child is None:
                child = FGPNode(len(nodes), parent=node, edge=FGPEdge(seg, key))
                node.children[key] = child
                nodes.append(child)
            node = child
        node.candidates.append(cand.id)
        leaves[cand.id] = node
    return FGPTree(root, nodes, leaves)


def _post_order(tree: FGPTree) -> list[FGPNode]:
    order, stack = [], [(tree.root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        stack.append((node, True))
        for child in reversed(list(node.children.values())):
            stack.append((child, False))
    return order


def _breadth_first(tree: FGPTree) -> list[FGPNode]:
    order, queue = [], [tree.root]
    while queue:
        node = queue.pop(0)
        order.append(node)
        queue.extend(node.children.values())
    return order


def _path_new_keys(node: FGPNode) -> list[VariableKey]:
    keys: list[VariableKey] = []
    for edge in node.path():
        keys.extend(edge.increment.new_keys)
    return keys


def leaf_focus(query: FocusedQuery, node: FGPNode) -> list[VariableKey]:
    """Focused new variables of a leaf: explicit focus, else its last new pose."""
    if query.focus:
        return list(query.focus)
    new_keys = _path_new_keys(node)
    poses = [k for k in new_keys if k.kind == Kind.pose]
    return poses[-1:] if poses else new_keys[-1:]


def query_required_covariances(tree: FGPTree, query: Optional[FocusedQuery] = None) -> dict:
    """Bottom-up: each node requests what its edges need plus what its children pass up."""
    query = query or FocusedQuery.unfocused()
    focus = set(query.focus) if query.kind == QueryKind.focused_old else set()
    for node in _post_order(tree):
        request: list[VariableKey] = []
        conditional: list[VariableKey] = []
        if node.candidates and query.kind == QueryKind.focused_new:
            request = leaf_focus(query, node)
        for child in node.children.values():
            inc = child.edge.increment
            new = set(inc.new_keys)
            request = unique_keys(
                request, [k for k in child.request if k not in new], inc.involved
            )
            if focus:
                conditional = unique_keys(
                    conditional,
                    [k for k in child.conditional_request if k not in new],
                    [k for k in inc.involved if k not in focus],
                )
        node.request = request
        node.conditional_request = conditional
    return {node.id: list(node.request) for node in tree.nodes}


def _empty_cache(conditioned_on=()) -> CovarianceCache:
    return CovarianceCache((), np.zeros((0, 0)), tuple(conditioned_on))


def propagate_covariances(
    tree: FGPTree, prior: BeliefState, query: Optional[FocusedQuery] = None, method: int = 2
) -> FGPTree:
    """Top-down: root blocks from the prior factor, then one lemma update per edge."""
    query = query or FocusedQuery.unfocused()
    focus = list(query.focus) if query.kind == QueryKind.focused_old else []
    for node in _breadth_first(tree):
        if node.parent is None:
            node.cache = covariance_cache(prior, node.request)
            if focus:
                node.conditional = covariance_cache(
                    prior, node.conditional_request, conditioned_on=focus
                )
            continue
        change = node.edge.increment.change()
        parent = node.parent
        tree.counters[("propagate", node.id)] += 1
        if node.request:
            node.cache = update_cache(parent.cache, change, node.request, method)
        else:
            node.cache = _empty_cache()
        if focus:
            if node.conditional_request:
                node.conditional = update_conditional(
                    parent.conditional, change, node.conditional_request, method
                )
            else:
                node.conditional = _empty_cache(focus)
    return tree


@dataclass
class TreeEvaluation:
    scores: dict[int, InfoScore]
    best: int
    tree: FGPTree


def evaluate_tree(
    tree: FGPTree, prior: BeliefState, query: Optional[FocusedQuery] = None, method: int = 2
) -> TreeEvaluation:
    """Requests, propagation, per-edge scores summed along each candidate's path."""
    query = query or FocusedQuery.unfocused()
    query_required_covariances(tree, query)
    propagate_covariances(tree, prior, query, method)

    scores: dict[int, InfoScore] = {}
    if query.kind == QueryKind.focused_new:
        by_leaf: dict[int, InfoScore] = {}
        for cand_id, leaf in tree.leaves.items():
            if leaf.id not in by_leaf:
                tree.counters[("leaf", leaf.id)] += 1
                cov = leaf.cache.block(leaf_focus(query, leaf))
                value = 0.5 * logdet_spd(cov, "focused posterior covariance")
                by_leaf[leaf.id] = InfoScore(value, ScoreKind.focused_entropy)
            scores[cand_id] = by_leaf[leaf.id]
        return TreeEvaluation(scores, select_best(scores), tree)

    for node in tree.nodes:
        if node.edge is None:
            continue
        tree.counters[("score", node.id)] += 1
        node.edge.score = score_increment(
            node.edge.increment, node.parent.cache, query, node.parent.conditional
        )
    for cand_id, leaf in tree.leaves.items():
        total = None
        for edge in leaf.path():
            total = edge.score if total is None else total + edge.score
        kind = (
            ScoreKind.focused_ig if query.kind == QueryKind.focused_old else ScoreKind.unfocused_ig
        )
        scores[cand_id] = total if total is not None else InfoScore(0.0, kind)
    return TreeEvaluation(scores, select_best(scores), tree)


def ig_additivity_check(
    path: Sequence[ActionIncrement], prior: BeliefState
) -> tuple[float, float]:
    """(sum of per-edge IG along a path, IG of the concatenated increment)."""
    tree = build_trajectory_tree([PathCandidate(0, list(path))])
    summed = evaluate_tree(tree, prior).scores[0].value
    merged = merge_increments(0, path)
    direct = evaluate_candidates_flat([merged], prior).scores[0].value
    return summed, direct


def outline(tree: FGPTree) -> list[tuple[int, str]]:
    """(depth, description) per node in depth-first order."""
    lines = []
    for node in _depth_first(tree):
        if node.edge is None:
            text = f"node {node.id} (root) request={len(node.request)} vars"
        else:
            inc = node.edge.increment
            score = "-" if node.edge.score is None else f"{node.edge.score.value:.6f}"
            text = (
                f"node {node.id} <- {inc.label or 'segment'} "
                f"kind={inc.kind.value} m={inc.m} new={len(inc.new_keys)} "
                f"involved={len(inc.involved)} IG={score}"
            )
        if node.candidates:
            text += " candidates=" + ",".join(str(c) for c in node.candidates)
        lines.append((node.depth, text))
    return lines


def _depth_first(tree: FGPTree) -> list[FGPNode]:
    order, stack = [], [tree.root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(reversed(list(node.children.values())))
    return order


def outline_text(tree: FGPTree) -> str:
    return "\n".join("  " * depth + text for depth, text in outline(tree)) + "\n"
