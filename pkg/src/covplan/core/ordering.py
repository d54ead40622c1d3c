"""Fill-reducing variable ordering for the information matrix."""

import numpy as np
import scipy.sparse as sp

from covplan.core.layout import StateLayout


def inverse_permutation(p: np.ndarray) -> np.ndarray:
    pinv = np.empty_like(p)
    pinv[p] = np.arange(p.size, dtype=p.dtype)
    return pinv


def block_adjacency(information: sp.spmatrix, layout: StateLayout) -> list[set[int]]:
    """Variable-level adjacency sets from the sparsity of an information matrix."""
    coo = sp.triu(information, k=1, format="coo")
    owner = np.empty(layout.dim, dtype=np.int64)
    for pos, key in enumerate(layout.keys):
        owner[layout.slice(key)] = pos
    adjacency: list[set[int]] = [set() for _ in range(len(layout))]
    rows, cols = owner[coo.row], owner[coo.col]
    nonzero = coo.data != 0.0
    for a, b in zip(rows[nonzero], cols[nonzero]):
        if a != b:
            adjacency[a].add(int(b))
            adjacency[b].add(int(a))
    return adjacency


def minimum_degree(adjacency: list[set[int]]) -> np.ndarray:
    """Greedy minimum-degree elimination order on a symmetric graph.

    Eliminating a node connects all of its remaining neighbours (the fill it
    would cause in the factor). Ties go to the lowest node id so the order is
    deterministic.
    """
    graph = [set(neigh) for neigh in adjacency]
    alive = set(range(len(graph)))
    order = []
    while alive:
        piv = min(alive, key=lambda v: (len(graph[v]), v))
        neighbours = graph[piv]
        for u in neighbours:
            graph[u].discard(piv)
            graph[u].update(neighbours - {u})
        alive.remove(piv)
        graph[piv] = set()
        order.append(piv)
    return np.asarray(order, dtype=np.int64)


def fill_reducing_ordering(information: sp.spmatrix, layout: StateLayout) -> np.ndarray:
    """Scalar permutation p such that information[p][:, p] factors with little fill.

    The order is computed on variables and expanded to their scalar blocks, so
    each variable stays contiguous.
    """
    if layout.dim == 0:
        return np.zeros(0, dtype=np.int64)
    var_order = minimum_degree(block_adjacency(information, layout))
    return layout.indices([layout.keys[i] for i in var_order])
