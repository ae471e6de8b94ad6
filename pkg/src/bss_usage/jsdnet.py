"""Inverse-JSD weighted networks over (city, day) distributions and
Louvain community detection on them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .divergence import DivergenceError, js_divergence

DEFAULT_EPSILON = 1e-9


def node_label(node) -> str:
    if isinstance(node, tuple):
        return "-".join(str(x) for x in node)
    return str(node)


@dataclass(frozen=True)
class JsdNetwork:
    nodes: tuple
    edges: tuple[tuple[int, int, float], ...]
    community: Mapping | None = None
    modularity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        for i, j, w in self.edges:
            if not i < j:
                raise ValueError("edges must be stored with i < j")
            if not (np.isfinite(w) and w > 0):
                raise ValueError(f"edge ({i}, {j}) has invalid weight {w}")
        if self.community is not None and set(self.community) != set(self.nodes):
            raise ValueError("community map must cover every node")

    @property
    def labels(self) -> list[str]:
        return [node_label(n) for n in self.nodes]

    def weight_matrix(self) -> np.ndarray:
        n = len(self.nodes)
        w = np.zeros((n, n))
        for i, j, x in self.edges:
            w[i, j] = w[j, i] = x
        return w

    def with_communities(self, assignment: Mapping, modularity: float) -> "JsdNetwork":
        return replace(self, community=dict(assignment), modularity=modularity)


def build_network(dists: Mapping, epsilon: float = DEFAULT_EPSILON) -> JsdNetwork:
    """Complete graph with weight 1 / max(JSD, epsilon) on every node pair.

    ``dists`` maps node keys (normally ``(city, day)``) to DayDistributions;
    node order follows the mapping's iteration order.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    nodes = list(dists)
    if len(nodes) < 2:
        raise ValueError("need at least two distributions")
    ds = [dists[k] for k in nodes]
    if len({d.bin_width for d in ds}) != 1:
        raise ValueError("distributions differ in bin_width")
    empty = [node_label(k) for k, d in zip(nodes, ds) if d.is_empty]
    if empty:
        raise DivergenceError(f"empty distributions: {empty}")
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            jsd = js_divergence(ds[i].probs, ds[j].probs)
            edges.append((i, j, 1.0 / max(jsd, epsilon)))
    return JsdNetwork(tuple(nodes), tuple(edges))


def top_edges(network: JsdNetwork, k: int) -> list[tuple[int, int, float]]:
    """The k heaviest edges; equal weights fall back to the label pair."""
    if k < 0:
        raise ValueError("k must be non-negative")
    labels = network.labels
    ranked = sorted(network.edges, key=lambda e: (-e[2], labels[e[0]], labels[e[1]]))
    return ranked[:k]


# ---------------------------------------------------------------------------
# modularity and Louvain


def modularity(weights: np.ndarray, membership: Sequence[int], resolution: float = 1.0) -> float:
    """Newman modularity of a partition of a weighted undirected graph.

    ``weights`` is symmetric; a diagonal entry counts as a self-loop of
    half its value on each end, i.e. W_ii is the summed A_ij over the pair.
    """
    w = np.asarray(weights, dtype=float)
    two_m = w.sum()
    if two_m == 0:
        return 0.0
    member = np.asarray(membership)
    deg = w.sum(axis=1)
    q = 0.0
    for c in np.unique(member):
        idx = member == c
        inside = w[np.ix_(idx, idx)].sum()
        tot = deg[idx].sum()
        q += inside / two_m - resolution * (tot / two_m) ** 2
    return float(q)


@dataclass
class LouvainResult:
    assignment: dict
    modularity: float
    level_modularity: list[float] = field(default_factory=list)
    membership: np.ndarray | None = None


def _one_level(w: np.ndarray, rng: np.random.Generator, resolution: float, init=None) -> np.ndarray:
    """Local-move phase: returns a community index per node of ``w``,
    starting from ``init`` (default: every node alone)."""
    n = w.shape[0]
    two_m = w.sum()
    comm = np.arange(n) if init is None else np.array(init)
    if two_m == 0:
        return comm
    deg = w.sum(axis=1)
    loops = np.diag(w).copy()
    tot = np.bincount(comm, weights=deg, minlength=n)
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(n):
            ci = comm[i]
            # links from i to each community, excluding i's own loop
            links = np.bincount(comm, weights=w[i], minlength=n)
            links[ci] -= loops[i]
            tot[ci] -= deg[i]
            gain = links - resolution * tot * deg[i] / two_m
            # only communities adjacent to i, plus its own, are candidates
            cand = np.flatnonzero(links > 0)
            best, best_gain = ci, gain[ci]
            for c in cand:
                if gain[c] > best_gain + 1e-12 * abs(best_gain) + 1e-15:
                    best, best_gain = c, gain[c]
            tot[best] += deg[i]
            if best != ci:
                comm[i] = best
                improved = True
    _, relabeled = np.unique(comm, return_inverse=True)
    return relabeled


def _aggregate(w: np.ndarray, comm: np.ndarray) -> np.ndarray:
    k = comm.max() + 1
    onehot = np.zeros((w.shape[0], k))
    onehot[np.arange(w.shape[0]), comm] = 1.0
    return onehot.T @ w @ onehot


def louvain_weights(
    weights: np.ndarray, seed: int = 0, resolution: float = 1.0
) -> tuple[np.ndarray, float, list[float]]:
    """Louvain on a dense symmetric weight matrix.

    Returns (membership per node, modularity, modularity after each level).
    Node visit order within each pass is a seeded permutation.  When the
    aggregation levels stop merging, nodes of the original graph get one
    more local-move pass starting from the current partition; if that
    improves modularity, aggregation resumes from the refined partition.
    """
    w = np.array(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or not np.allclose(w, w.T):
        raise ValueError("weights must be a symmetric square matrix")
    if np.any(w < 0):
        raise ValueError("negative weights")
    rng = np.random.default_rng(seed)
    n = w.shape[0]
    membership = np.arange(n)
    q = modularity(w, membership, resolution)
    levels = [q]
    while True:
        current = _aggregate(w, membership)
        while True:
            comm = _one_level(current, rng, resolution)
            if comm.max() + 1 == current.shape[0]:
                break
            membership = comm[membership]
            current = _aggregate(current, comm)
            levels.append(modularity(w, membership, resolution))
        refined = _one_level(w, rng, resolution, init=membership)
        _, refined = np.unique(refined, return_inverse=True)
        q_ref = modularity(w, refined, resolution)
        if q_ref <= levels[-1] + 1e-12:
            break
        membership = refined
        levels.append(q_ref)
    membership = _canonical(membership)
    return membership, modularity(w, membership, resolution), levels


def _canonical(membership: np.ndarray) -> np.ndarray:
    # number communities by first appearance in node order
    seen = {}
    return np.array([seen.setdefault(c, len(seen)) for c in membership])


def louvain(network: JsdNetwork, seed: int = 0, resolution: float = 1.0) -> LouvainResult:
    membership, q, levels = louvain_weights(network.weight_matrix(), seed, resolution)
    assignment = {node: int(c) for node, c in zip(network.nodes, membership)}
    return LouvainResult(assignment, q, levels, membership)
