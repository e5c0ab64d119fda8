"""Topological descriptors of a community.

Distances are hop counts on the undirected, unweighted view of the community
subgraph. Node-level centralities are averaged over all nodes.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Hashable, Sequence

import networkx as nx
import numpy as np

from .graph import TX

FEATURE_NAMES = (
    "n_addresses",
    "n_transactions",
    "transitivity",
    "diameter",
    "degree_c",
    "closeness",
    "betweenness",
    "harmonic",
)


@dataclass(frozen=True)
class FeatureVector:
    n_addresses: int
    n_transactions: int
    transitivity: float
    diameter: int
    mean_degree_centrality: float
    mean_closeness: float
    mean_betweenness: float
    mean_harmonic: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def __iter__(self):
        return iter(astuple(self))

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} is not finite")


def _graph(community) -> nx.Graph | nx.DiGraph:
    return getattr(community, "g", community)


def _adjacency(community) -> tuple[list[Hashable], list[list[int]]]:
    g = _graph(community)
    nodes = sorted(g.nodes())
    pos = {v: i for i, v in enumerate(nodes)}
    nbrs: list[set[int]] = [set() for _ in nodes]
    for u, v in g.edges():
        if u != v:
            nbrs[pos[u]].add(pos[v])
            nbrs[pos[v]].add(pos[u])
    return nodes, [sorted(s) for s in nbrs]


def _bfs(adj: list[list[int]], s: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[s] = 0
    queue = deque([s])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def transitivity(community) -> float:
    _, adj = _adjacency(community)
    sets = [set(a) for a in adj]
    triangles = 0
    triads = 0
    for v, nb in enumerate(adj):
        d = len(nb)
        triads += d * (d - 1)
        for i, a in enumerate(nb):
            for b in nb[i + 1 :]:
                if b in sets[a]:
                    triangles += 2
    # both sums are over ordered neighbour pairs, so this is 3 * triangles / connected triples
    return triangles / triads if triads else 0.0


def diameter(community) -> int:
    _, adj = _adjacency(community)
    best = 0
    for s in range(len(adj)):
        best = max(best, max(_bfs(adj, s), default=0))
    return best


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def degree_centrality(community) -> list[float]:
    """Degree over n - 1 per node, in sorted node order."""
    _, adj = _adjacency(community)
    n = len(adj)
    if n <= 1:
        return [0.0] * n
    return [len(a) / (n - 1) for a in adj]


def closeness(community) -> list[float]:
    """Closeness per node, scaled by the reachable fraction so disconnected parts stay comparable."""
    _, adj = _adjacency(community)
    n = len(adj)
    out = [0.0] * n
    for s in range(n):
        dist = [d for d in _bfs(adj, s) if d > 0]
        if dist:
            r = len(dist)
            out[s] = (r / (n - 1)) * (r / sum(dist))
    return out


def harmonic(community) -> list[float]:
    """Sum of inverse distances over n - 1 per node."""
    _, adj = _adjacency(community)
    n = len(adj)
    if n <= 1:
        return [0.0] * n
    return [sum(1.0 / d for d in _bfs(adj, s) if d > 0) / (n - 1) for s in range(n)]


def mean_degree_centrality(community) -> float:
    return _mean(degree_centrality(community))


def mean_closeness(community) -> float:
    return _mean(closeness(community))


def mean_harmonic(community) -> float:
    return _mean(harmonic(community))


def betweenness(community) -> list[float]:
    """Normalised betweenness per node (sorted node order), Brandes accumulation."""
    _, adj = _adjacency(community)
    n = len(adj)
    score = [0.0] * n
    for s in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        sigma[s] = 1
        dist = [-1] * n
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                score[w] += delta[w]
    if n <= 2:
        return [0.0] * n
    # every unordered pair was counted from both ends
    norm = 1.0 / ((n - 1) * (n - 2))
    return [x * norm for x in score]


def mean_betweenness(community) -> float:
    return _mean(betweenness(community))


def community_features(community) -> FeatureVector:
    g = _graph(community)
    n_tx = sum(1 for _, k in g.nodes(data="kind") if k == TX)
    return FeatureVector(
        n_addresses=g.number_of_nodes() - n_tx,
        n_transactions=n_tx,
        transitivity=transitivity(community),
        diameter=diameter(community),
        mean_degree_centrality=mean_degree_centrality(community),
        mean_closeness=mean_closeness(community),
        mean_betweenness=mean_betweenness(community),
        mean_harmonic=mean_harmonic(community),
    )


def feature_matrix(communities: Sequence, threads: int = 1) -> list[FeatureVector]:
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(community_features, communities))


@dataclass(frozen=True)
class Standardized:
    points: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def standardize(vectors: Sequence[FeatureVector] | np.ndarray) -> Standardized:
    """Per-dimension z-scores (population std); constant dimensions map to 0."""
    x = np.array([np.asarray(list(v), dtype=float) for v in vectors], dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("standardize needs at least one vector")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    z = np.zeros_like(x)
    # float noise on a constant column must not blow up into huge z-scores
    ok = sigma > 1e-12 * np.maximum(1.0, np.abs(mu))
    z[:, ok] = (x[:, ok] - mu[ok]) / sigma[ok]
    return Standardized(points=z, mean=mu, std=sigma)
