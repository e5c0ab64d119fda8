"""Weighted Louvain community detection with address-only boundaries.

Modularity is evaluated on the undirected weighted view of a graph: the two
directions between a pair of nodes are summed into one undirected weight.
Direction is only used afterwards, when transaction nodes sitting on a
community boundary are repaired.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import networkx as nx

from .graph import TX, ActivityGraph

log = logging.getLogger(__name__)

# gains are compared on weights normalised to unit total, so an absolute tolerance is safe
_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class LouvainConfig:
    resolution: float = 1.0
    threshold: float = 1e-07

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")


@dataclass
class Partition:
    assignment: dict[Hashable, int]
    modularity: float

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def members(self) -> list[list[Hashable]]:
        out: list[list[Hashable]] = [[] for _ in range(self.n_communities)]
        for node in sorted(self.assignment):
            out[self.assignment[node]].append(node)
        return out


@dataclass
class Community:
    graph_id: int
    community_id: int
    g: nx.DiGraph

    @property
    def key(self) -> tuple[int, int]:
        return (self.graph_id, self.community_id)

    def n_addresses(self) -> int:
        return sum(1 for _, k in self.g.nodes(data="kind") if k != TX)

    def n_transactions(self) -> int:
        return sum(1 for _, k in self.g.nodes(data="kind") if k == TX)

    def __len__(self) -> int:
        return self.g.number_of_nodes()


def _nx(graph) -> nx.Graph:
    return graph.g if isinstance(graph, ActivityGraph) else graph


def _edge_weight(data: Mapping) -> float:
    if "amount" in data:
        return data["amount"]
    return data.get("weight", 1)


def undirected_view(graph) -> tuple[list[Hashable], dict[Hashable, dict[Hashable, float]]]:
    """Sorted node list and symmetric weight map; opposite directions are summed."""
    g = _nx(graph)
    nodes = sorted(g.nodes())
    adj: dict[Hashable, dict[Hashable, float]] = {v: {} for v in nodes}
    for u, v, data in g.edges(data=True):
        w = _edge_weight(data)
        adj[u][v] = adj[u].get(v, 0) + w
        if u != v:
            adj[v][u] = adj[v].get(u, 0) + w
    return nodes, adj


def modularity(graph, partition: Partition | Mapping[Hashable, int], resolution: float = 1.0) -> float:
    """Newman modularity of ``partition`` on the undirected weighted view."""
    assignment = partition.assignment if isinstance(partition, Partition) else partition
    nodes, adj = undirected_view(graph)
    missing = [v for v in nodes if v not in assignment]
    if missing:
        raise ValueError(f"partition does not cover node {missing[0]!r}")
    m = 0.0
    internal: dict[int, float] = defaultdict(float)
    degree: dict[int, float] = defaultdict(float)
    for u in nodes:
        cu = assignment[u]
        for v, w in adj[u].items():
            if u == v:
                # self-loop adds 2w to the degree, counted once as an edge
                m += w
                internal[cu] += w
                degree[cu] += 2 * w
            else:
                m += w / 2
                degree[cu] += w
                if assignment[v] == cu:
                    internal[cu] += w / 2
    if m <= 0:
        raise ValueError("no edges")
    return sum(internal[c] / m - resolution * (degree[c] / (2 * m)) ** 2 for c in degree)


def _dense(labels: Sequence[int]) -> list[int]:
    remap: dict[int, int] = {}
    return [remap.setdefault(c, len(remap)) for c in labels]


class _Level:
    """Weighted graph over integer nodes, with self-loops held apart."""

    def __init__(self, n: int, adj: list[dict[int, float]], loops: list[float]):
        self.n = n
        self.adj = adj
        self.loops = loops
        self.degree = [sum(adj[i].values()) + 2 * loops[i] for i in range(n)]
        self.m2 = sum(self.degree)

    def one_pass(self, resolution: float) -> tuple[list[int], bool]:
        """Local moves in ascending node order until no move strictly improves Q."""
        comm = list(range(self.n))
        tot = list(self.degree)
        moved_any = False
        improved = True
        while improved:
            improved = False
            for i in range(self.n):
                ci = comm[i]
                ki = self.degree[i]
                links: dict[int, float] = defaultdict(float)
                for j, w in self.adj[i].items():
                    links[comm[j]] += w
                tot[ci] -= ki
                scale = resolution * ki / self.m2

                def gain(c: int) -> float:
                    return links.get(c, 0.0) - tot[c] * scale

                stay = gain(ci)
                best = max((gain(c) for c in links), default=stay)
                target = ci
                if best > stay + _GAIN_TOL:
                    target = min(c for c in links if gain(c) >= best - _GAIN_TOL)
                tot[target] += ki
                if target != ci:
                    comm[i] = target
                    improved = moved_any = True
        return _dense(comm), moved_any

    def aggregate(self, comm: list[int]) -> "_Level":
        k = max(comm) + 1
        adj: list[dict[int, float]] = [defaultdict(float) for _ in range(k)]
        loops = [0.0] * k
        for i in range(self.n):
            ci = comm[i]
            loops[ci] += self.loops[i]
            for j, w in self.adj[i].items():
                cj = comm[j]
                if ci == cj:
                    # each internal edge is visited from both ends
                    loops[ci] += w / 2
                else:
                    adj[ci][cj] += w
        return _Level(k, [dict(a) for a in adj], loops)


def louvain_partition(graph, cfg: LouvainConfig | None = None) -> Partition:
    """Deterministic two-phase Louvain.

    Nodes are visited in sorted order, ties between equally good target
    communities go to the lowest community id, and a level whose modularity
    gain is at most ``cfg.threshold`` is discarded and ends the run.
    """
    cfg = cfg or LouvainConfig()
    nodes, adj = undirected_view(graph)
    if not nodes:
        raise ValueError("no edges")
    pos = {v: i for i, v in enumerate(nodes)}
    total = sum(sum(nb.values()) for nb in adj.values())
    if total <= 0:
        raise ValueError("no edges")
    level_adj: list[dict[int, float]] = []
    loops = [0.0] * len(nodes)
    for v in nodes:
        row: dict[int, float] = {}
        for u, w in adj[v].items():
            if u == v:
                loops[pos[v]] += w / total
            else:
                row[pos[u]] = w / total
        level_adj.append(row)
    level = _Level(len(nodes), level_adj, loops)

    membership = list(range(len(nodes)))
    q = modularity(graph, dict(zip(nodes, membership)), cfg.resolution)
    while True:
        comm, moved = level.one_pass(cfg.resolution)
        if not moved:
            break
        candidate = _dense([comm[c] for c in membership])
        q_new = modularity(graph, dict(zip(nodes, candidate)), cfg.resolution)
        if q_new - q <= cfg.threshold:
            break
        membership, q = candidate, q_new
        level = level.aggregate(comm)
    return Partition(dict(zip(nodes, membership)), q)


def _boundary_violations(g: nx.DiGraph, assignment: Mapping[Hashable, int]) -> list[Hashable]:
    bad = []
    for v, kind in g.nodes(data="kind"):
        if kind != TX:
            continue
        c = assignment[v]
        has_in = any(assignment[u] == c for u in g.predecessors(v))
        has_out = any(assignment[w] == c for w in g.successors(v))
        if not (has_in and has_out):
            bad.append(v)
    return sorted(bad)


def boundary_violations(graph, partition: Partition | Mapping[Hashable, int]) -> list[Hashable]:
    """Transaction nodes lacking an internal in-edge or out-edge."""
    assignment = partition.assignment if isinstance(partition, Partition) else partition
    return _boundary_violations(_nx(graph), assignment)


def enforce_address_boundaries(graph, partition: Partition, resolution: float = 1.0) -> Partition:
    """Repair ``partition`` until only address nodes sit on community boundaries.

    A violating transaction node moves to the neighbouring community that
    holds both a payer and a payee of it and the largest incident weight
    (ties to the lowest id). When no such community exists its payer side and
    payee side communities are fused around it. Moving a transaction never
    changes the internal degree of another transaction (the graph is
    bipartite) and fusing only adds edges, so each transaction is repaired at
    most once.
    """
    g = _nx(graph)
    assignment = dict(partition.assignment)
    changed = False
    n_tx = sum(1 for _, k in g.nodes(data="kind") if k == TX)
    limit = n_tx * max(1, len(set(assignment.values())))
    for _ in range(limit + 1):
        bad = _boundary_violations(g, assignment)
        if not bad:
            break
        changed = True
        t = bad[0]
        in_w: dict[int, float] = defaultdict(float)
        out_w: dict[int, float] = defaultdict(float)
        for u in g.predecessors(t):
            in_w[assignment[u]] += _edge_weight(g.edges[u, t])
        for w in g.successors(t):
            out_w[assignment[w]] += _edge_weight(g.edges[t, w])
        if not in_w or not out_w:
            raise RuntimeError(f"transaction node {t!r} has no payer or no payee in the graph")
        both = sorted(set(in_w) & set(out_w))
        if both:
            target = min(both, key=lambda c: (-(in_w[c] + out_w[c]), c))
            assignment[t] = target
            continue
        own = assignment[t]
        c_in = own if own in in_w else min(in_w, key=lambda c: (-in_w[c], c))
        c_out = own if own in out_w else min(out_w, key=lambda c: (-out_w[c], c))
        keep, drop = min(c_in, c_out), max(c_in, c_out)
        for v, c in assignment.items():
            if c == drop:
                assignment[v] = keep
        assignment[t] = keep
    else:
        raise RuntimeError("boundary repair did not converge")
    if not changed:
        return partition
    nodes = sorted(assignment)
    dense = _dense([assignment[v] for v in nodes])
    repaired = dict(zip(nodes, dense))
    q = modularity(graph, repaired, resolution) if g.number_of_edges() else 0.0
    return Partition(repaired, q)


def induced_community(ag: ActivityGraph, community_id: int, members: Sequence[Hashable]) -> Community:
    sub = nx.DiGraph()
    keep = set(members)
    for v in sorted(keep):
        sub.add_node(v, **ag.g.nodes[v])
    for u, v, data in ag.g.edges(data=True):
        if u in keep and v in keep:
            sub.add_edge(u, v, **data)
    return Community(graph_id=ag.graph_id, community_id=community_id, g=sub)


def detect(ag: ActivityGraph, cfg: LouvainConfig | None = None) -> Partition:
    """Louvain followed by boundary repair; edgeless graphs become singletons."""
    cfg = cfg or LouvainConfig()
    if ag.g.number_of_edges() == 0:
        nodes = sorted(ag.g.nodes())
        return Partition({v: i for i, v in enumerate(nodes)}, 0.0)
    part = louvain_partition(ag, cfg)
    return enforce_address_boundaries(ag, part, cfg.resolution)


def extract_communities(
    graphs: Sequence[ActivityGraph],
    cfg: LouvainConfig | None = None,
    threads: int = 1,
) -> list[Community]:
    cfg = cfg or LouvainConfig()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        partitions = list(pool.map(lambda ag: detect(ag, cfg), graphs))
    out: list[Community] = []
    for ag, part in zip(graphs, partitions):
        for cid, members in enumerate(part.members()):
            out.append(induced_community(ag, cid, members))
    return out


def load_communities(graphs: Sequence[ActivityGraph], rows: Sequence[Mapping]) -> list[Community]:
    by_id = {ag.graph_id: ag for ag in graphs}
    return [induced_community(by_id[r["graph_id"]], r["community_id"], r["nodes"]) for r in rows]
