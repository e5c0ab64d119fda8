"""Small graph builders shared by several test modules."""

from __future__ import annotations

import random

import networkx as nx

from mixerscope.graph import ADDRESS, TX, ActivityGraph


def flow_graph(edges, tx_nodes) -> nx.DiGraph:
    """Directed graph from ``(u, v, amount)`` triples; ``tx_nodes`` get kind tx."""
    g = nx.DiGraph()
    for u, v, w in edges:
        for x in (u, v):
            if x not in g:
                g.add_node(x, kind=TX if x in tx_nodes else ADDRESS, label=x)
        g.add_edge(u, v, amount=w)
    return g


def random_activity_graph(rng: random.Random, n_tx: int, n_addr: int, max_amount: int = 10**6) -> ActivityGraph:
    """Random bipartite graph where every tx has at least one payer and one payee."""
    edges = []
    addrs = [f"a{i:03d}" for i in range(n_addr)]
    txs = [f"t{i:03d}" for i in range(n_tx)]
    for t in txs:
        k_in = rng.randint(1, min(3, n_addr - 1))
        k_out = rng.randint(1, min(3, n_addr - k_in))
        picks = rng.sample(addrs, k_in + k_out)
        edges += [(a, t, rng.randint(1, max_amount)) for a in picks[:k_in]]
        edges += [(t, a, rng.randint(1, max_amount)) for a in picks[k_in:]]
    return ActivityGraph(graph_id=0, g=flow_graph(edges, set(txs)))


def planted_motif(scale: int = 1) -> nx.DiGraph:
    """exchange -> tx1 (100 of 110) -> {m1: 95, m2: 15} -> tx2 -> {exchange: 90, change: 5}."""
    g = flow_graph(
        [
            ("ex_in", "tx1", 100 * scale),
            ("other", "tx1", 10 * scale),
            ("tx1", "m1", 95 * scale),
            ("tx1", "m2", 15 * scale),
            ("m1", "tx2", 95 * scale),
            ("m2", "tx2", 15 * scale),
            ("tx2", "ex_out", 90 * scale),
            ("tx2", "change", 5 * scale),
        ],
        {"tx1", "tx2"},
    )
    for v in ("ex_in", "ex_out"):
        g.nodes[v]["category"] = "Exchange"
    return g


def random_graph_edges(rng: random.Random, n: int, p: float) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
