"""Recurring topologies inside clusters and the role of labelled entities.

Structural signatures use the directed community graph with node kind as the
only colour; amounts are ignored. Small communities get an exact canonical
form (colour refinement, then individualisation-refinement search with
automorphism pruning); larger ones fall back to a refinement-only hash that
is isomorphism-invariant but may merge non-isomorphic graphs.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

from .graph import ADDRESS, TX
from .ingest import Category, LabelDirectory

EXACT_MAX_NODES = 30
MAX_LEAVES = 200_000


@dataclass(frozen=True, order=True)
class Signature:
    certificate: bytes
    exact: bool = True

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.certificate).hexdigest()[:16]


def _graph(community):
    return getattr(community, "g", community)


class _Structure:
    def __init__(self, g):
        self.nodes = sorted(g.nodes())
        pos = {v: i for i, v in enumerate(self.nodes)}
        self.n = len(self.nodes)
        self.kind = [1 if g.nodes[v].get("kind") == TX else 0 for v in self.nodes]
        self.out = [sorted(pos[w] for w in g.successors(v) if w != v) for v in self.nodes]
        self.inn = [sorted(pos[u] for u in g.predecessors(v) if u != v) for v in self.nodes]
        self.edges = [(pos[u], pos[v]) for u, v in g.edges() if u != v]

    def refine(self, colors: list[int], trace: list | None = None) -> list[int]:
        """Stable colouring; new ids are ranks of (old colour, out colours, in colours)."""
        k = len(set(colors))
        while True:
            sigs = [
                (colors[v], tuple(sorted(colors[w] for w in self.out[v])), tuple(sorted(colors[u] for u in self.inn[v])))
                for v in range(self.n)
            ]
            ranks = {s: i for i, s in enumerate(sorted(set(sigs)))}
            if trace is not None:
                counts: dict = defaultdict(int)
                for s in sigs:
                    counts[s] += 1
                trace.append(tuple(sorted(counts.items())))
            colors = [ranks[s] for s in sigs]
            if len(ranks) == k:
                return colors
            k = len(ranks)


class _CanonicalSearch:
    def __init__(self, st: _Structure):
        self.st = st
        self.first: tuple | None = None
        self.best: tuple | None = None
        self.generators: list[list[int]] = []
        self.leaves = 0

    def run(self) -> tuple | None:
        colors = self.st.refine(list(self.st.kind))
        self._search(colors, [])
        if self.leaves > MAX_LEAVES:
            return None
        return self.best[0]

    def _cert(self, order: list[int]) -> tuple:
        pos = {v: i for i, v in enumerate(order)}
        return (
            self.st.n,
            tuple(self.st.kind[v] for v in order),
            tuple(sorted((pos[u], pos[v]) for u, v in self.st.edges)),
        )

    def _leaf(self, colors: list[int], path: list[int]) -> int | None:
        self.leaves += 1
        order = sorted(range(self.st.n), key=colors.__getitem__)
        cert = self._cert(order)
        leaf = (cert, order, list(path))
        if self.first is None:
            self.first = self.best = leaf
            return None
        for ref in (self.first, self.best):
            if cert == ref[0]:
                gamma = [0] * self.st.n
                for a, b in zip(ref[1], order):
                    gamma[a] = b
                self.generators.append(gamma)
                return _divergence(path, ref[2])
        if cert < self.best[0]:
            self.best = leaf
        return None

    def _orbit_mates(self, path: list[int], explored: list[int]) -> set[int]:
        fixed = [g for g in self.generators if all(g[v] == v for v in path)]
        if not fixed:
            return set(explored)
        parent = list(range(self.st.n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in fixed:
            for v in range(self.st.n):
                a, b = find(v), find(g[v])
                if a != b:
                    parent[max(a, b)] = min(a, b)
        roots = {find(u) for u in explored}
        return {v for v in range(self.st.n) if find(v) in roots}

    def _search(self, colors: list[int], path: list[int]) -> int | None:
        if self.leaves > MAX_LEAVES:
            return 0
        sizes: dict[int, int] = defaultdict(int)
        for c in colors:
            sizes[c] += 1
        open_cells = [c for c, s in sizes.items() if s > 1]
        if not open_cells:
            return self._leaf(colors, path)
        cell = min(open_cells)
        members = [v for v in range(self.st.n) if colors[v] == cell]
        explored: list[int] = []
        for v in members:
            if explored and v in self._orbit_mates(path, explored):
                continue
            explored.append(v)
            # v keeps the cell's colour, its cell-mates and every later cell shift up by one
            child = [c + 1 if c > cell or (c == cell and u != v) else c for u, c in enumerate(colors)]
            jump = self._search(self.st.refine(child), path + [v])
            if jump is not None and jump < len(path):
                return jump
        return None


def _divergence(a: list[int], b: list[int]) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return min(len(a), len(b))


def canonical_signature(community, exact_max_nodes: int = EXACT_MAX_NODES) -> Signature:
    st = _Structure(_graph(community))
    if st.n <= exact_max_nodes:
        cert = _CanonicalSearch(st).run()
        if cert is not None:
            return Signature(b"X" + repr(cert).encode(), exact=True)
    trace: list = []
    st.refine(list(st.kind), trace)
    head = (st.n, len(st.edges), sum(st.kind))
    return Signature(b"R" + repr((head, tuple(trace))).encode(), exact=False)


@dataclass(frozen=True)
class Predominant:
    signature: Signature
    count: int
    exemplar: object
    total: int


def predominant_topology(communities: Sequence, signatures: Sequence[Signature] | None = None) -> Predominant:
    """Largest signature class; ties go to the smallest certificate.

    The exemplar is the member with the smallest (graph id, community id).
    """
    if not communities:
        raise ValueError("empty cluster")
    if signatures is None:
        signatures = [canonical_signature(c) for c in communities]
    groups: dict[Signature, list] = defaultdict(list)
    for c, s in zip(communities, signatures):
        groups[s].append(c)
    sig = min(groups, key=lambda s: (-len(groups[s]), s.certificate))
    members = groups[sig]
    exemplar = min(members, key=lambda c: getattr(c, "key", (0, 0)))
    return Predominant(sig, len(members), exemplar, len(communities))


@dataclass(frozen=True)
class PassThroughReport:
    tx1: str
    tx2: str
    bridge: tuple[str, ...]
    dominant_input: tuple[str, int, float]
    dominant_output: tuple[str, int, float]
    input_is_exchange: bool
    output_is_exchange: bool

    def to_dict(self) -> dict:
        return {
            "tx1": self.tx1,
            "tx2": self.tx2,
            "bridge": list(self.bridge),
            "dominant_input": {"address": self.dominant_input[0], "amount": self.dominant_input[1], "share": self.dominant_input[2]},
            "dominant_output": {"address": self.dominant_output[0], "amount": self.dominant_output[1], "share": self.dominant_output[2]},
            "input_is_exchange": self.input_is_exchange,
            "output_is_exchange": self.output_is_exchange,
        }


def _category(g, node: Hashable, labels: LabelDirectory | None) -> str:
    if labels is not None:
        hit = labels.lookup(g.nodes[node].get("label", node))
        return hit[1].value if hit else ""
    return g.nodes[node].get("category", "")


def _amount(data: Mapping) -> int:
    return data.get("amount", data.get("weight", 1))


def detect_passthrough(community, theta: float = 0.8, labels: LabelDirectory | None = None) -> PassThroughReport | None:
    """Match two transactions bridged by exactly two addresses with an unsplit dominant flow.

    Shares are taken against the transaction totals recorded on the tx nodes
    (``total_in``/``total_out``) when present, else against the community's
    own edges.
    """
    if not 0.5 < theta <= 1:
        raise ValueError("theta must lie in (0.5, 1]")
    g = _graph(community)
    txs = sorted(v for v, k in g.nodes(data="kind") if k == TX)
    if len(txs) != 2:
        return None

    def bridges(src, dst) -> list:
        return sorted(a for a in g.successors(src) if g.has_edge(a, dst))

    fwd, bwd = bridges(txs[0], txs[1]), bridges(txs[1], txs[0])
    if len(fwd) == 2 and not bwd:
        t1, t2, bridge = txs[0], txs[1], fwd
    elif len(bwd) == 2 and not fwd:
        t1, t2, bridge = txs[1], txs[0], bwd
    else:
        return None

    ins = sorted(((_amount(g.edges[a, t1]), a) for a in g.predecessors(t1)), key=lambda p: (-p[0], p[1]))
    outs = sorted(((_amount(g.edges[t2, a]), a) for a in g.successors(t2)), key=lambda p: (-p[0], p[1]))
    if not ins or not outs:
        return None
    total_in = g.nodes[t1].get("total_in") or sum(v for v, _ in ins)
    total_out = g.nodes[t2].get("total_out") or sum(v for v, _ in outs)
    (in_amt, in_addr), (out_amt, out_addr) = ins[0], outs[0]
    in_share, out_share = in_amt / total_in, out_amt / total_out
    if in_share < theta or out_share < theta:
        return None
    label = lambda v: g.nodes[v].get("label", v)  # noqa: E731
    exchange = Category.EXCHANGE.value
    return PassThroughReport(
        tx1=label(t1),
        tx2=label(t2),
        bridge=tuple(label(a) for a in bridge),
        dominant_input=(label(in_addr), in_amt, in_share),
        dominant_output=(label(out_addr), out_amt, out_share),
        input_is_exchange=_category(g, in_addr, labels) == exchange,
        output_is_exchange=_category(g, out_addr, labels) == exchange,
    )


def entity_profile(
    communities: Sequence,
    cluster_labels: Sequence[int],
    labels: LabelDirectory | None = None,
) -> dict[int, dict[str, int]]:
    """Distinct labelled addresses per category for every cluster id (including -1)."""
    if len(communities) != len(cluster_labels):
        raise ValueError("one cluster label per community required")
    seen: dict[int, dict[str, set[str]]] = {}
    for community, cid in zip(communities, cluster_labels):
        bucket = seen.setdefault(int(cid), defaultdict(set))
        g = _graph(community)
        for v, data in g.nodes(data=True):
            if data.get("kind", ADDRESS) != ADDRESS:
                continue
            cat = _category(g, v, labels)
            if cat:
                bucket[cat].add(data.get("label", v))
    cats = [c.value for c in Category]
    return {cid: {c: len(seen[cid].get(c, ())) for c in cats} for cid in sorted(seen)}
