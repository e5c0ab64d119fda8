"""Address-transaction graphs grown from seed addresses.

Nodes are keyed ``a:<address>`` and ``t:<txid>`` so that address strings and
transaction ids never collide. Every node carries ``kind`` (``address`` or
``tx``) and ``label`` (the raw identifier); address nodes also carry
``entity``, ``category`` and ``seed_id`` (0 when the address is not a seed).
Edges carry ``amount`` in satoshis.

Exploration counts transaction hops: one step consumes a transaction and adds
all of its input and output addresses. Forward steps follow the outputs of the
consumed transaction, backward steps follow its inputs. Seeds met along the
way restart with a full budget, and seeds whose explored regions share a node
end up in the same graph.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx

from .ingest import COINBASE, LabelDirectory, SeedSet, TxRecord

log = logging.getLogger(__name__)

ADDRESS = "address"
TX = "tx"


def address_node(address: str) -> str:
    return "a:" + address


def tx_node(txid: str) -> str:
    return "t:" + txid


def coinbase_node(txid: str) -> str:
    # one reserved input node per coinbase tx; a shared node would glue unrelated graphs together
    return f"a:{COINBASE}:{txid}"


class GraphTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class TxIndex:
    records: dict[str, TxRecord]
    forward: dict[str, tuple[str, ...]]
    backward: dict[str, tuple[str, ...]]

    def spending(self, address: str) -> tuple[str, ...]:
        """Transactions that spend from ``address``."""
        return self.forward.get(address, ())

    def paying(self, address: str) -> tuple[str, ...]:
        """Transactions that pay to ``address``."""
        return self.backward.get(address, ())

    def __len__(self) -> int:
        return len(self.records)


def index_transactions(records: Iterable[TxRecord]) -> TxIndex:
    by_id: dict[str, TxRecord] = {}
    fwd: dict[str, set[str]] = defaultdict(set)
    bwd: dict[str, set[str]] = defaultdict(set)
    for rec in records:
        by_id[rec.txid] = rec
        for addr, _ in rec.inputs:
            if addr != COINBASE:
                fwd[addr].add(rec.txid)
        for addr, _ in rec.outputs:
            bwd[addr].add(rec.txid)

    def order(txids: set[str]) -> tuple[str, ...]:
        return tuple(sorted(txids, key=lambda t: (by_id[t].height, t)))

    return TxIndex(
        records=by_id,
        forward={a: order(ts) for a, ts in fwd.items()},
        backward={a: order(ts) for a, ts in bwd.items()},
    )


@dataclass(frozen=True)
class BuildConfig:
    n: int = 2
    max_nodes: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"exploration steps n must be >= 1, got {self.n}")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ValueError("max_nodes must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class ActivityGraph:
    graph_id: int
    g: nx.DiGraph
    seed_ids: tuple[int, ...] = ()

    def addresses(self) -> list[str]:
        return [v for v, k in self.g.nodes(data="kind") if k == ADDRESS]

    def transactions(self) -> list[str]:
        return [v for v, k in self.g.nodes(data="kind") if k == TX]

    def __len__(self) -> int:
        return self.g.number_of_nodes()

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "seed_ids": list(self.seed_ids),
            "nodes": [[v, dict(sorted(d.items()))] for v, d in self.g.nodes(data=True)],
            "edges": [[u, v, d["amount"]] for u, v, d in self.g.edges(data=True)],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ActivityGraph":
        g = nx.DiGraph()
        for v, attrs in obj["nodes"]:
            g.add_node(v, **attrs)
        for u, v, amount in obj["edges"]:
            g.add_edge(u, v, amount=amount)
        return cls(graph_id=obj["graph_id"], g=g, seed_ids=tuple(obj["seed_ids"]))


@dataclass(frozen=True)
class _Region:
    txids: frozenset[str]
    touched: frozenset[str] = field(default_factory=frozenset)


def _tx_endpoints(rec: TxRecord) -> list[str]:
    nodes = [address_node(a) for a, _ in rec.outputs]
    nodes += [coinbase_node(rec.txid) if a == COINBASE else address_node(a) for a, _ in rec.inputs]
    return nodes


def explore(index: TxIndex, seed: str, n: int) -> set[str]:
    """Transaction ids within ``n`` hops forward or backward of ``seed``."""
    found: set[str] = set()
    for forward in (True, False):
        visited: set[str] = set()
        frontier = [seed]
        for _ in range(n):
            nxt: set[str] = set()
            for addr in frontier:
                for txid in index.spending(addr) if forward else index.paying(addr):
                    if txid in visited:
                        continue
                    visited.add(txid)
                    rec = index.records[txid]
                    side = rec.outputs if forward else rec.inputs
                    nxt.update(a for a, _ in side if a != COINBASE)
            frontier = sorted(nxt)
            if not frontier:
                break
        found |= visited
    return found


def _region(index: TxIndex, seed: str, cfg: BuildConfig) -> _Region:
    txids = explore(index, seed, cfg.n)
    touched = {address_node(seed)}
    for txid in txids:
        touched.add(tx_node(txid))
        touched.update(_tx_endpoints(index.records[txid]))
    if cfg.max_nodes is not None and len(touched) > cfg.max_nodes:
        raise GraphTooLarge(
            f"exploration from seed {seed!r} reached {len(touched)} nodes "
            f"(max_nodes={cfg.max_nodes}); raise the cap or reduce n"
        )
    return _Region(frozenset(txids), frozenset(touched))


class _UnionFind:
    def __init__(self, items: Iterable[int]):
        self.parent = {i: i for i in items}

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root so group identity is order-independent
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def _assemble(
    index: TxIndex,
    txids: set[str],
    seed_addresses: dict[str, int],
    labels: LabelDirectory | None,
) -> nx.DiGraph:
    edge_amounts: dict[tuple[str, str], int] = defaultdict(int)
    tx_attrs: dict[str, dict] = {}
    for txid in sorted(txids):
        rec = index.records[txid]
        t = tx_node(txid)
        ins: dict[str, int] = defaultdict(int)
        outs: dict[str, int] = defaultdict(int)
        for addr, amount in rec.inputs:
            ins[coinbase_node(txid) if addr == COINBASE else address_node(addr)] += amount
        for addr, amount in rec.outputs:
            outs[address_node(addr)] += amount
        ins = {a: v for a, v in ins.items() if v > 0}
        outs = {a: v for a, v in outs.items() if v > 0}
        if not ins or not outs:
            log.warning("skipping tx %s: no positive-amount %s", txid, "inputs" if not ins else "outputs")
            continue
        for a, v in ins.items():
            edge_amounts[(a, t)] += v
        for a, v in outs.items():
            edge_amounts[(t, a)] += v
        tx_attrs[t] = {
            "kind": TX,
            "label": txid,
            "height": rec.height,
            "timestamp": rec.timestamp,
            "total_in": sum(ins.values()),
            "total_out": sum(outs.values()),
        }

    nodes: set[str] = set(tx_attrs)
    for u, v in edge_amounts:
        nodes.add(u)
        nodes.add(v)
    nodes.update(address_node(a) for a in seed_addresses)

    g = nx.DiGraph()
    for key in sorted(nodes):
        if key in tx_attrs:
            g.add_node(key, **tx_attrs[key])
            continue
        raw = key[2:]
        if raw.startswith(COINBASE + ":"):
            raw = COINBASE
        entity, category = "", ""
        hit = labels.lookup(raw) if labels is not None and raw != COINBASE else None
        if hit is not None:
            entity, category = hit[0], hit[1].value
        g.add_node(
            key,
            kind=ADDRESS,
            label=raw,
            entity=entity,
            category=category,
            seed_id=seed_addresses.get(raw, 0),
        )
    for (u, v) in sorted(edge_amounts):
        g.add_edge(u, v, amount=edge_amounts[(u, v)])
    return g


def build_graphs(
    index: TxIndex,
    seeds: SeedSet,
    cfg: BuildConfig | None = None,
    labels: LabelDirectory | None = None,
) -> list[ActivityGraph]:
    """Grow one graph per group of connected seeds.

    Output is ordered by the smallest seed id in each graph, and every seed
    belongs to exactly one graph. Results do not depend on ``cfg.threads``.
    """
    cfg = cfg or BuildConfig()
    items = seeds.items()
    if not items:
        return []
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        regions = list(pool.map(lambda item: _region(index, item[1], cfg), items))

    uf = _UnionFind(sid for sid, _ in items)
    owner: dict[str, int] = {}
    for (sid, _), region in zip(items, regions):
        for node in sorted(region.touched):
            if node in owner:
                uf.union(owner[node], sid)
            else:
                owner[node] = sid

    groups: dict[int, list[int]] = defaultdict(list)
    for sid, _ in items:
        groups[uf.find(sid)].append(sid)

    address_of = dict(items)
    graphs: list[ActivityGraph] = []
    for gid, root in enumerate(sorted(groups)):
        members = sorted(groups[root])
        txids: set[str] = set()
        for sid in members:
            txids |= regions[sid - 1].txids
        seed_map = {address_of[sid]: sid for sid in members}
        g = _assemble(index, txids, seed_map, labels)
        graphs.append(ActivityGraph(graph_id=gid, g=g, seed_ids=tuple(members)))
    return graphs


@dataclass(frozen=True)
class MergeReport:
    per_graph: dict[int, int]
    histogram: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.per_graph.values())


def merge_report(graphs: Sequence[ActivityGraph]) -> MergeReport:
    """Seeds per graph, plus how many graphs hold each seed count."""
    per_graph = {ag.graph_id: len(ag.seed_ids) for ag in graphs}
    histogram = dict(sorted(Counter(per_graph.values()).items()))
    return MergeReport(per_graph=per_graph, histogram=histogram)


def dump_graphs(graphs: Sequence[ActivityGraph]) -> str:
    return json.dumps([ag.to_dict() for ag in graphs], separators=(",", ":")) + "\n"


def load_graphs(text: str) -> list[ActivityGraph]:
    return [ActivityGraph.from_dict(obj) for obj in json.loads(text)]
