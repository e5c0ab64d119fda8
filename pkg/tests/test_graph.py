import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixerscope.graph import (
    ADDRESS,
    TX,
    BuildConfig,
    GraphTooLarge,
    address_node,
    build_graphs,
    dump_graphs,
    index_transactions,
    load_graphs,
    merge_report,
    tx_node,
)
from mixerscope.ingest import COINBASE, Category, LabelDirectory, SeedSet, TxRecord
from oracles import hop_neighbourhood


def tx(txid, ins, outs, height=0):
    return TxRecord(txid, tuple(ins), tuple(outs), 0, height)


def chain_records():
    # s1 -> t1 -> a -> t2 -> b -> t3 -> c -> t4 -> d -> t5 -> e, with side outputs
    hops = ["s1", "a", "b", "c", "d", "e"]
    return [
        tx(f"t{i + 1}", [(hops[i], 100)], [(hops[i + 1], 90), (f"side{i + 1}", 5)], height=i + 1)
        for i in range(5)
    ]


class TestIndex:
    def test_empty(self):
        idx = index_transactions([])
        assert len(idx) == 0 and idx.spending("a") == ()

    def test_single(self):
        idx = index_transactions([tx("t1", [("a1", 5)], [("a2", 4)])])
        assert idx.spending("a1") == ("t1",)
        assert idx.paying("a2") == ("t1",)

    def test_sorted_by_height_then_txid(self):
        idx = index_transactions(
            [tx("tb", [("a1", 1)], [("x", 1)], 5), tx("tc", [("a1", 1)], [("y", 1)], 2), tx("ta", [("a1", 1)], [("z", 1)], 5)]
        )
        assert idx.spending("a1") == ("tc", "ta", "tb")

    def test_coinbase_not_indexed_as_spender(self):
        idx = index_transactions([tx("cb", [(COINBASE, 5)], [("m", 5)])])
        assert idx.spending(COINBASE) == ()


class TestBuild:
    def test_isolated_seed(self):
        (ag,) = build_graphs(index_transactions([]), SeedSet(("s1",)))
        assert list(ag.g.nodes()) == [address_node("s1")]
        assert ag.g.nodes[address_node("s1")]["seed_id"] == 1
        assert ag.seed_ids == (1,)

    def test_reseed_merges_with_full_budget(self):
        recs = [
            tx("t1", [("s1", 10)], [("s2", 9)], 1),
            tx("t2", [("s2", 9)], [("x", 8)], 2),
            tx("t3", [("x", 8)], [("y", 7)], 3),
        ]
        graphs = build_graphs(index_transactions(recs), SeedSet(("s1", "s2")), BuildConfig(n=1))
        assert len(graphs) == 1
        (ag,) = graphs
        assert ag.seed_ids == (1, 2)
        # s2's own forward step reaches t2 and x, which s1 alone could not at n=1
        assert tx_node("t2") in ag.g and address_node("x") in ag.g
        assert tx_node("t3") not in ag.g
        assert merge_report(graphs).histogram == {2: 1}

    def test_chain_matches_bfs_oracle(self):
        recs = chain_records()
        (ag,) = build_graphs(index_transactions(recs), SeedSet(("s1",)), BuildConfig(n=2))
        expected_tx = hop_neighbourhood(recs, "s1", 2)
        assert expected_tx == {"t1", "t2"}
        assert set(ag.transactions()) == {tx_node(t) for t in expected_tx}
        assert set(ag.addresses()) == {address_node(a) for a in ("s1", "a", "b", "side1", "side2")}

    def test_disjoint_seeds_histogram(self):
        recs = [tx(f"t{i}", [(f"s{i}", 3)], [(f"o{i}", 2)]) for i in range(3)]
        graphs = build_graphs(index_transactions(recs), SeedSet(("s0", "s1", "s2")))
        assert merge_report(graphs).histogram == {1: 3}
        assert [ag.seed_ids for ag in graphs] == [(1,), (2,), (3,)]

    def test_output_ordered_by_smallest_seed(self):
        recs = [tx("t1", [("b", 3)], [("c", 2)]), tx("t2", [("a", 3)], [("z", 2)])]
        graphs = build_graphs(index_transactions(recs), SeedSet(("z", "c", "b", "a")))
        assert [ag.seed_ids for ag in graphs] == [(1, 4), (2, 3)]
        assert [ag.graph_id for ag in graphs] == [0, 1]

    def test_collapsed_edges_and_labels(self):
        labels = LabelDirectory()
        labels.add("ex", "Kraken", Category.EXCHANGE)
        recs = [tx("t1", [("s", 3), ("s", 4)], [("ex", 6), ("ex", 0)])]
        (ag,) = build_graphs(index_transactions(recs), SeedSet(("s",)), labels=labels)
        g = ag.g
        assert g.edges[address_node("s"), tx_node("t1")]["amount"] == 7
        assert g.edges[tx_node("t1"), address_node("ex")]["amount"] == 6
        assert g.nodes[address_node("ex")]["entity"] == "Kraken"
        assert g.nodes[address_node("ex")]["category"] == "Exchange"
        assert g.nodes[tx_node("t1")]["total_in"] == 7

    def test_zero_amount_edges_dropped(self):
        recs = [tx("t1", [("s", 3)], [("a", 3), ("dust", 0)])]
        (ag,) = build_graphs(index_transactions(recs), SeedSet(("s",)))
        assert address_node("dust") not in ag.g
        assert all(d["amount"] > 0 for _, _, d in ag.g.edges(data=True))

    def test_coinbase_is_per_transaction(self):
        recs = [
            tx("cb1", [(COINBASE, 5)], [("m", 5)], 1),
            tx("cb2", [(COINBASE, 5)], [("m", 5)], 2),
        ]
        (ag,) = build_graphs(index_transactions(recs), SeedSet(("m",)))
        coinbase = [v for v in ag.g if ag.g.nodes[v]["label"] == COINBASE]
        assert len(coinbase) == 2

    def test_max_nodes_cap(self):
        with pytest.raises(GraphTooLarge, match="max_nodes"):
            build_graphs(index_transactions(chain_records()), SeedSet(("s1",)), BuildConfig(n=2, max_nodes=3))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BuildConfig(n=0)

    def test_dump_load_round_trip(self):
        graphs = build_graphs(index_transactions(chain_records()), SeedSet(("s1", "d")))
        again = load_graphs(dump_graphs(graphs))
        assert dump_graphs(again) == dump_graphs(graphs)


@st.composite
def tx_streams(draw):
    n_addr = draw(st.integers(3, 12))
    addrs = [f"a{i}" for i in range(n_addr)]
    recs = []
    for i in range(draw(st.integers(0, 15))):
        ins = draw(st.lists(st.sampled_from(addrs), min_size=1, max_size=3))
        outs = draw(st.lists(st.sampled_from(addrs), min_size=1, max_size=3))
        recs.append(tx(f"t{i}", [(a, draw(st.integers(1, 100))) for a in ins], [(a, draw(st.integers(1, 100))) for a in outs], i))
    seeds = draw(st.lists(st.sampled_from(addrs), min_size=1, max_size=4, unique=True))
    n = draw(st.integers(1, 3))
    return recs, seeds, n


@settings(max_examples=80, deadline=None)
@given(tx_streams())
def test_graph_invariants(stream):
    recs, seeds, n = stream
    seedset = SeedSet(tuple(seeds))
    graphs = build_graphs(index_transactions(recs), seedset, BuildConfig(n=n))

    # seed partition
    ids = sorted(i for ag in graphs for i in ag.seed_ids)
    assert ids == list(range(1, len(seeds) + 1))
    assert merge_report(graphs).total == len(seeds)

    for ag in graphs:
        g = ag.g
        for u, v, d in g.edges(data=True):
            assert {g.nodes[u]["kind"], g.nodes[v]["kind"]} == {ADDRESS, TX}
            assert d["amount"] > 0
        for t in ag.transactions():
            assert g.in_degree(t) >= 1 and g.out_degree(t) >= 1
        # path bound: every tx lies within n hops of a seed of this graph
        reach = set()
        for sid in ag.seed_ids:
            reach |= hop_neighbourhood(recs, seeds[sid - 1], n)
        assert {g.nodes[t]["label"] for t in ag.transactions()} <= reach

    # graphs never share a node
    seen = set()
    for ag in graphs:
        assert not (seen & set(ag.g.nodes()))
        seen |= set(ag.g.nodes())


def test_thread_count_does_not_change_output():
    rng = random.Random(7)
    addrs = [f"a{i}" for i in range(60)]
    recs = [
        tx(f"t{i}", [(a, rng.randint(1, 9)) for a in rng.sample(addrs, 2)], [(a, rng.randint(1, 9)) for a in rng.sample(addrs, 2)], i)
        for i in range(120)
    ]
    seeds = SeedSet(tuple(rng.sample(addrs, 10)))
    idx = index_transactions(recs)
    one = dump_graphs(build_graphs(idx, seeds, BuildConfig(n=2, threads=1)))
    eight = dump_graphs(build_graphs(idx, seeds, BuildConfig(n=2, threads=8)))
    assert one == eight
