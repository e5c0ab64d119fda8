import random
from collections import Counter

import networkx as nx
import pytest

from helpers import flow_graph, planted_motif, random_activity_graph
from mixerscope.community import (
    LouvainConfig,
    Partition,
    boundary_violations,
    detect,
    enforce_address_boundaries,
    extract_communities,
    louvain_partition,
    modularity,
)
from mixerscope.graph import ActivityGraph, build_graphs, index_transactions
from mixerscope.synth import SynthSpec, generate
from oracles import best_modularity, pairwise_modularity, weight_matrix


def undirected(edges, weight=1):
    g = nx.DiGraph()
    for u, v in edges:
        g.add_edge(u, v, amount=weight)
    return g


def bridged_k33(weight=1):
    left = [(f"a{i}", f"b{j}") for i in range(3) for j in range(3)]
    right = [(f"c{i}", f"d{j}") for i in range(3) for j in range(3)]
    return undirected(left + right + [("b0", "c0")], weight)


class TestModularity:
    def test_single_community(self):
        g = undirected([("x", "y"), ("y", "z")])
        everyone = {v: 0 for v in g}
        assert modularity(g, everyone) == pytest.approx(0.0, abs=1e-12)
        assert modularity(g, everyone, resolution=0.5) == pytest.approx(0.5)

    def test_two_disjoint_edges(self):
        g = undirected([("a", "b"), ("c", "d")])
        part = {"a": 0, "b": 0, "c": 1, "d": 1}
        assert modularity(g, part) == pytest.approx(0.5, abs=1e-12)
        a = weight_matrix(sorted(g), [(u, v, 1) for u, v in g.edges()])
        assert pairwise_modularity(a, [part[v] for v in sorted(g)]) == pytest.approx(0.5, abs=1e-12)

    def test_matches_pairwise_oracle(self):
        rng = random.Random(11)
        for _ in range(50):
            n = rng.randint(2, 12)
            edges = [(f"v{i}", f"v{j}", rng.randint(1, 50)) for i in range(n) for j in range(n) if i != j and rng.random() < 0.3]
            if not edges:
                continue
            g = nx.DiGraph()
            for u, v, w in edges:
                g.add_edge(u, v, amount=w)
            nodes = sorted(g)
            labels = {v: rng.randint(0, 3) for v in nodes}
            a = weight_matrix(nodes, edges)
            assert modularity(g, labels) == pytest.approx(pairwise_modularity(a, [labels[v] for v in nodes]), abs=1e-9)

    def test_opposite_directions_sum(self):
        g = nx.DiGraph()
        g.add_edge("a", "b", amount=2)
        g.add_edge("b", "a", amount=3)
        g.add_edge("b", "c", amount=5)
        part = {"a": 0, "b": 0, "c": 1}
        a = weight_matrix(["a", "b", "c"], [("a", "b", 2), ("b", "a", 3), ("b", "c", 5)])
        assert modularity(g, part) == pytest.approx(pairwise_modularity(a, [0, 0, 1]))

    def test_no_edges(self):
        g = nx.DiGraph()
        g.add_node("a")
        with pytest.raises(ValueError, match="no edges"):
            modularity(g, {"a": 0})

    def test_missing_node(self):
        with pytest.raises(ValueError):
            modularity(undirected([("a", "b")]), {"a": 0})


class TestLouvain:
    def test_bridged_k33_split_is_optimal(self):
        g = bridged_k33()
        part = louvain_partition(g)
        left = {part.assignment[v] for v in g if v[0] in "ab"}
        right = {part.assignment[v] for v in g if v[0] in "cd"}
        assert len(left) == 1 and len(right) == 1 and left != right
        nodes = sorted(g)
        best, _ = best_modularity(weight_matrix(nodes, [(u, v, 1) for u, v in g.edges()]))
        assert part.modularity == pytest.approx(best, abs=1e-9)

    def test_single_edge(self):
        part = louvain_partition(undirected([("a", "b")]))
        assert part.n_communities == 1
        assert part.modularity == pytest.approx(0.0, abs=1e-12)

    def test_self_consistent_and_deterministic(self):
        rng = random.Random(5)
        for _ in range(20):
            ag = random_activity_graph(rng, rng.randint(1, 8), rng.randint(3, 12))
            part = louvain_partition(ag)
            assert part.modularity == modularity(ag, part)
            assert louvain_partition(ag) == part
            assert sorted(set(part.assignment.values())) == list(range(part.n_communities))
            assert -0.5 <= part.modularity <= 1

    def test_not_worse_than_singletons(self):
        rng = random.Random(6)
        for _ in range(20):
            ag = random_activity_graph(rng, rng.randint(1, 8), rng.randint(3, 12))
            singletons = {v: i for i, v in enumerate(sorted(ag.g))}
            assert louvain_partition(ag).modularity >= modularity(ag, singletons) - 1e-12

    def test_weights_matter(self):
        # on a 4-cycle the two heavy edges decide which pairs end up together
        g = nx.DiGraph()
        for u, v, w in [("a", "b", 100), ("b", "c", 1), ("c", "d", 100), ("d", "a", 1)]:
            g.add_edge(u, v, amount=w)
        part = louvain_partition(g)
        assert part.assignment["a"] == part.assignment["b"]
        assert part.assignment["c"] == part.assignment["d"]
        assert part.assignment["a"] != part.assignment["c"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LouvainConfig(resolution=0)
        with pytest.raises(ValueError):
            LouvainConfig(threshold=0)


class TestBoundaryRepair:
    def test_fixpoint_identity(self):
        g = planted_motif()
        part = Partition({v: 0 for v in g}, 0.0)
        assert enforce_address_boundaries(g, part) is part

    def test_tx_cut_from_its_payer(self):
        # p pays t; t pays q1, q2. Louvain-like split puts t with its payees only.
        g = flow_graph([("p", "t", 10), ("t", "q1", 6), ("t", "q2", 3), ("x", "u", 4), ("u", "p", 4)], {"t", "u"})
        bad = Partition({"x": 0, "u": 0, "p": 0, "t": 1, "q1": 1, "q2": 1}, 0.0)
        assert boundary_violations(g, bad) == ["t"]
        fixed = enforce_address_boundaries(g, bad)
        assert boundary_violations(g, fixed) == []
        a = fixed.assignment
        assert a["t"] == a["p"] and (a["q1"] == a["t"] or a["q2"] == a["t"])
        assert fixed.modularity == pytest.approx(modularity(g, fixed))

    def test_prefers_heaviest_valid_community(self):
        g = flow_graph(
            [("p1", "t", 1), ("p2", "t", 9), ("t", "q1", 1), ("t", "q2", 9), ("t", "q3", 1)],
            {"t"},
        )
        part = Partition({"p1": 0, "q1": 0, "p2": 1, "q2": 1, "t": 2, "q3": 2}, 0.0)
        fixed = enforce_address_boundaries(g, part)
        assert fixed.assignment["t"] == fixed.assignment["p2"] == fixed.assignment["q2"]
        assert boundary_violations(g, fixed) == []

    def test_random_graphs_have_no_violations(self):
        rng = random.Random(3)
        for _ in range(100):
            ag = random_activity_graph(rng, rng.randint(1, 15), rng.randint(3, 25))
            part = louvain_partition(ag)
            fixed = enforce_address_boundaries(ag, part)
            assert boundary_violations(ag, fixed) == []
            assert set(fixed.assignment) == set(ag.g)

    def test_every_tx_keeps_both_sides(self):
        rng = random.Random(4)
        for _ in range(30):
            ag = random_activity_graph(rng, rng.randint(1, 10), rng.randint(3, 15))
            for c in extract_communities([ag]):
                for t in c.g:
                    if c.g.nodes[t]["kind"] == "tx":
                        assert c.g.in_degree(t) >= 1 and c.g.out_degree(t) >= 1


class TestExtract:
    def test_isolated_motif_splits_into_valid_halves(self):
        # an 8-node pass-through graph on its own: cutting between the two
        # transactions raises Q from 0 to about 0.23, and both halves keep
        # payer and payee of their transaction
        ag = ActivityGraph(0, planted_motif())
        part = detect(ag)
        assert part.n_communities == 2
        assert part.modularity > 0.2
        assert part.assignment["tx1"] != part.assignment["tx2"]
        assert boundary_violations(ag, part) == []

    def test_motif_inside_pool_graph_stays_whole(self):
        corpus = generate(SynthSpec(rng_seed=2, n_passthrough=4, n_peeling_chains=1, peeling_length=4, n_noise_txs=0))
        graphs = build_graphs(index_transactions(corpus.transactions), corpus.seeds, labels=corpus.labels)
        communities = extract_communities(graphs)
        owner = {v: c.key for c in communities for v in c.g}
        for s in corpus.truth.structures:
            if s["motif"] == "passthrough":
                keys = {owner["t:" + t] for t in s["txids"]}
                assert len(keys) == 1

    def test_bridged_blocks(self):
        ag = ActivityGraph(0, bridged_k33())
        assert len(extract_communities([ag])) == 2

    def test_singleton_retained_and_order(self):
        g1 = ActivityGraph(0, nx.DiGraph())
        g1.g.add_node("a:s", kind="address", label="s")
        g2 = ActivityGraph(1, bridged_k33())
        out = extract_communities([g1, g2])
        assert [c.key for c in out] == [(0, 0), (1, 0), (1, 1)]
        assert len(out[0]) == 1

    def test_induced_edges_exact(self):
        rng = random.Random(9)
        ag = random_activity_graph(rng, 8, 14)
        for c in extract_communities([ag]):
            nodes = set(c.g)
            expected = {(u, v) for u, v in ag.g.edges() if u in nodes and v in nodes}
            assert set(c.g.edges()) == expected

    def test_size_histogram_reproduces_planted_motifs(self):
        spec = SynthSpec(rng_seed=1, n_passthrough=12, n_peeling_chains=3, peeling_length=4, n_noise_txs=0)
        corpus = generate(spec)
        graphs = build_graphs(index_transactions(corpus.transactions), corpus.seeds, labels=corpus.labels)
        sizes = Counter((c.n_addresses(), c.n_transactions()) for c in extract_communities(graphs))
        assert sizes[(6, 2)] == spec.n_passthrough

    def test_thread_count_irrelevant(self):
        rng = random.Random(12)
        graphs = [random_activity_graph(rng, 6, 10) for _ in range(6)]
        for i, ag in enumerate(graphs):
            ag.graph_id = i
        one = [(c.key, sorted(c.g)) for c in extract_communities(graphs, threads=1)]
        many = [(c.key, sorted(c.g)) for c in extract_communities(graphs, threads=4)]
        assert one == many
