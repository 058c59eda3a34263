import math

import networkx as nx
import numpy as np
import pytest

from netgen import random_network
from otsbigm.grid import Branch, Bus, Generator, Network, figure1_example, load_case
from otsbigm.paths import (all_simple_paths, hop_neighborhood, k_shortest_paths, longest_path,
                           make_path, path_weight)


@pytest.fixture(scope="module")
def ieee14():
    return load_case("ieee14")


def two_bus():
    return Network([Bus(1), Bus(2, 0.5)], [Branch(0, 1, 2, 4.0, 2.0)], [Generator(1, 1.0, 0, 1)])


def labels(net, path):
    return [net.branch_label(e) for e in path.edges]


class TestLongestPath:
    @pytest.mark.parametrize("a,b", [("b", "g1"), ("f", "g2")])
    def test_figure1(self, a, b):
        net = figure1_example()
        assert longest_path(net, net.bus_id(a), net.bus_id(b)).weight == 6.0

    def test_single_edge(self):
        p = longest_path(two_bus(), 1, 2)
        assert p.edges == (0,) and p.weight == 0.5

    def test_ieee14_route(self, ieee14):
        p = longest_path(ieee14, 3, 4)
        assert p.nodes == (3, 2, 1, 5, 6, 12, 13, 14, 9, 4)

    def test_matches_enumeration_and_mtz(self):
        rng = np.random.default_rng(17)
        for _ in range(8):
            net = random_network(rng, 7, 10)
            br = net.branches[int(rng.integers(net.n_branch))]
            best = all_simple_paths(net, br.from_bus, br.to_bus)[-1].weight
            exact = longest_path(net, br.from_bus, br.to_bus)
            assert exact.weight == pytest.approx(best, abs=1e-12)
            mtz = longest_path(net, br.from_bus, br.to_bus, "mtz_milp")
            assert mtz.certified
            assert best * 0.99 - 1e-9 <= mtz.weight <= best + 1e-12
            assert mtz.bound >= best - 1e-9

    def test_mtz_time_limit_flags_path(self, ieee14):
        try:
            p = longest_path(ieee14, 3, 4, "mtz_milp", time_limit=0.0)
        except TimeoutError:
            return
        assert not p.certified and p.bound >= p.weight

    def test_rejects_same_endpoints(self, ieee14):
        with pytest.raises(ValueError):
            longest_path(ieee14, 3, 3)
        with pytest.raises(ValueError):
            longest_path(ieee14, 3, 4, strategy="greedy")


class TestKShortest:
    def test_ieee14_first_two(self, ieee14):
        first, second = k_shortest_paths(ieee14, 3, 4, 2)
        assert labels(ieee14, first) == [(3, 4)]
        assert second.nodes == (3, 2, 4)

    def test_nondecreasing_and_elementary(self, ieee14):
        paths = k_shortest_paths(ieee14, 1, 14, 25)
        assert len(paths) == 25
        for p, q in zip(paths, paths[1:]):
            assert p.weight <= q.weight
        for p in paths:
            assert len(set(p.nodes)) == len(p.nodes)
            assert p.nodes[0] == 1 and p.nodes[-1] == 14
            assert abs(path_weight(ieee14, p.edges) - p.weight) <= 1e-12
        longest = longest_path(ieee14, 1, 14).weight
        assert all(p.weight <= longest for p in paths)

    def test_fewer_paths_than_requested(self):
        assert len(k_shortest_paths(two_bus(), 1, 2, 5)) == 1

    def test_rejects_bad_k(self, ieee14):
        with pytest.raises(ValueError):
            k_shortest_paths(ieee14, 1, 2, 0)

    def test_parallel_branches_are_distinct_paths(self):
        net = Network([Bus(1), Bus(2, 0.5)], [Branch(0, 1, 2, 1.0, 1.0), Branch(1, 1, 2, 2.0, 1.0)],
                      [Generator(1, 1.0, 0, 1)])
        assert [p.edges for p in k_shortest_paths(net, 1, 2, 3)] == [(1,), (0,)]

    def test_matches_enumeration_on_random_graphs(self):
        rng = np.random.default_rng(99)
        for _ in range(30):
            net = random_network(rng, 8, int(rng.integers(9, 14)))
            i, j = (int(v) + 1 for v in rng.choice(8, size=2, replace=False))
            got = k_shortest_paths(net, i, j, 10)
            want = all_simple_paths(net, i, j)[:10]
            assert [p.edges for p in got] == [p.edges for p in want]

    def test_agrees_with_networkx_on_simple_graphs(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            net = random_network(rng, 8, 12)
            g = nx.Graph()
            for br in net.branches:
                if not g.has_edge(br.from_bus, br.to_bus):
                    g.add_edge(br.from_bus, br.to_bus, weight=br.weight, id=br.id)
            if g.number_of_edges() != net.n_branch:
                continue
            ref = []
            for nodes in nx.shortest_simple_paths(g, 1, 8, weight="weight"):
                ref.append(math.fsum(g[a][b]["weight"] for a, b in zip(nodes, nodes[1:])))
                if len(ref) == 10:
                    break
            got = [p.weight for p in k_shortest_paths(net, 1, 8, 10)]
            assert got == pytest.approx(ref, abs=1e-12)


class TestHopNeighborhood:
    def test_ieee14_branch_34_edges(self, ieee14):
        hood = hop_neighborhood(ieee14, ieee14.branch_between(3, 4).id, 2)
        listed = {(4, 2), (3, 2), (2, 1), (2, 5), (1, 5), (4, 5), (9, 10), (4, 9), (7, 9),
                  (4, 7), (7, 8), (9, 14)}
        found = {tuple(sorted(ieee14.branch_label(e))) for e in hood}
        assert {tuple(sorted(e)) for e in listed} <= found
        # bus 6 is two hops from bus 4 through bus 5, so (5, 6) belongs as well
        assert found - {tuple(sorted(e)) for e in listed} == {(5, 6)}

    def test_saturation(self, ieee14):
        b = ieee14.branch_between(3, 4).id
        assert hop_neighborhood(ieee14, b, 20) == {br.id for br in ieee14.branches} - {b}

    def test_star(self):
        # star centred on bus 1 plus a pendant bus 6 hanging off leaf 3
        buses = [Bus(k) for k in range(1, 7)]
        spokes = [Branch(k, 1, k + 2, 1.0, 1.0) for k in range(4)]
        net = Network(buses, spokes + [Branch(4, 3, 6, 1.0, 1.0)], [Generator(1, 1.0, 0, 1)])
        assert hop_neighborhood(net, 0, 1) == {1, 2, 3}

    def test_rejects_k_zero(self, ieee14):
        with pytest.raises(ValueError):
            hop_neighborhood(ieee14, 0, 0)


def test_make_path_rejects_broken_sequences(ieee14):
    with pytest.raises(ValueError):
        make_path(ieee14, 3, [ieee14.branch_between(1, 2).id])
