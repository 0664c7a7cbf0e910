import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mipsplace.errors import TopologyError
from mipsplace.topology import (
    ClusterConfig,
    NetworkGraph,
    build_cluster,
    build_fat_tree,
    build_jellyfish,
    hop_cost_matrix,
)


def nx_theta(g: NetworkGraph) -> np.ndarray:
    G = nx.Graph()
    G.add_nodes_from(range(g.n_switches + g.n_servers))
    G.add_edges_from(g.switch_links)
    G.add_edges_from((g.n_switches + j, sw) for j, sw in enumerate(g.server_switch))
    lengths = dict(nx.all_pairs_shortest_path_length(G))
    ns = g.n_servers
    return np.array([[lengths[g.n_switches + a][g.n_switches + b] for b in range(ns)] for a in range(ns)], float)


class TestFatTree:
    @pytest.mark.parametrize("k,servers,switches", [(2, 2, 5), (4, 16, 20), (6, 54, 45)])
    def test_counts(self, k, servers, switches):
        g = build_fat_tree(k)
        assert g.n_servers == servers == k ** 3 // 4
        assert g.n_switches == switches == (k // 2) ** 2 + k * k

    @pytest.mark.parametrize("k", [3, 0, -2, 1])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            build_fat_tree(k)

    def test_k4_hop_values(self):
        theta = hop_cost_matrix(build_fat_tree(4))
        assert set(np.unique(theta)) == {0.0, 2.0, 4.0, 6.0}
        assert theta[0, 1] == 2  # same edge switch
        assert theta[0, 2] == 4  # same pod
        assert theta[0, 4] == 6  # different pods

    @pytest.mark.parametrize("k", [2, 4, 6])
    def test_matches_networkx_and_degrees(self, k):
        g = build_fat_tree(k)
        np.testing.assert_array_equal(hop_cost_matrix(g), nx_theta(g))
        assert all(g.degree(v) == k for v in range(g.n_switches))


class TestJellyfish:
    def test_24_switches_4_ports(self):
        g = build_jellyfish(24, 4, 16, seed=3)
        assert g.n_servers == 16 and g.n_switches == 24
        assert max(g.degree(v) for v in range(24)) <= 4
        assert g.server_switch == tuple(j % 24 for j in range(16))

    def test_single_switch(self):
        g = build_jellyfish(1, 4, 1, seed=0)
        np.testing.assert_array_equal(hop_cost_matrix(g), [[0.0]])

    def test_deterministic(self):
        assert build_jellyfish(24, 4, 16, 7).switch_links == build_jellyfish(24, 4, 16, 7).switch_links
        assert build_jellyfish(24, 4, 16, 7).switch_links != build_jellyfish(24, 4, 16, 8).switch_links

    def test_too_many_servers(self):
        with pytest.raises(ValueError):
            build_jellyfish(2, 2, 3, 0)

    def test_disconnected_is_error(self):
        # three switches with one free port each: one of them stays isolated
        with pytest.raises(TopologyError):
            build_jellyfish(3, 2, 3, 0, max_retries=3)

    @given(st.integers(0, 500), st.integers(8, 30), st.sampled_from([3, 4, 5]))
    def test_properties(self, seed, n_sw, ports):
        n_srv = min(16, n_sw)
        try:
            g = build_jellyfish(n_sw, ports, n_srv, seed)
        except TopologyError:
            return
        assert max(g.degree(v) for v in range(n_sw)) <= ports
        assert len(set(g.switch_links)) == len(g.switch_links)
        theta = hop_cost_matrix(g)
        np.testing.assert_array_equal(theta, nx_theta(g))
        assert np.array_equal(theta, theta.T) and not np.diag(theta).any()
        for a, b, c in itertools.product(range(n_srv), repeat=3):
            assert theta[a, c] <= theta[a, b] + theta[b, c]


def test_hop_cost_disconnected_names_pair():
    g = NetworkGraph("custom", 2, (), (0, 1))
    with pytest.raises(TopologyError, match="0 and 1"):
        hop_cost_matrix(g)


def test_two_servers_one_switch():
    g = NetworkGraph("custom", 1, (), (0, 0))
    np.testing.assert_array_equal(hop_cost_matrix(g), [[0, 2], [2, 0]])


def test_json_adjacency():
    doc = build_fat_tree(2).to_json()
    assert doc["kind"] == "fat-tree" and doc["n_servers"] == 2
    assert doc["adjacency"]["srv0"] == ["sw" + str(build_fat_tree(2).server_switch[0])]


class TestCluster:
    def test_capacities_in_range_and_deterministic(self):
        cfg = ClusterConfig(seed=11)
        a, b = build_cluster(cfg), build_cluster(cfg)
        caps = np.array([s.capacity for s in a.servers])
        assert caps.shape == (16, 2)
        assert ((caps[:, 0] >= 16) & (caps[:, 0] <= 64)).all()
        assert ((caps[:, 1] >= 8) & (caps[:, 1] <= 32)).all()
        assert np.array_equal(caps, np.array([s.capacity for s in b.servers]))
        assert np.array_equal(a.hop_cost, b.hop_cost)

    def test_jellyfish_cluster(self):
        state = build_cluster(ClusterConfig(topology="jellyfish"))
        assert len(state.servers) == 16 and state.topology["kind"] == "jellyfish"

    def test_bad_config(self):
        with pytest.raises(ValueError):
            ClusterConfig(topology="torus")
        with pytest.raises(ValueError):
            ClusterConfig(capacity_ranges=((4, 2),))
        with pytest.raises(ValueError):
            ClusterConfig.from_dict({"nodes": 3})

    def test_dict_round_trip(self):
        cfg = ClusterConfig(topology="jellyfish", seed=4)
        assert ClusterConfig.from_dict(cfg.to_dict()) == cfg
