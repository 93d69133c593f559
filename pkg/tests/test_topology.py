import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2oformer.topology import (BUILTIN_TOPOLOGIES, JointGraph, TopologyError, build_incidence, compute_degrees,
                                gather_relpos, hop_distances, hyperedge_pool, load_topology, topology_from_dict)
from oracles import bones_of, floyd_warshall, group_mean, random_connected_graph


def chain(n):
    return JointGraph.from_bones(n, [[i, i + 1] for i in range(n - 1)])


# -- incidence and degrees --------------------------------------------------------

def test_incidence_small_assignment():
    p = build_incidence({0: 0, 1: 0, 2: 1}, 2)
    np.testing.assert_array_equal(p.incidence, [[1, 0], [1, 0], [0, 1]])


def test_incidence_single_vertex():
    p = build_incidence({0: 0}, 1)
    d = compute_degrees(p)
    np.testing.assert_array_equal(p.incidence, [[1]])
    assert d.vertex[0, 0] == 1 and d.hyperedge[0, 0] == 1


def test_incidence_rejects_unassigned_vertex():
    with pytest.raises(TopologyError, match="vertex 1"):
        build_incidence({0: 0, 2: 0}, 1)


def test_incidence_rejects_empty_hyperedge():
    with pytest.raises(TopologyError, match="hyperedge 1"):
        build_incidence([0, 0, 2], 3)


def test_incidence_rejects_out_of_range_id():
    with pytest.raises(TopologyError, match="vertex 2 assigned to hyperedge 5"):
        build_incidence([0, 1, 5], 2)


def test_imigue_column_sums(imigue22):
    # head 5 (facial keypoints), torso 7 (body joints), 5 per hand
    sums = imigue22.partition.incidence.sum(axis=0).tolist()
    assert sorted(sums) == [5, 5, 5, 7]
    names = imigue22.hyperedge_names
    by_name = dict(zip(names, sums))
    assert by_name == {"head": 5, "torso": 7, "left_hand": 5, "right_hand": 5}


def test_smg_has_six_parts(smg25):
    assert smg25.num_vertices == 25 and smg25.num_hyperedges == 6


@pytest.mark.parametrize("H, dv, de", [
    ([[1, 0], [1, 0], [0, 1]], [1, 1, 1], [2, 1]),
    ([[1], [1], [1]], [1, 1, 1], [3]),
    (np.eye(4, dtype=int).tolist(), [1, 1, 1, 1], [1, 1, 1, 1]),
])
def test_degrees(H, dv, de):
    H = np.array(H)
    p = build_incidence(H.argmax(axis=1).tolist(), H.shape[1])
    d = compute_degrees(p)
    np.testing.assert_array_equal(d.vertex, np.diag(dv))
    np.testing.assert_array_equal(d.hyperedge, np.diag(de))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=12))
def test_partition_rows_sum_to_one(assignment):
    used = sorted(set(assignment))
    remap = {e: i for i, e in enumerate(used)}
    p = build_incidence([remap[e] for e in assignment], len(used))
    H = p.incidence
    assert set(np.unique(H)) <= {0, 1}
    np.testing.assert_array_equal(H.sum(axis=1), 1)
    assert H.sum(axis=0).min() >= 1
    np.testing.assert_array_equal(compute_degrees(p).vertex, np.eye(len(assignment)))


# -- hop distances ---------------------------------------------------------------

def test_hops_chain():
    t = hop_distances(chain(4))
    assert t.hops[0, 3] == 3 and t.m == 4


def test_hops_complete_graph():
    t = hop_distances(JointGraph.from_bones(3, [[0, 1], [1, 2], [0, 2]]))
    assert np.all(t.hops[~np.eye(3, dtype=bool)] == 1) and t.m == 2


def test_hops_star():
    t = hop_distances(JointGraph.from_bones(5, [[0, k] for k in range(1, 5)]))
    assert t.hops[1, 2] == 2 and t.m == 3


def test_hops_disconnected_names_pair():
    g = JointGraph.from_bones(4, [[0, 1], [2, 3]])
    with pytest.raises(TopologyError, match="vertex 2 unreachable from vertex 0"):
        hop_distances(g)


def test_hops_match_floyd_warshall_random():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(1, 9))
        a = random_connected_graph(rng, n, p=float(rng.uniform(0, 0.6)))
        t = hop_distances(JointGraph.from_bones(n, bones_of(a)))
        np.testing.assert_array_equal(t.hops, np.array(floyd_warshall(a.tolist()), dtype=int))
        assert t.m == t.hops.max() + 1
        np.testing.assert_array_equal(t.hops, t.hops.T)


def test_graph_validation():
    with pytest.raises(TopologyError, match="self loop"):
        JointGraph.from_bones(2, [[1, 1]])
    with pytest.raises(TopologyError, match="outside"):
        JointGraph.from_bones(2, [[0, 2]])
    with pytest.raises(TopologyError, match="symmetric"):
        JointGraph(2, np.array([[0, 1], [0, 0]], dtype=np.int8))


# -- pooling ---------------------------------------------------------------------

def test_pool_identity_partition():
    p = build_incidence([0, 1, 2], 3)
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(hyperedge_pool(x, p, compute_degrees(p), np.eye(2)), x)


def test_pool_single_hyperedge():
    p = build_incidence([0, 0, 0], 1)
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(hyperedge_pool(x, p, compute_degrees(p), np.eye(2)), [[2 / 3, 2 / 3]])


def test_pool_matches_group_mean_oracle():
    rng = np.random.default_rng(3)
    p = build_incidence([0, 1, 0, 1, 1, 0], 2)
    x = rng.standard_normal((6, 4))
    w = rng.standard_normal((4, 3))
    expected = group_mean(x, [[0, 2, 5], [1, 3, 4]]) @ w
    np.testing.assert_allclose(hyperedge_pool(x, p, compute_degrees(p), w), expected, atol=1e-12)


def test_pool_shape_errors():
    p = build_incidence([0, 0, 1], 2)
    d = compute_degrees(p)
    with pytest.raises(TopologyError, match=r"expected \(3, D\)"):
        hyperedge_pool(np.zeros((4, 2)), p, d, np.eye(2))
    with pytest.raises(TopologyError, match=r"W_e has shape \(3, 3\)"):
        hyperedge_pool(np.zeros((3, 2)), p, d, np.eye(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_pool_identity_property(v, c, seed):
    p = build_incidence(list(range(v)), v)
    x = np.random.default_rng(seed).standard_normal((v, c))
    np.testing.assert_array_equal(hyperedge_pool(x, p, compute_degrees(p), np.eye(c)), x)


# -- relative positions -------------------------------------------------------------

def test_relpos_single_vertex():
    r = np.array([[4.0, 5.0]])
    np.testing.assert_array_equal(gather_relpos(np.zeros((1, 1), dtype=int), r)[0, 0], r[0])


def test_relpos_chain_pair():
    t = hop_distances(chain(2))
    np.testing.assert_array_equal(gather_relpos(t, np.array([[1.0, 1.0], [2.0, 2.0]]))[0, 1], [2.0, 2.0])


def test_relpos_star_elementwise():
    t = hop_distances(JointGraph.from_bones(5, [[0, k] for k in range(1, 5)]))
    r = np.random.default_rng(0).standard_normal((t.m, 3))
    out = gather_relpos(t, r)
    for i in range(5):
        for j in range(5):
            np.testing.assert_array_equal(out[i, j], r[t.hops[i, j]])
    np.testing.assert_array_equal(out, out.transpose(1, 0, 2))
    for i in range(5):
        np.testing.assert_array_equal(out[i, i], r[0])


def test_relpos_table_too_small():
    with pytest.raises(TopologyError, match="3 rows"):
        gather_relpos(hop_distances(chain(5)), np.zeros((3, 2)))


# -- files ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_TOPOLOGIES)
def test_builtin_round_trip(name):
    t = load_topology(name)
    again = topology_from_dict(t.to_dict())
    np.testing.assert_array_equal(again.partition.incidence, t.partition.incidence)
    np.testing.assert_array_equal(again.graph.adjacency, t.graph.adjacency)
    assert again.root == t.root


def test_topology_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"num_vertices": 3, "bones": [[0, 1], [1, 2]], "hyperedges": [[0, 1], [1, 2]]}))
    with pytest.raises(TopologyError, match="vertex 1 appears in hyperedges 0 and 1"):
        load_topology(str(bad))
    bad.write_text(json.dumps({"num_vertices": 3, "bones": [[0, 1], [1, 2]], "hyperedges": [[0, 1]]}))
    with pytest.raises(TopologyError, match="vertex 2 is not assigned"):
        load_topology(str(bad))
    bad.write_text("{not json")
    with pytest.raises(TopologyError, match="invalid JSON"):
        load_topology(str(bad))
    with pytest.raises(TopologyError, match="neither a built-in"):
        load_topology("no-such-topology")


def test_topology_is_read_only(micro6):
    with pytest.raises(ValueError):
        micro6.hops[0, 1] = 7
    with pytest.raises(ValueError):
        micro6.partition.incidence[0, 0] = 0
