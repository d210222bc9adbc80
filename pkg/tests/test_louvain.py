import numpy as np
import pytest

from hiergraph import kernels
from hiergraph.louvain import (
    LouvainParams, aggregate, best_partition, build_csr, louvain_dendrogram, louvain_partition,
    modularity, partition_modularity, renumber,
)
from oracles import best_modularity, dense_modularity


def triangles():
    return [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)]


def random_edges(rng, n, p=0.5):
    return [(i, j, float(rng.uniform(0.5, 2.0))) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def test_two_triangles_split_in_two():
    part = louvain_partition(range(6), triangles())
    assert len(set(part.values())) == 2
    assert part[0] == part[1] == part[2] != part[3] == part[4] == part[5]


@pytest.mark.parametrize("edges,n,expected", [
    ([(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)], 4, 1),
    ([(0, 1, 1.0)], 2, 1),
    ([], 1, 1),
])
def test_small_graphs(edges, n, expected):
    assert len(set(louvain_partition(range(n), edges).values())) == expected


def test_isolated_nodes_stay_apart():
    part = louvain_partition(range(3), [])
    assert len(set(part.values())) == 3


def test_modularity_matches_dense_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(2, 9))
        edges = random_edges(rng, n)
        labels = rng.integers(0, 3, n)
        g = build_csr(n, edges)
        ours = modularity(g, renumber(labels), 1.0)
        assert ours == pytest.approx(dense_modularity(n, edges, labels), abs=1e-12)


def test_near_optimal_on_small_graphs(rng):
    for _ in range(40):
        n = int(rng.integers(2, 9))
        edges = random_edges(rng, n)
        if not edges:
            continue
        best, _ = best_modularity(n, edges)
        part = louvain_partition(range(n), edges)
        assert partition_modularity(range(n), edges, part) >= 0.95 * best - 1e-12


def test_gamma_controls_granularity(rng):
    edges = random_edges(rng, 30, 0.2)
    coarse = louvain_partition(range(30), edges, LouvainParams(gamma=0.3))
    fine = louvain_partition(range(30), edges, LouvainParams(gamma=3.0))
    assert len(set(coarse.values())) <= len(set(fine.values()))


def test_deterministic_for_seed(rng):
    edges = random_edges(rng, 40, 0.15)
    a = louvain_partition(range(40), edges, LouvainParams(seed=7))
    b = louvain_partition(range(40), edges, LouvainParams(seed=7))
    assert a == b


def test_node_order_does_not_matter(rng):
    edges = random_edges(rng, 12, 0.3)
    a = louvain_partition(list(range(12)), edges)
    b = louvain_partition(list(reversed(range(12))), list(reversed(edges)))
    assert a == b


def test_aggregate_preserves_total_weight(rng):
    edges = random_edges(rng, 10)
    g = build_csr(10, edges)
    labels = renumber(rng.integers(0, 4, 10))
    agg = aggregate(g, labels, int(labels.max()) + 1)
    assert agg.weights.sum() == pytest.approx(g.weights.sum())
    assert modularity(agg, np.arange(agg.n)) == pytest.approx(modularity(g, labels))


def test_dendrogram_levels_coarsen(rng):
    # ring of 8 cliques of 4
    edges = []
    for c in range(8):
        base = 4 * c
        edges += [(base + i, base + j, 1.0) for i in range(4) for j in range(i + 1, 4)]
        edges.append((base + 3, (base + 4) % 32, 1.0))
    passes = louvain_dendrogram(build_csr(32, edges), LouvainParams())
    sizes = [int(p.max()) + 1 for p in passes]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[0] == 8


def test_edge_to_unknown_node_rejected():
    with pytest.raises(KeyError):
        louvain_partition([0, 1], [(0, 5, 1.0)])


def test_compiled_and_python_kernels_agree(rng):
    edges = random_edges(rng, 60, 0.1)
    g = build_csr(60, edges)
    degree = np.zeros(60)
    np.add.at(degree, np.repeat(np.arange(60), np.diff(g.indptr)), g.weights)
    args = (g.indptr, g.indices, g.weights, degree, np.arange(60, dtype=np.int64),
            rng.permutation(60).astype(np.int64), 1.0, float(degree.sum()), 1000)
    a, _ = kernels.local_moving(*args)
    b, _ = kernels.local_moving_py(*args)
    assert np.array_equal(np.asarray(a), np.asarray(b))
    labels = np.asarray(a, dtype=np.int64)
    assert kernels.modularity(g.indptr, g.indices, g.weights, labels, 1.0) == pytest.approx(
        kernels.modularity_py(g.indptr, g.indices, g.weights, labels, 1.0), abs=1e-12)


def test_best_partition_single_node():
    assert list(best_partition(build_csr(1, []), LouvainParams())) == [0]
