import numpy as np
import pytest

from hiergraph.graph import Community, Entity, EntityGraph, Hierarchy, InvariantError, Relation
from hiergraph.hierarchy import (
    aggregate_representation, build_hierarchy, community_id, node_representation, populate_hierarchy,
    summarize_community,
)
from hiergraph.providers import IdentityGenerator, MockEmbedder


def clique_ring(n_cliques=6, size=4):
    ents, rels = [], []
    for i in range(n_cliques * size):
        ents.append(Entity(f"e{i:06d}", f"Node{i}", f"node {i} of clique {i // size}"))
    for c in range(n_cliques):
        base = c * size
        for i in range(size):
            for j in range(i + 1, size):
                rels.append(Relation(f"r{len(rels):06d}", f"e{base + i:06d}", f"e{base + j:06d}", "in clique"))
        rels.append(Relation(f"r{len(rels):06d}", f"e{base + size - 1:06d}",
                             f"e{(base + size) % (n_cliques * size):06d}", "bridge"))
    return EntityGraph.from_parts(ents, rels)


def test_community_id_format():
    assert community_id(2, 17) == "c2-000017"


def test_build_hierarchy_membership_is_a_forest():
    g = clique_ring()
    h = build_hierarchy(g)
    h.validate(g)
    assert len(h.levels[0]) == 6
    assert sorted(e for c in h.top for e in h.entities_under(c)) == sorted(g.entities)
    assert 1 <= h.depth <= 3


def test_build_hierarchy_single_entity():
    g = EntityGraph.from_parts([Entity("e000000", "Solo", "alone")])
    h = build_hierarchy(g)
    assert h.depth == 1 and list(h.top) == ["c1-000000"]


def test_build_hierarchy_caps_levels():
    g = clique_ring(16, 3)
    h = build_hierarchy(g, target_levels=2)
    assert h.depth <= 2
    h.validate(g)


def test_build_hierarchy_empty_graph():
    with pytest.raises(ValueError):
        build_hierarchy(EntityGraph.from_parts([]))


def test_single_member_summary_is_the_entity_line():
    g = EntityGraph.from_parts([Entity("e000000", "Solo", "a lonely entity")])
    c = Community("c1-000000", 1, {"e000000"})
    assert summarize_community(c, IdentityGenerator(), g) == "Solo: a lonely entity"


def test_higher_level_summary_uses_member_summaries():
    g = EntityGraph.from_parts([Entity("e000000", "A", "a")])
    c = Community("c2-000000", 2, {"c1-000001", "c1-000000"})
    out = summarize_community(c, IdentityGenerator(), g, {"c1-000000": "first", "c1-000001": "second"})
    assert out == "first\nsecond"


def test_empty_summary_is_an_error():
    class Blank:
        def generate(self, prompt):
            return "  "

    g = EntityGraph.from_parts([Entity("e000000", "A", "a")])
    with pytest.raises(InvariantError):
        summarize_community(Community("c1-000000", 1, {"e000000"}), Blank(), g)


def test_aggregate_is_plain_mean(rng):
    vecs = [rng.standard_normal(8).astype(np.float32) for _ in range(5)]
    out = aggregate_representation(vecs)
    assert out.dtype == np.float32
    assert np.allclose(out, np.mean(np.asarray(vecs, dtype=np.float64), axis=0), atol=1e-7)
    with pytest.raises(ValueError):
        aggregate_representation([])
    with pytest.raises(ValueError):
        aggregate_representation([np.zeros(3), np.zeros(4)])


def test_populate_sets_summaries_vectors_and_means():
    g = clique_ring()
    emb = MockEmbedder(64)
    h = populate_hierarchy(g, build_hierarchy(g), IdentityGenerator(10_000), emb)
    h.validate(g, 64)
    for c in h.communities():
        assert c.summary
        source = h.node_vectors if c.level == 1 else {m: h.community(m).representation for m in c.members}
        expected = np.mean([np.asarray(source[m], dtype=np.float64) for m in c.sorted_members()], axis=0)
        assert np.allclose(c.representation, expected, atol=1e-6)
    e = g.entities["e000000"]
    text = node_representation(e, h)
    assert text == e.description + " | " + h.level1_parent(e.id).summary
    assert np.array_equal(h.node_vectors[e.id], emb.embed_one(text))


def test_node_representation_needs_parent_summary():
    g = EntityGraph.from_parts([Entity("e000000", "A", "a")])
    h = Hierarchy.from_levels([[Community("c1-000000", 1, {"e000000"})]])
    with pytest.raises(InvariantError):
        node_representation(g.entities["e000000"], h)
