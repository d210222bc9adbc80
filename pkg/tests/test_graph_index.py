import json

import numpy as np
import pytest

from hiergraph.graph import Chunk, Community, Entity, EntityGraph, Hierarchy, InvariantError, Relation
from hiergraph.index import ChecksumError, Index, IndexFormatError, load_index, save_index
from hiergraph.synthetic import random_index


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def tiny_graph():
    chunk = Chunk("d#0000", "d", "Alpha met Beta.", (0, 3))
    a = Entity("e000000", "Alpha", "Alpha met Beta.", {"d#0000"}, unit([1, 0, 0]))
    b = Entity("e000001", "Beta", "Alpha met Beta.", {"d#0000"}, unit([0, 1, 0]))
    r = Relation("r000000", "e000000", "e000001", "Alpha met Beta.")
    return EntityGraph.from_parts([a, b], [r], [chunk])


def test_entity_requires_name():
    with pytest.raises(InvariantError):
        Entity("e1", "  ", "x")


def test_relation_weight_positive():
    with pytest.raises(InvariantError):
        Relation("r1", "a", "b", "x", 0.0)


def test_community_needs_members():
    with pytest.raises(InvariantError):
        Community("c1-000000", 1, frozenset())


def test_graph_validate_catches_dangling_relation():
    g = tiny_graph()
    bad = EntityGraph(g.entities, g.relations + (Relation("r9", "e000000", "e999", "x"),), g.chunks)
    with pytest.raises(InvariantError, match="e999"):
        bad.validate()


def test_graph_validate_catches_unknown_chunk_and_norm():
    g = tiny_graph()
    e = Entity("e000002", "Gamma", "g", {"nope"})
    with pytest.raises(InvariantError, match="unknown chunks"):
        EntityGraph.from_parts([*g.entities.values(), e], [], g.chunks.values()).validate()
    e = Entity("e000002", "Gamma", "g", {"d#0000"}, np.array([2.0, 0, 0]))
    with pytest.raises(InvariantError, match="norm"):
        EntityGraph.from_parts([e], [], g.chunks.values()).validate()


def test_vectors_are_read_only_float32():
    e = tiny_graph().entities["e000000"]
    assert e.embedding.dtype == np.float32
    with pytest.raises(ValueError):
        e.embedding[0] = 5


def test_hierarchy_rejects_two_parents():
    c1 = Community("c1-000000", 1, {"a"})
    c2 = Community("c1-000001", 1, {"a", "b"})
    with pytest.raises(InvariantError, match="two parents"):
        Hierarchy.from_levels([[c1, c2]])


def test_hierarchy_navigation():
    l1 = [Community("c1-000000", 1, {"e000000"}), Community("c1-000001", 1, {"e000001"})]
    l2 = [Community("c2-000000", 2, {"c1-000000", "c1-000001"})]
    h = Hierarchy.from_levels([l1, l2])
    assert h.depth == 2
    assert list(h.top) == ["c2-000000"]
    assert h.children("c2-000000") == ["c1-000000", "c1-000001"]
    assert h.children("c1-000000") == []
    assert h.entities_under("c2-000000") == ["e000000", "e000001"]
    assert h.level1_parent("e000001").id == "c1-000001"
    assert h.level_of("c2-000000") == 2 and h.level_of("e000000") == 0
    h.validate(tiny_graph())
    with pytest.raises(InvariantError):
        h.level1_parent("missing")


def test_hierarchy_validate_membership_levels():
    l1 = [Community("c1-000000", 1, {"e000000", "e000001"})]
    l2 = [Community("c2-000000", 2, {"c1-000000", "c1-000009"})]
    with pytest.raises(InvariantError, match="c1-000009, which is not a level-1 community"):
        Hierarchy.from_levels([l1, l2]).validate(tiny_graph())


def test_round_trip_small(tmp_path):
    g = tiny_graph()
    h = Hierarchy.from_levels([[Community("c1-000000", 1, {"e000000", "e000001"}, "s", unit([1, 1, 0]))]],
                              {"e000000": unit([1, 0, 1]), "e000001": unit([0, 1, 1])})
    save_index(g, h, tmp_path / "idx")
    g2, h2 = load_index(tmp_path / "idx")
    assert g2 == g and h2 == h


def test_round_trip_random_bit_identical(tmp_path, rng):
    for i in range(10):
        idx = random_index(rng)
        idx.save(tmp_path / f"i{i}")
        back = Index.load(tmp_path / f"i{i}")
        assert back.graph == idx.graph
        assert back.hierarchy == idx.hierarchy
        back.save(tmp_path / f"j{i}")
        for name in ("manifest", "embeddings.bin", "entities.jsonl", "communities.jsonl"):
            assert (tmp_path / f"i{i}" / name).read_bytes() == (tmp_path / f"j{i}" / name).read_bytes()


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        load_index(tmp_path)


def test_checksum_mismatch(tmp_path, rng):
    random_index(rng).save(tmp_path)
    blob = tmp_path / "embeddings.bin"
    data = bytearray(blob.read_bytes())
    data[0] ^= 0xFF
    blob.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_index(tmp_path)


def test_wrong_format_version(tmp_path, rng):
    random_index(rng).save(tmp_path)
    m = json.loads((tmp_path / "manifest").read_text())
    m["format_version"] = 99
    (tmp_path / "manifest").write_text(json.dumps(m))
    with pytest.raises(IndexFormatError):
        load_index(tmp_path)


def _rewrite(tmp_path, name, transform):
    import hashlib
    path = tmp_path / name
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    lines = transform(lines)
    payload = "".join(json.dumps(x, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n" for x in lines)
    path.write_text(payload)
    m = json.loads((tmp_path / "manifest").read_text())
    m["checksums"][name] = hashlib.sha256(payload.encode()).hexdigest()
    (tmp_path / "manifest").write_text(json.dumps(m))


def test_dangling_parent_pointer_names_id(tmp_path):
    g = tiny_graph()
    h = Hierarchy.from_levels([[Community("c1-000000", 1, {"e000000", "e000001"}, "s", unit([1, 1, 0]))]],
                              {"e000000": unit([1, 0, 1]), "e000001": unit([0, 1, 1])})
    save_index(g, h, tmp_path)

    def corrupt(rows):
        rows[0]["parent"] = "c2-000042"
        return rows

    _rewrite(tmp_path, "communities.jsonl", corrupt)
    with pytest.raises(InvariantError, match="c1-000000"):
        load_index(tmp_path)


def test_empty_hierarchy_round_trip(tmp_path):
    g = tiny_graph()
    save_index(g, Hierarchy(), tmp_path)
    g2, h2 = load_index(tmp_path)
    assert g2 == g and h2.depth == 0


def test_index_context_matrix_shape(rng):
    idx = random_index(rng, dim=16)
    assert idx.context_matrix.shape == (len(idx.entity_ids), 32)
    row = idx.entity_row[idx.entity_ids[0]]
    parent = idx.hierarchy.level1_parent(idx.entity_ids[0])
    assert np.array_equal(idx.context_matrix[row, 16:], parent.representation)
