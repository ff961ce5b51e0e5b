from __future__ import annotations

import numpy as np
import pytest

from revmatch.corpus import Corpus, Publication, ScholarProfile, SourceId
from revmatch.errors import IntegrityError, ParseError
from revmatch.taxonomy import (
    Taxonomy,
    TaxonomyNode,
    _best_leaf,
    classify_corpus,
    classify_publication,
    load_assignments,
    most_distant_category,
    nearest_sibling_category,
    save_assignments,
    scholar_subject_profile,
)


def tiny() -> Taxonomy:
    t = Taxonomy()
    t.add(TaxonomyNode("cs", 1, "Computing"))
    t.add(TaxonomyNode("cs.ai", 2, "Intelligent Systems", parent="cs"))
    t.add(TaxonomyNode("cs.sys", 2, "Systems", parent="cs"))
    t.add(TaxonomyNode("cs.ai.speech", 3, "Speech Processing", parent="cs.ai"))
    t.add(TaxonomyNode("cs.ai.vision", 3, "Visual Recognition", parent="cs.ai"))
    t.add(TaxonomyNode("cs.sys.db", 3, "Data Stores", parent="cs.sys"))
    t.validate()
    return t


class TestStructure:
    def test_ancestors(self):
        t = tiny()
        assert t.ancestors("cs.ai.vision") == ["cs.ai", "cs"]
        assert t.ancestors("cs") == []

    def test_descendants(self):
        t = tiny()
        assert t.descendants("cs") == {
            "cs.ai",
            "cs.sys",
            "cs.ai.speech",
            "cs.ai.vision",
            "cs.sys.db",
        }
        assert t.descendants("cs.ai.vision") == set()
        with pytest.raises(KeyError):
            t.descendants("nope")

    def test_path_text(self):
        t = tiny()
        assert t.path_text("cs.ai.vision") == "Computing › Intelligent Systems › Visual Recognition"
        assert t.path_text("cs") == "Computing"

    def test_l1_of(self):
        t = tiny()
        assert t.l1_of("cs.ai.vision") == "cs"
        assert t.l1_of("cs.sys") == "cs"
        assert t.l1_of("cs") == "cs"

    def test_level_nodes_sorted(self):
        leaves = [n.node_id for n in tiny().level_nodes(3)]
        assert leaves == ["cs.ai.speech", "cs.ai.vision", "cs.sys.db"]

    def test_duplicate_node_rejected(self):
        t = tiny()
        with pytest.raises(IntegrityError, match="duplicate"):
            t.add(TaxonomyNode("cs", 1, "Computing Again"))


class TestValidate:
    def check(self, node, message):
        t = tiny()
        t.add(node)
        with pytest.raises(IntegrityError, match=message):
            t.validate()

    def test_bad_level(self):
        self.check(TaxonomyNode("x", 4, "X", parent="cs"), "has level 4")

    def test_root_with_parent(self):
        self.check(TaxonomyNode("x", 1, "X", parent="cs"), "has a parent")

    def test_missing_parent(self):
        self.check(TaxonomyNode("x", 2, "X"), "lacks a parent")

    def test_unknown_parent(self):
        self.check(TaxonomyNode("x", 3, "X", parent="zzz"), "unknown parent")

    def test_level_skip(self):
        self.check(TaxonomyNode("x", 3, "X", parent="cs"), "under level-1 parent")


class TestEmbeddings:
    def test_embed_nodes_covers_leaves_only(self, client):
        t = tiny()
        t.embed_nodes(client)
        for node in t.level_nodes(3):
            assert node.embedding is not None
            assert np.linalg.norm(node.embedding) == pytest.approx(1.0)
        assert t.nodes["cs"].embedding is None
        assert t.nodes["cs.ai"].embedding is None

    def test_set_embedding_normalizes(self):
        t = tiny()
        t.set_embedding("cs.ai.vision", np.array([3.0, 0.0, 4.0]))
        assert np.allclose(t.nodes["cs.ai.vision"].embedding, [0.6, 0.0, 0.8])

    def test_set_embedding_rejects_zero(self):
        with pytest.raises(ValueError, match="zero embedding"):
            tiny().set_embedding("cs.ai.vision", np.zeros(3))


def controlled() -> Taxonomy:
    t = tiny()
    t.set_embedding("cs.ai.vision", np.array([1.0, 0.0, 0.0]))
    t.set_embedding("cs.ai.speech", np.array([0.8, 0.6, 0.0]))
    t.set_embedding("cs.sys.db", np.array([-1.0, 0.0, 0.0]))
    return t


class TestNeighborCategories:
    def test_nearest_sibling(self):
        t = controlled()
        assert nearest_sibling_category("cs.ai.vision", t) == "cs.ai.speech"
        assert nearest_sibling_category("cs.sys.db", t) == "cs.ai.speech"

    def test_most_distant(self):
        t = controlled()
        assert most_distant_category("cs.ai.vision", t) == "cs.sys.db"
        assert most_distant_category("cs.sys.db", t) == "cs.ai.vision"

    def test_nearest_sibling_needs_a_leaf(self):
        with pytest.raises(ValueError, match="leaf"):
            nearest_sibling_category("cs.ai", controlled())

    def test_nearest_sibling_needs_embeddings(self):
        with pytest.raises(ValueError, match="no embedding"):
            nearest_sibling_category("cs.ai.vision", tiny())

    def test_single_leaf_taxonomy_rejected(self):
        t = Taxonomy()
        t.add(TaxonomyNode("a", 1, "A"))
        t.add(TaxonomyNode("a.b", 2, "B", parent="a"))
        t.add(TaxonomyNode("a.b.c", 3, "C", parent="a.b"))
        t.set_embedding("a.b.c", np.ones(3))
        with pytest.raises(ValueError, match="two leaf"):
            nearest_sibling_category("a.b.c", t)


class TestClassification:
    def test_tie_goes_to_smaller_node_id(self):
        t = tiny()
        t.set_embedding("cs.ai.vision", np.array([1.0, 0.0, 0.0]))
        t.set_embedding("cs.ai.speech", np.array([1.0, 0.0, 0.0]))
        t.set_embedding("cs.sys.db", np.array([0.0, 1.0, 0.0]))
        node_id, score = _best_leaf(np.array([2.0, 0.0, 0.0]), t)
        assert node_id == "cs.ai.speech"
        assert score == pytest.approx(1.0)

    def test_missing_embedding_raises(self):
        with pytest.raises(ValueError, match="no embedding"):
            _best_leaf(np.ones(3), tiny())

    def test_planted_vocabulary_lands_on_its_leaf(self, client):
        t = tiny()
        t.embed_nodes(client)
        pub = Publication(
            SourceId("graph-source", "p1"),
            "Visual Recognition",
            [],
            2021,
            3,
            abstract="Visual Recognition Computing Intelligent Systems recognition benchmarks",
        )
        node_id, score = classify_publication(pub, t, client)
        assert node_id == "cs.ai.vision"
        assert 0.0 < score <= 1.0

    def test_classify_corpus_is_job_count_invariant(self, client):
        t = tiny()
        t.embed_nodes(client)
        corpus = Corpus()
        texts = {
            "p1": "Visual Recognition Computing Intelligent Systems",
            "p2": "Data Stores Systems Computing storage engines",
        }
        for local, text in texts.items():
            pid = SourceId("graph-source", local)
            corpus.publications[pid] = Publication(pid, text, [], 2020, 0)
        serial = classify_corpus(corpus, t, client)
        assert serial[SourceId("graph-source", "p1")][0] == "cs.ai.vision"
        assert serial[SourceId("graph-source", "p2")][0] == "cs.sys.db"
        assert classify_corpus(corpus, t, client, jobs=3) == serial


def test_scholar_subject_profile_closure():
    t = tiny()
    pids = [SourceId("graph-source", f"p{i}") for i in range(3)]
    scholar = ScholarProfile(
        ids=[SourceId("graph-source", "s1")], display_name="Ann", publication_ids=list(pids)
    )
    assignments = {
        pids[0]: ("cs.ai.vision", 0.9),
        pids[1]: ("cs.sys.db", 0.8),
        # pids[2] intentionally unassigned
    }
    profile = scholar_subject_profile(scholar, assignments, t)
    assert profile[3] == {"cs.ai.vision", "cs.sys.db"}
    assert profile[2] == {"cs.ai", "cs.sys"}
    assert profile[1] == {"cs"}


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        t = tiny()
        path = tmp_path / "taxonomy.jsonl"
        t.save(path)
        loaded = Taxonomy.load(path)
        assert set(loaded.nodes) == set(t.nodes)
        for nid, node in t.nodes.items():
            twin = loaded.nodes[nid]
            assert (twin.level, twin.label, twin.parent) == (node.level, node.label, node.parent)

    def test_save_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        tiny().save(a)
        tiny().save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_load_reports_line_numbers(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"node_id": "a", "level": 1, "label": "A"}\nnot json\n', encoding="utf-8")
        with pytest.raises(ParseError, match=r"broken\.jsonl:2"):
            Taxonomy.load(path)

    def test_load_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"node_id": "a"}\n', encoding="utf-8")
        with pytest.raises(ParseError, match=r"broken\.jsonl:1"):
            Taxonomy.load(path)

    def test_load_validates_structure(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"node_id": "a", "level": 2, "label": "A"}\n', encoding="utf-8")
        with pytest.raises(IntegrityError, match="lacks a parent"):
            Taxonomy.load(path)


def test_assignments_roundtrip(tmp_path):
    assignments = {
        SourceId("graph-source", "p1"): ("cs.ai.vision", 0.875),
        SourceId("registry", "p2"): ("cs.sys.db", 0.5),
    }
    path = tmp_path / "assignments.jsonl"
    save_assignments(assignments, path)
    assert load_assignments(path) == assignments
