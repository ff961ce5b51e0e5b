from __future__ import annotations

import filecmp

import pytest

from revmatch.corpus import load_corpus, save_corpus, validate_record
from revmatch.synth import (
    SynthConfig,
    default_taxonomy_text,
    generate_synthetic_corpus,
    make_linkage_corpus_pair,
    materialize_default_taxonomy,
)
from revmatch.taxonomy import Taxonomy

SMALL = SynthConfig(
    experts_per_category=4, pure_per_category=2, bridge_per_category=2, n_authors=20
)


class TestDefaultTaxonomy:
    def test_text_parses_and_validates(self, tmp_path):
        path = tmp_path / "taxonomy.jsonl"
        materialize_default_taxonomy(path)
        taxonomy = Taxonomy.load(path)
        assert len(taxonomy.level_nodes(1)) >= 2
        assert len(taxonomy.level_nodes(3)) >= 8
        # Junk-tail planting needs at least two distinct top-level branches.
        l1_ids = {taxonomy.l1_of(n.node_id) for n in taxonomy.level_nodes(3)}
        assert len(l1_ids) >= 2

    def test_materialize_equals_text(self, tmp_path):
        path = tmp_path / "nested" / "taxonomy.jsonl"
        materialize_default_taxonomy(path)
        assert path.read_text(encoding="utf-8") == default_taxonomy_text()


@pytest.fixture(scope="module")
def small_corpus(taxonomy_module, client):
    return generate_synthetic_corpus(taxonomy_module, client, n_records=15, seed=1, config=SMALL)


@pytest.fixture(scope="module")
def taxonomy_module(tmp_path_factory, client):
    path = tmp_path_factory.mktemp("synth-taxonomy") / "taxonomy.jsonl"
    materialize_default_taxonomy(path)
    taxonomy = Taxonomy.load(path)
    taxonomy.embed_nodes(client)
    return taxonomy


class TestGeneratedCorpus:
    def test_record_shape(self, small_corpus, taxonomy_module):
        leaves = {n.node_id for n in taxonomy_module.level_nodes(3)}
        assert len(small_corpus.records) == 15
        for record in small_corpus.records:
            assert 2 <= len(record.reviewer_ids) <= 3
            assert record.reviewer_ids == sorted(record.reviewer_ids)
            assert record.unqualified_ids == []
            assert record.potential_ids == []
            assert record.l3_category in leaves
            assert record.l1_category == taxonomy_module.l1_of(record.l3_category)

    def test_records_are_structurally_clean(self, small_corpus):
        for record in small_corpus.records:
            assert validate_record(record, small_corpus) == []

    def test_cross_references_resolve_through_save_load(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        loaded = load_corpus(tmp_path)
        assert len(loaded.scholars) == len(small_corpus.scholars)
        assert len(loaded.publications) == len(small_corpus.publications)
        assert len(loaded.records) == len(small_corpus.records)

    def test_in_memory_h_index_matches_load_path(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        loaded = load_corpus(tmp_path)
        mine = {s.primary_id: s.h_index for s in small_corpus.scholars}
        theirs = {s.primary_id: s.h_index for s in loaded.scholars}
        assert mine == theirs
        assert max(mine.values()) >= 3

    def test_registry_twins_share_titles(self, small_corpus):
        registry_titles = {
            p.title for p in small_corpus.publications.values() if p.id.tag == "registry"
        }
        graph_titles = {
            p.title for p in small_corpus.publications.values() if p.id.tag == "graph-source"
        }
        assert registry_titles
        assert registry_titles & graph_titles

    def test_generation_is_deterministic(self, taxonomy_module, client, tmp_path):
        a = generate_synthetic_corpus(taxonomy_module, client, n_records=6, seed=9, config=SMALL)
        b = generate_synthetic_corpus(taxonomy_module, client, n_records=6, seed=9, config=SMALL)
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        save_corpus(a, dir_a)
        save_corpus(b, dir_b)
        for name in ("publications.jsonl", "scholars.jsonl", "records.jsonl"):
            assert filecmp.cmp(dir_a / name, dir_b / name, shallow=False), name

    def test_seed_changes_output(self, taxonomy_module, client):
        a = generate_synthetic_corpus(taxonomy_module, client, n_records=6, seed=9, config=SMALL)
        b = generate_synthetic_corpus(taxonomy_module, client, n_records=6, seed=10, config=SMALL)
        titles_a = sorted(p.title for p in a.publications.values())
        titles_b = sorted(p.title for p in b.publications.values())
        assert titles_a != titles_b


class TestLinkagePair:
    def test_expected_size_and_tags(self):
        left, right, expected = make_linkage_corpus_pair(60, seed=3)
        assert len(expected) == int(60 * 0.45)
        for left_id, right_id in expected:
            assert left_id.tag == "graph-source"
            assert right_id.tag == "registry"
            assert left_id in left.scholars_by_id
            assert right_id in right.scholars_by_id

    def test_sides_are_single_source(self):
        left, right, _ = make_linkage_corpus_pair(40, seed=4)
        assert all(s.primary_id.tag == "graph-source" for s in left.scholars)
        assert all(s.primary_id.tag == "registry" for s in right.scholars)
        assert all(pid.tag == "graph-source" for pid in left.publications)
        assert all(pid.tag == "registry" for pid in right.publications)

    def test_internal_references_resolve(self):
        left, right, _ = make_linkage_corpus_pair(40, seed=5)
        for corpus in (left, right):
            for scholar in corpus.scholars:
                for pid in scholar.publication_ids:
                    assert pid in corpus.publications

    def test_ambiguity_trap_not_in_expected(self):
        left, _, expected = make_linkage_corpus_pair(30, seed=6)
        trap_ids = {
            s.primary_id for s in left.scholars if s.display_name == "Pat Morgan"
        }
        assert trap_ids
        assert not trap_ids & {left_id for left_id, _ in expected}

    def test_deterministic(self, tmp_path):
        for run in ("a", "b"):
            left, right, expected = make_linkage_corpus_pair(30, seed=7)
            save_corpus(left, tmp_path / run / "left")
            save_corpus(right, tmp_path / run / "right")
        for side in ("left", "right"):
            for name in ("publications.jsonl", "scholars.jsonl"):
                assert filecmp.cmp(
                    tmp_path / "a" / side / name, tmp_path / "b" / side / name, shallow=False
                )

    def test_scholar_budget_respected(self):
        left, right, _ = make_linkage_corpus_pair(50, seed=8)
        # Serial numbers run to at least the requested count; decoys and the
        # trap can push the total a little beyond it.
        assert len(left.scholars) + len(right.scholars) >= 50
