"""Synthetic corpus generation for offline runs and tests.

Every leaf category gets its own token vocabulary layered on top of the
taxonomy label words, and scholar populations are planted so that each
record can draw full candidate pools: ground-truth reviewers publish in
the paper's category, unqualified candidates only in its nearest sibling
category, and potential candidates in the sibling category plus at least
one paper in the target category. A fraction of reviewers also exists
under a registry identity sharing publication titles, which gives the
linkage stage real work to do.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import (
    Corpus,
    Publication,
    ReviewRecord,
    ScholarProfile,
    SourceId,
    compute_h_index,
)
from .linkage import normalize_title
from .providers import TextServiceClient
from .taxonomy import Taxonomy, nearest_sibling_category
from .util import derive_seed

FIRST_NAMES = [
    "Alice", "Bruno", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hiro",
    "Ines", "Jonas", "Katya", "Liang", "Maria", "Nadia", "Omar", "Priya",
    "Quentin", "Rosa", "Sven", "Tomas", "Uma", "Viktor", "Wei", "Ximena",
    "Yusuf", "Zofia", "Andre", "Bianca", "Carlos", "Diana",
]
LAST_NAMES = [
    "Almeida", "Bergstrom", "Chen", "Dubois", "Eriksson", "Fischer", "Garcia",
    "Haines", "Ivanov", "Jansen", "Kimura", "Larsson", "Moreau", "Novak",
    "Okafor", "Petrov", "Quinn", "Rossi", "Santos", "Takahashi", "Ueda",
    "Vasquez", "Weber", "Xu", "Yamamoto", "Zhang", "Keller", "Lindqvist",
    "Mbeki", "Navarro",
]
# Generic research vocabulary shared by every category.
COMMON_WORDS = [
    "method", "analysis", "model", "data", "approach", "study", "results",
    "evaluation", "framework", "experiments", "theory", "application",
    "problem", "structure", "systematic", "novel", "empirical", "bounds",
]


@dataclass(frozen=True)
class SynthConfig:
    experts_per_category: int = 14
    pure_per_category: int = 10
    bridge_per_category: int = 10
    n_authors: int = 120
    reviewers_min: int = 2
    reviewers_max: int = 3
    twin_fraction: float = 0.25


def default_taxonomy_text() -> str:
    return (resources.files("revmatch") / "assets" / "default_taxonomy.jsonl").read_text("utf-8")


def materialize_default_taxonomy(path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(default_taxonomy_text(), encoding="utf-8")


def _slug(node_id: str) -> str:
    return re.sub(r"[^a-z0-9]", "", node_id.lower())


class _Builder:
    """Stateful helper that owns id counters and the output corpus."""

    def __init__(self, taxonomy: Taxonomy, rng: np.random.Generator):
        self.taxonomy = taxonomy
        self.rng = rng
        self.corpus = Corpus()
        self.pub_serial = 0
        self.scholar_serial = 0
        self.leaves = [n.node_id for n in taxonomy.level_nodes(3)]
        self.vocab = {leaf: self._category_vocab(leaf) for leaf in self.leaves}

    def _category_vocab(self, leaf: str) -> dict[str, list[str]]:
        path_words = [w.lower() for w in self.taxonomy.path_text(leaf).replace("›", " ").split()]
        leaf_words = [w.lower() for w in self.taxonomy.nodes[leaf].label.split()]
        filler = [f"{_slug(leaf)}{i}" for i in range(20)]
        return {"path": path_words, "leaf": leaf_words, "filler": filler}

    def _name(self) -> str:
        i = self.scholar_serial
        return f"{FIRST_NAMES[i % len(FIRST_NAMES)]} {LAST_NAMES[(i // len(FIRST_NAMES)) % len(LAST_NAMES)]}"

    def _pick(self, pool: list[str], k: int) -> list[str]:
        return [pool[int(i)] for i in self.rng.integers(0, len(pool), size=k)]

    def make_publication(
        self,
        leaf: str,
        author_ids: list[SourceId],
        citations: int,
        year: int,
        tag: str = "graph-source",
        title: str | None = None,
    ) -> Publication:
        self.pub_serial += 1
        vocab = self.vocab[leaf]
        if title is None:
            title = " ".join(
                [self.taxonomy.nodes[leaf].label]
                + self._pick(vocab["filler"], 2)
                + [f"n{self.pub_serial}"]
            )
        abstract_words = (
            vocab["path"] * 2
            + vocab["leaf"] * 3
            + self._pick(vocab["filler"], 10)
            + self._pick(COMMON_WORDS, 8)
        )
        order = self.rng.permutation(len(abstract_words))
        abstract = " ".join(abstract_words[i] for i in order)
        pub = Publication(
            id=SourceId(tag, f"p{self.pub_serial}"),
            title=title,
            author_ids=author_ids,
            year=year,
            citation_count=citations,
            abstract=abstract,
        )
        self.corpus.publications[pub.id] = pub
        return pub

    def make_scholar(self, pub_plan: list[tuple[str, int, int]], tag: str = "graph-source") -> ScholarProfile:
        """pub_plan rows are (leaf, citations, year)."""
        self.scholar_serial += 1
        sid = SourceId(tag, f"s{self.scholar_serial}")
        profile = ScholarProfile(ids=[sid], display_name=self._name(), publication_ids=[])
        self.corpus.scholars.append(profile)
        self.corpus.scholars_by_id[sid] = profile
        for leaf, citations, year in pub_plan:
            pub = self.make_publication(leaf, [sid], citations, year, tag=tag)
            profile.publication_ids.append(pub.id)
        return profile

    def rint(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi + 1))


def _plan_on_topic(b: _Builder, leaf: str, count: int, cit: tuple[int, int], yr: tuple[int, int]):
    return [(leaf, b.rint(*cit), b.rint(*yr)) for _ in range(count)]


def _make_registry_twin(b: _Builder, expert: ScholarProfile, leaf: str) -> None:
    b.scholar_serial += 1
    twin_id = SourceId("registry", f"s{b.scholar_serial}")
    surname = expert.display_name.split()[-1]
    given = expert.display_name.split()[0]
    variant = f"{given[0]}. {surname}" if b.rng.random() < 0.5 else expert.display_name
    twin = ScholarProfile(ids=[twin_id], display_name=variant, publication_ids=[])
    b.corpus.scholars.append(twin)
    b.corpus.scholars_by_id[twin_id] = twin
    # Mirror two existing publications title-for-title, then add one more.
    own_pubs = [b.corpus.publications[p] for p in expert.publication_ids[:2]]
    for pub in own_pubs:
        mirrored = b.make_publication(
            leaf, [twin_id], pub.citation_count, pub.year, tag="registry", title=pub.title
        )
        twin.publication_ids.append(mirrored.id)
    extra = b.make_publication(leaf, [twin_id], b.rint(5, 40), b.rint(2015, 2024), tag="registry")
    twin.publication_ids.append(extra.id)


def generate_synthetic_corpus(
    taxonomy: Taxonomy,
    client: TextServiceClient,
    n_records: int,
    seed: int,
    config: SynthConfig | None = None,
) -> Corpus:
    """Build a fully self-consistent corpus of ``n_records`` review records."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(derive_seed(seed, "synth"))
    if not any(n.embedding is not None for n in taxonomy.level_nodes(3)):
        taxonomy.embed_nodes(client)
    b = _Builder(taxonomy, rng)
    leaves = b.leaves
    sibling_of = {leaf: nearest_sibling_category(leaf, taxonomy) for leaf in leaves}

    experts: dict[str, list[ScholarProfile]] = {leaf: [] for leaf in leaves}
    for leaf in leaves:
        # Tail publications go to another top-level branch so an expert can
        # never accumulate sibling-category output and leak into the pools
        # of a neighboring leaf as a near-qualified candidate.
        others = [l for l in leaves if taxonomy.l1_of(l) != taxonomy.l1_of(leaf)]
        for _ in range(cfg.experts_per_category):
            plan = _plan_on_topic(b, leaf, b.rint(5, 7), (15, 120), (2016, 2024))
            # A heavy tail of old, barely-cited work concentrated in one far
            # field: citation- and recency-based selection skips it, while
            # whole-history representations get dominated by it.
            off = others[b.rint(0, len(others) - 1)]
            plan += [(off, b.rint(0, 4), b.rint(1996, 2012)) for _ in range(b.rint(8, 14))]
            expert = b.make_scholar(plan)
            experts[leaf].append(expert)
            if b.rng.random() < cfg.twin_fraction:
                _make_registry_twin(b, expert, leaf)

    for leaf in leaves:
        for _ in range(cfg.pure_per_category):
            b.make_scholar(_plan_on_topic(b, leaf, b.rint(4, 6), (8, 80), (2012, 2023)))

    for target in leaves:
        home = sibling_of[target]
        for _ in range(cfg.bridge_per_category):
            plan = _plan_on_topic(b, home, b.rint(3, 4), (10, 90), (2014, 2024))
            plan += _plan_on_topic(b, target, b.rint(1, 2), (5, 40), (2013, 2021))
            b.make_scholar(plan)

    author_pool = [
        b.make_scholar(
            [(leaves[b.rint(0, len(leaves) - 1)], b.rint(0, 3), b.rint(2000, 2020))
             for _ in range(b.rint(1, 2))]
        )
        for _ in range(cfg.n_authors)
    ]

    for _ in range(n_records):
        leaf = leaves[b.rint(0, len(leaves) - 1)]
        authors = [author_pool[i].primary_id for i in rng.choice(len(author_pool), size=b.rint(1, 3), replace=False)]
        paper = b.make_publication(leaf, sorted(authors), 0, 2025)
        pool = experts[leaf]
        n_rev = b.rint(cfg.reviewers_min, cfg.reviewers_max)
        reviewers = sorted(pool[i].primary_id for i in rng.choice(len(pool), size=n_rev, replace=False))
        editor = None
        if b.rng.random() < 0.4:
            editor_cat = leaves[b.rint(0, len(leaves) - 1)]
            editor = experts[editor_cat][b.rint(0, len(experts[editor_cat]) - 1)].primary_id
        b.corpus.records.append(
            ReviewRecord(
                paper_id=paper.id,
                reviewer_ids=reviewers,
                unqualified_ids=[],
                potential_ids=[],
                l1_category=taxonomy.l1_of(leaf),
                l3_category=leaf,
                editor_id=editor,
            )
        )

    for profile in b.corpus.scholars:
        profile.h_index = compute_h_index(
            b.corpus.publications[p].citation_count for p in profile.publication_ids
        )
    return b.corpus


def make_linkage_corpus_pair(
    n_scholars: int, seed: int
) -> tuple[Corpus, Corpus, set[tuple[SourceId, SourceId]]]:
    """Two-source corpus pair with planted cross-source identities.

    Returns (left corpus, right corpus, expected links). Planted pairs are
    constructed unambiguous; additional decoys (shared co-authors, same
    surnames, identical-name pairs) must resolve to no link, so the
    expected set is exact, not a lower bound.
    """
    rng = np.random.default_rng(derive_seed(seed, "linkage-pair"))
    left = Corpus()
    right = Corpus()
    expected: set[tuple[SourceId, SourceId]] = set()
    pub_serial = 0

    def add_scholar(corpus: Corpus, tag: str, serial: int, name: str) -> ScholarProfile:
        sid = SourceId(tag, f"s{serial}")
        profile = ScholarProfile(ids=[sid], display_name=name, publication_ids=[])
        corpus.scholars.append(profile)
        corpus.scholars_by_id[sid] = profile
        return profile

    def add_pub(corpus: Corpus, tag: str, title: str, authors: list[SourceId]) -> Publication:
        nonlocal pub_serial
        pub_serial += 1
        pub = Publication(
            id=SourceId(tag, f"p{pub_serial}"),
            title=title,
            author_ids=authors,
            year=int(rng.integers(1990, 2025)),
            citation_count=int(rng.integers(0, 200)),
        )
        corpus.publications[pub.id] = pub
        for author in authors:
            profile = corpus.scholars_by_id.get(author)
            if profile is not None:
                profile.publication_ids.append(pub.id)
        return pub

    title_serial = 0

    def fresh_title(topic: int) -> str:
        nonlocal title_serial
        title_serial += 1
        return f"Results on topic {topic} series {title_serial}: case {int(rng.integers(1000, 9999))}"

    serial = 0
    n_planted = max(1, int(n_scholars * 0.45))
    for k in range(n_planted):
        serial += 1
        first = FIRST_NAMES[serial % len(FIRST_NAMES)]
        last = LAST_NAMES[(serial * 7) % len(LAST_NAMES)]
        suffix = " III" if rng.random() < 0.1 else ""
        name_l = f"{first} {last}{suffix}"
        style = rng.random()
        if style < 0.3:
            name_r = f"{first[0]}. {last}{suffix}"
        elif style < 0.4:
            name_r = f"{first} {last}{' third' if suffix else ''}".strip() or name_l
        else:
            name_r = name_l
        a = add_scholar(left, "graph-source", serial, name_l)
        bscholar = add_scholar(right, "registry", serial, name_r)
        shared_titles = [fresh_title(k) for _ in range(int(rng.integers(1, 4)))]
        for title in shared_titles:
            add_pub(left, "graph-source", title, [a.primary_id])
            coauthors = [bscholar.primary_id]
            if rng.random() < 0.5:
                serial += 1
                decoy = add_scholar(right, "registry", serial, f"Decoy Person{serial}")
                coauthors.append(decoy.primary_id)
            add_pub(right, "registry", title, coauthors)
        add_pub(left, "graph-source", fresh_title(k) + " solo", [a.primary_id])
        add_pub(right, "registry", fresh_title(k) + " other", [bscholar.primary_id])
        expected.add((a.primary_id, bscholar.primary_id))

    # Ambiguity trap: two right-side scholars with identical names co-author
    # every publication matched from one left scholar, so linking must refuse.
    serial += 1
    trap_left = add_scholar(left, "graph-source", serial, "Pat Morgan")
    serial += 1
    twin1 = add_scholar(right, "registry", serial, "Pat Morgan")
    serial += 1
    twin2 = add_scholar(right, "registry", serial, "Pat Morgan")
    trap_title = fresh_title(999)
    add_pub(left, "graph-source", trap_title, [trap_left.primary_id])
    add_pub(right, "registry", trap_title, [twin1.primary_id, twin2.primary_id])

    # Unmatched filler on both sides.
    while serial < n_scholars:
        serial += 1
        side = left if serial % 2 == 0 else right
        tag = "graph-source" if side is left else "registry"
        filler = add_scholar(side, tag, serial, f"Filler {LAST_NAMES[serial % len(LAST_NAMES)]}{serial}")
        for _ in range(int(rng.integers(1, 4))):
            add_pub(side, tag, fresh_title(serial), [filler.primary_id])

    return left, right, expected
