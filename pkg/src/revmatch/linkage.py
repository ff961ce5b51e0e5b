"""Cross-source scholar alignment.

A scholar from the left corpus is matched against the right corpus in three
steps: publication matching on normalized titles, co-author intersection
scored by name-token overlap, and verification on full publication records.
Matching is deliberately conservative: any ambiguity yields no link.
"""

from __future__ import annotations

import json
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import Corpus, Publication, ScholarProfile, SourceId
from .util import atomic_write_text

# Ordinal words for generation suffixes in person names. "I" is excluded:
# it is indistinguishable from an initial.
ROMAN_SUFFIXES = {
    "II": "second",
    "III": "third",
    "IV": "fourth",
    "V": "fifth",
    "VI": "sixth",
    "VII": "seventh",
    "VIII": "eighth",
}


def _strip_punctuation(text: str) -> str:
    # Unicode categories P (punctuation) and S (symbols) are removed outright.
    return "".join(ch for ch in text if unicodedata.category(ch)[0] not in ("P", "S"))


def _strip_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def normalize_title(title: str) -> tuple[str, ...]:
    """Lowercase, drop punctuation and symbols, split on whitespace."""
    return tuple(_strip_punctuation(title).lower().split())


def titles_match(title_a: str, title_b: str) -> bool:
    """True when normalized word sequences are equal (same length, same words)."""
    a = normalize_title(title_a)
    b = normalize_title(title_b)
    return len(a) > 0 and a == b


def normalize_name(name: str, numeral_table: Mapping[str, str] | None = None) -> list[str]:
    """Normalize a person name to lowercase tokens.

    Diacritics are reduced to base ASCII letters, punctuation is removed, and
    a trailing roman-numeral generation suffix is rewritten as an ordinal
    word so that e.g. "III" and "third" compare equal across sources.
    """
    if numeral_table is None:
        numeral_table = ROMAN_SUFFIXES
    tokens = _strip_punctuation(_strip_diacritics(name)).split()
    if tokens:
        suffix = tokens[-1].upper()
        if suffix in numeral_table:
            tokens[-1] = numeral_table[suffix]
    return [t.lower() for t in tokens]


def _initials(tokens: Iterable[str]) -> tuple[str, ...]:
    # Multiset of first characters, order-insensitive.
    return tuple(sorted(t[0] for t in tokens if t))


def match_scholar(
    scholar: ScholarProfile,
    candidate_ids: Iterable[SourceId],
    scholars_by_id: Mapping[SourceId, ScholarProfile],
) -> SourceId | None:
    """Pick the unique candidate whose name agrees with ``scholar``.

    Candidates are scored by the size of the name-token-set intersection.
    A single strictly-best candidate wins. On a tie, or when no token
    overlaps at all, candidates are compared by the multiset of token
    initials; anything still ambiguous resolves to no match.
    """
    candidates = sorted(candidate_ids)
    if not candidates:
        return None

    own_tokens = normalize_name(scholar.display_name)
    own_token_set = set(own_tokens)
    scored = [
        (cid, len(own_token_set & set(normalize_name(scholars_by_id[cid].display_name))))
        for cid in candidates
    ]
    best = max(score for _, score in scored)
    leaders = [cid for cid, score in scored if score == best]
    if best > 0 and len(leaders) == 1:
        return leaders[0]

    pool = leaders if best > 0 else candidates
    own_initials = _initials(own_tokens)
    hits = [
        cid
        for cid in pool
        if _initials(normalize_name(scholars_by_id[cid].display_name)) == own_initials
    ]
    if len(hits) == 1:
        return hits[0]
    return None


def verify_match(
    left_pubs: Iterable[Publication], right_pubs: Iterable[Publication]
) -> list[tuple[str, str]]:
    """All title-matching publication pairs; empty means verification failed."""
    right_index: dict[tuple[str, ...], list[str]] = {}
    for pub in right_pubs:
        right_index.setdefault(normalize_title(pub.title), []).append(pub.title)
    evidence: list[tuple[str, str]] = []
    for pub in left_pubs:
        for right_title in right_index.get(normalize_title(pub.title), ()):
            evidence.append((pub.title, right_title))
    return evidence


@dataclass
class LinkEntry:
    left: SourceId
    right: SourceId
    evidence: list[tuple[str, str]]

    def to_json(self) -> dict:
        return {
            "left": self.left.to_json(),
            "right": self.right.to_json(),
            "evidence": [{"left_title": lt, "right_title": rt} for lt, rt in self.evidence],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinkEntry":
        return cls(
            left=SourceId.from_json(obj["left"]),
            right=SourceId.from_json(obj["right"]),
            evidence=[(e["left_title"], e["right_title"]) for e in obj["evidence"]],
        )


@dataclass
class LinkTable:
    entries: list[LinkEntry] = field(default_factory=list)

    def pairs(self) -> set[tuple[SourceId, SourceId]]:
        return {(e.left, e.right) for e in self.entries}

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True) for e in self.entries]
        atomic_write_text(path, "".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, path: str | Path) -> "LinkTable":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(LinkEntry.from_json(json.loads(line)))
        return cls(entries)


def default_keep(scholar: ScholarProfile) -> bool:
    """Default cleaning predicate: a scholar must carry publications."""
    return len(scholar.publication_ids) > 0


def corpus_view_by_tag(corpus: Corpus, tag: str) -> Corpus:
    """Restrict a mixed-source corpus to the scholars and publications of one source."""
    view = Corpus()
    for pid, pub in corpus.publications.items():
        if pid.tag == tag:
            view.publications[pid] = pub
    for profile in corpus.scholars:
        ids = [i for i in profile.ids if i.tag == tag]
        if not ids:
            continue
        pub_ids = [p for p in profile.publication_ids if p.tag == tag]
        narrowed = ScholarProfile(
            ids=ids,
            display_name=profile.display_name,
            publication_ids=pub_ids,
            h_index=profile.h_index,
        )
        view.scholars.append(narrowed)
        for sid in ids:
            view.scholars_by_id[sid] = narrowed
    return view


def link_sources(
    corpus_a: Corpus,
    corpus_b: Corpus,
    keep: Callable[[ScholarProfile], bool] = default_keep,
    jobs: int = 1,
) -> LinkTable:
    """Align scholars of ``corpus_a`` with scholars of ``corpus_b``.

    Only verified matches enter the table, so every entry carries at least
    one title-matching publication pair as evidence.
    """
    left_scholars = sorted((s for s in corpus_a.scholars if keep(s)), key=lambda s: s.primary_id)
    right_scholars = [s for s in corpus_b.scholars if keep(s)]
    right_pub_ids = {p for s in right_scholars for p in s.publication_ids}

    title_index: dict[tuple[str, ...], list[SourceId]] = {}
    for pid in sorted(right_pub_ids):
        pub = corpus_b.publications[pid]
        title_index.setdefault(normalize_title(pub.title), []).append(pid)

    def link_one(scholar: ScholarProfile) -> LinkEntry | None:
        own_pubs = [corpus_a.publications[p] for p in scholar.publication_ids]
        matched_ids: set[SourceId] = set()
        for pub in own_pubs:
            matched_ids.update(title_index.get(normalize_title(pub.title), ()))
        if not matched_ids:
            return None
        author_sets = [set(corpus_b.publications[pid].author_ids) for pid in sorted(matched_ids)]
        shared_authors = set.intersection(*author_sets)
        shared_authors &= set(corpus_b.scholars_by_id)
        candidate = match_scholar(scholar, shared_authors, corpus_b.scholars_by_id)
        if candidate is None:
            return None
        candidate_pubs = [
            corpus_b.publications[p] for p in corpus_b.scholars_by_id[candidate].publication_ids
        ]
        evidence = verify_match(own_pubs, candidate_pubs)
        if not evidence:
            return None
        return LinkEntry(left=scholar.primary_id, right=candidate, evidence=evidence)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(link_one, left_scholars))
    else:
        results = [link_one(s) for s in left_scholars]
    return LinkTable([entry for entry in results if entry is not None])
