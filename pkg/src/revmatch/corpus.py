"""Corpus data model: publications, scholar profiles, review records.

Entities are stored one JSON object per line (UTF-8) in three files:
``publications.jsonl``, ``scholars.jsonl``, ``records.jsonl``. Loading
resolves every cross-reference and caches each scholar's h-index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import IntegrityError, ParseError

SOURCE_TAGS = ("graph-source", "review-platform", "registry")

PUBLICATIONS_FILE = "publications.jsonl"
SCHOLARS_FILE = "scholars.jsonl"
RECORDS_FILE = "records.jsonl"


@dataclass(frozen=True, order=True)
class SourceId:
    """Identifier of an entity within one source; ordering is (tag, local_id)."""

    tag: str
    local_id: str

    def __post_init__(self) -> None:
        if self.tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {self.tag!r}")
        if not self.local_id:
            raise ValueError("local_id must be non-empty")

    def to_json(self) -> dict:
        return {"tag": self.tag, "local_id": self.local_id}

    @classmethod
    def from_json(cls, obj: dict) -> "SourceId":
        return cls(tag=obj["tag"], local_id=obj["local_id"])

    def __str__(self) -> str:
        return f"{self.tag}:{self.local_id}"


@dataclass
class Publication:
    id: SourceId
    title: str
    author_ids: list[SourceId]
    year: int
    citation_count: int
    abstract: str | None = None
    venue: str | None = None

    def __post_init__(self) -> None:
        if self.citation_count < 0:
            raise ValueError(f"negative citation_count on {self.id}")

    @property
    def text(self) -> str:
        """Title and abstract joined for embedding and retrieval."""
        if self.abstract:
            return f"{self.title} {self.abstract}"
        return self.title

    def to_json(self) -> dict:
        obj = {
            "id": self.id.to_json(),
            "title": self.title,
            "author_ids": [a.to_json() for a in self.author_ids],
            "year": self.year,
            "citation_count": self.citation_count,
        }
        if self.abstract is not None:
            obj["abstract"] = self.abstract
        if self.venue is not None:
            obj["venue"] = self.venue
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Publication":
        return cls(
            id=SourceId.from_json(obj["id"]),
            title=obj["title"],
            author_ids=[SourceId.from_json(a) for a in obj["author_ids"]],
            year=int(obj["year"]),
            citation_count=int(obj["citation_count"]),
            abstract=obj.get("abstract"),
            venue=obj.get("venue"),
        )


@dataclass
class ScholarProfile:
    ids: list[SourceId]
    display_name: str
    publication_ids: list[SourceId]
    h_index: int = 0

    def __post_init__(self) -> None:
        if not self.ids:
            raise ValueError("scholar must carry at least one id")
        tags = [i.tag for i in self.ids]
        if len(set(tags)) != len(tags):
            raise ValueError(f"duplicate source tag in ids of {self.ids[0]}")

    @property
    def primary_id(self) -> SourceId:
        return self.ids[0]

    def to_json(self) -> dict:
        return {
            "ids": [i.to_json() for i in self.ids],
            "display_name": self.display_name,
            "publication_ids": [p.to_json() for p in self.publication_ids],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScholarProfile":
        return cls(
            ids=[SourceId.from_json(i) for i in obj["ids"]],
            display_name=obj["display_name"],
            publication_ids=[SourceId.from_json(p) for p in obj["publication_ids"]],
        )


@dataclass
class ReviewRecord:
    paper_id: SourceId
    reviewer_ids: list[SourceId]
    unqualified_ids: list[SourceId]
    potential_ids: list[SourceId]
    l1_category: str
    l3_category: str
    editor_id: SourceId | None = None

    def to_json(self) -> dict:
        obj = {
            "paper_id": self.paper_id.to_json(),
            "reviewer_ids": [r.to_json() for r in self.reviewer_ids],
        }
        if self.editor_id is not None:
            obj["editor_id"] = self.editor_id.to_json()
        obj["unqualified_ids"] = [u.to_json() for u in self.unqualified_ids]
        obj["potential_ids"] = [p.to_json() for p in self.potential_ids]
        obj["l1_category"] = self.l1_category
        obj["l3_category"] = self.l3_category
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewRecord":
        editor = obj.get("editor_id")
        return cls(
            paper_id=SourceId.from_json(obj["paper_id"]),
            reviewer_ids=[SourceId.from_json(r) for r in obj["reviewer_ids"]],
            unqualified_ids=[SourceId.from_json(u) for u in obj["unqualified_ids"]],
            potential_ids=[SourceId.from_json(p) for p in obj["potential_ids"]],
            l1_category=obj["l1_category"],
            l3_category=obj["l3_category"],
            editor_id=SourceId.from_json(editor) if editor is not None else None,
        )


@dataclass
class Corpus:
    publications: dict[SourceId, Publication] = field(default_factory=dict)
    scholars: list[ScholarProfile] = field(default_factory=list)
    records: list[ReviewRecord] = field(default_factory=list)
    # Every id a profile carries maps to that profile.
    scholars_by_id: dict[SourceId, ScholarProfile] = field(default_factory=dict)

    def scholar(self, scholar_id: SourceId) -> ScholarProfile:
        return self.scholars_by_id[scholar_id]

    def publications_of(self, scholar_id: SourceId) -> list[Publication]:
        profile = self.scholars_by_id[scholar_id]
        return [self.publications[p] for p in profile.publication_ids]


def compute_h_index(citation_counts: Iterable[int]) -> int:
    """Largest h such that at least h publications have >= h citations each."""
    counts = sorted(citation_counts, reverse=True)
    h = 0
    for rank, cited in enumerate(counts, start=1):
        if cited >= rank:
            h = rank
        else:
            break
    return h


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path.name}:{line_no}: expected a JSON object")
            yield line_no, obj


def _parse_entity(path: Path, line_no: int, obj: dict, factory):
    try:
        return factory(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path.name}:{line_no}: {exc}") from exc


def load_corpus(directory: str | Path) -> Corpus:
    """Load and cross-validate the three corpus files under ``directory``.

    Raises ParseError with file and line number on malformed lines, and
    IntegrityError listing every dangling reference found.
    """
    directory = Path(directory)
    corpus = Corpus()

    pub_path = directory / PUBLICATIONS_FILE
    for line_no, obj in _read_jsonl(pub_path):
        pub = _parse_entity(pub_path, line_no, obj, Publication.from_json)
        if pub.id in corpus.publications:
            raise IntegrityError(f"duplicate publication id {pub.id}")
        corpus.publications[pub.id] = pub

    sch_path = directory / SCHOLARS_FILE
    for line_no, obj in _read_jsonl(sch_path):
        profile = _parse_entity(sch_path, line_no, obj, ScholarProfile.from_json)
        for sid in profile.ids:
            if sid in corpus.scholars_by_id:
                raise IntegrityError(f"duplicate scholar id {sid}")
            corpus.scholars_by_id[sid] = profile
        corpus.scholars.append(profile)

    rec_path = directory / RECORDS_FILE
    for line_no, obj in _read_jsonl(rec_path):
        corpus.records.append(_parse_entity(rec_path, line_no, obj, ReviewRecord.from_json))

    dangling: list[str] = []
    for pub in corpus.publications.values():
        for author in pub.author_ids:
            if author not in corpus.scholars_by_id:
                dangling.append(f"publication {pub.id}: unknown author {author}")
    for profile in corpus.scholars:
        for pid in profile.publication_ids:
            if pid not in corpus.publications:
                dangling.append(f"scholar {profile.primary_id}: unknown publication {pid}")
    for record in corpus.records:
        if record.paper_id not in corpus.publications:
            dangling.append(f"record {record.paper_id}: unknown paper")
        referenced = list(record.reviewer_ids) + list(record.unqualified_ids) + list(record.potential_ids)
        if record.editor_id is not None:
            referenced.append(record.editor_id)
        for sid in referenced:
            if sid not in corpus.scholars_by_id:
                dangling.append(f"record {record.paper_id}: unknown scholar {sid}")
    if dangling:
        raise IntegrityError("; ".join(dangling))

    for profile in corpus.scholars:
        profile.h_index = compute_h_index(
            corpus.publications[p].citation_count for p in profile.publication_ids
        )
    return corpus


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    """Write the three corpus files; inverse of load_corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_jsonl(directory / PUBLICATIONS_FILE, (p.to_json() for p in corpus.publications.values()))
    _write_jsonl(directory / SCHOLARS_FILE, (s.to_json() for s in corpus.scholars))
    _write_jsonl(directory / RECORDS_FILE, (r.to_json() for r in corpus.records))


def _write_jsonl(path: Path, objects: Iterable[dict]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def validate_record(record: ReviewRecord, corpus: Corpus) -> list[str]:
    """Check a record's structural invariants; returns violation messages."""
    violations: list[str] = []
    if not record.reviewer_ids:
        violations.append(f"record {record.paper_id}: reviewer_ids is empty")

    unqualified = set(record.unqualified_ids)
    potential = set(record.potential_ids)
    reviewers = set(record.reviewer_ids)
    for sid in sorted(unqualified & potential):
        violations.append(f"record {record.paper_id}: {sid} in both unqualified and potential pools")
    for sid in sorted(reviewers & (unqualified | potential)):
        violations.append(f"record {record.paper_id}: reviewer {sid} appears in a candidate pool")

    paper = corpus.publications.get(record.paper_id)
    if paper is not None:
        authors = set(paper.author_ids)
        for sid in sorted(authors & (reviewers | unqualified | potential)):
            violations.append(f"record {record.paper_id}: paper author {sid} listed as candidate or reviewer")
    return violations
