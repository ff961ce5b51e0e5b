"""Three-level discipline taxonomy and embedding-based classification.

Publications are classified flat over the leaf (level 3) nodes by cosine
similarity between the publication text embedding and the embedding of the
node's full label path ("L1 > L2 > L3" with a "›" separator). Level 1 and 2
assignments follow from ancestor closure.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Corpus, Publication, ScholarProfile, SourceId
from .errors import IntegrityError, ParseError
from .providers import TextServiceClient
from .util import atomic_write_text

PATH_SEPARATOR = " › "


@dataclass
class TaxonomyNode:
    node_id: str
    level: int
    label: str
    parent: str | None = None
    embedding: np.ndarray | None = None

    def to_json(self) -> dict:
        obj = {"node_id": self.node_id, "level": self.level, "label": self.label}
        if self.parent is not None:
            obj["parent"] = self.parent
        return obj


@dataclass
class Taxonomy:
    nodes: dict[str, TaxonomyNode] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)

    def add(self, node: TaxonomyNode) -> None:
        if node.node_id in self.nodes:
            raise IntegrityError(f"duplicate taxonomy node {node.node_id}")
        self.nodes[node.node_id] = node
        if node.parent is not None:
            self.children.setdefault(node.parent, []).append(node.node_id)

    def validate(self) -> None:
        for node in self.nodes.values():
            if node.level not in (1, 2, 3):
                raise IntegrityError(f"node {node.node_id} has level {node.level}")
            if node.level == 1:
                if node.parent is not None:
                    raise IntegrityError(f"level-1 node {node.node_id} has a parent")
            else:
                if node.parent is None:
                    raise IntegrityError(f"node {node.node_id} lacks a parent")
                parent = self.nodes.get(node.parent)
                if parent is None:
                    raise IntegrityError(f"node {node.node_id} references unknown parent {node.parent}")
                if parent.level != node.level - 1:
                    raise IntegrityError(
                        f"node {node.node_id} (level {node.level}) under level-{parent.level} parent"
                    )

    def level_nodes(self, level: int) -> list[TaxonomyNode]:
        return sorted((n for n in self.nodes.values() if n.level == level), key=lambda n: n.node_id)

    def ancestors(self, node_id: str) -> list[str]:
        """Chain of ancestor ids from the immediate parent up to the root."""
        chain = []
        current = self.nodes[node_id]
        while current.parent is not None:
            chain.append(current.parent)
            current = self.nodes[current.parent]
        return chain

    def descendants(self, node_id: str) -> set[str]:
        """Transitive closure of children, excluding the node itself."""
        if node_id not in self.nodes:
            raise KeyError(f"unknown taxonomy node {node_id}")
        result: set[str] = set()
        frontier = list(self.children.get(node_id, ()))
        while frontier:
            nid = frontier.pop()
            if nid not in result:
                result.add(nid)
                frontier.extend(self.children.get(nid, ()))
        return result

    def path_text(self, node_id: str) -> str:
        """Full label path, root first, used as the node's embedding input."""
        labels = [self.nodes[node_id].label]
        for ancestor in self.ancestors(node_id):
            labels.append(self.nodes[ancestor].label)
        return PATH_SEPARATOR.join(reversed(labels))

    def l1_of(self, node_id: str) -> str:
        chain = [node_id] + self.ancestors(node_id)
        return chain[-1]

    def embed_nodes(self, client: TextServiceClient) -> None:
        """Attach unit-norm embeddings to every leaf node."""
        for node in self.level_nodes(3):
            vec = client.embed_text(self.path_text(node.node_id))
            node.embedding = vec / np.linalg.norm(vec)

    def set_embedding(self, node_id: str, vec: np.ndarray) -> None:
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError(f"zero embedding for node {node_id}")
        self.nodes[node_id].embedding = np.asarray(vec, dtype=float) / norm

    def save(self, path: str | Path) -> None:
        ordered = sorted(self.nodes.values(), key=lambda n: (n.level, n.node_id))
        lines = [json.dumps(n.to_json(), ensure_ascii=False, sort_keys=True) for n in ordered]
        atomic_write_text(path, "".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        taxonomy = cls()
        path = Path(path)
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    node = TaxonomyNode(
                        node_id=obj["node_id"],
                        level=int(obj["level"]),
                        label=obj["label"],
                        parent=obj.get("parent"),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"{path.name}:{line_no}: {exc}") from exc
                taxonomy.add(node)
        taxonomy.validate()
        return taxonomy


def _best_leaf(
    query: np.ndarray, taxonomy: Taxonomy, exclude: str | None = None
) -> tuple[str, float]:
    query = np.asarray(query, dtype=float)
    query = query / np.linalg.norm(query)
    best_id: str | None = None
    best_score = -np.inf
    for node in taxonomy.level_nodes(3):
        if node.node_id == exclude:
            continue
        if node.embedding is None:
            raise ValueError(f"taxonomy node {node.node_id} has no embedding")
        score = float(np.dot(query, node.embedding))
        # Strict comparison over id-sorted nodes: ties go to the smaller id.
        if score > best_score:
            best_id = node.node_id
            best_score = score
    if best_id is None:
        raise ValueError("taxonomy has no leaf nodes to classify against")
    return best_id, best_score


def classify_publication(
    pub: Publication, taxonomy: Taxonomy, client: TextServiceClient
) -> tuple[str, float]:
    """Assign a publication to the most similar leaf category."""
    return _best_leaf(client.embed_text(pub.text), taxonomy)


def classify_corpus(
    corpus: Corpus, taxonomy: Taxonomy, client: TextServiceClient, jobs: int = 1
) -> dict[SourceId, tuple[str, float]]:
    pubs = [corpus.publications[pid] for pid in sorted(corpus.publications)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda p: classify_publication(p, taxonomy, client), pubs))
    else:
        results = [classify_publication(p, taxonomy, client) for p in pubs]
    return {pub.id: assignment for pub, assignment in zip(pubs, results)}


def scholar_subject_profile(
    scholar: ScholarProfile,
    assignments: Mapping[SourceId, tuple[str, float]],
    taxonomy: Taxonomy,
) -> dict[int, set[str]]:
    """Subject sets per level: assigned leaves plus their ancestor closure."""
    by_level: dict[int, set[str]] = {1: set(), 2: set(), 3: set()}
    for pid in scholar.publication_ids:
        if pid not in assignments:
            continue
        leaf = assignments[pid][0]
        for nid in [leaf] + taxonomy.ancestors(leaf):
            by_level[taxonomy.nodes[nid].level].add(nid)
    return by_level


def nearest_sibling_category(node_id: str, taxonomy: Taxonomy) -> str:
    """Most similar other leaf category; ties go to the smaller node id."""
    node = taxonomy.nodes[node_id]
    if node.level != 3:
        raise ValueError(f"nearest sibling is defined for leaf nodes, got level {node.level}")
    if node.embedding is None:
        raise ValueError(f"taxonomy node {node_id} has no embedding")
    if len(taxonomy.level_nodes(3)) < 2:
        raise ValueError("taxonomy needs at least two leaf nodes for a nearest sibling")
    best_id, _ = _best_leaf(node.embedding, taxonomy, exclude=node_id)
    return best_id


def most_distant_category(node_id: str, taxonomy: Taxonomy) -> str:
    """Least similar other leaf category; ties go to the smaller node id."""
    node = taxonomy.nodes[node_id]
    if node.embedding is None:
        raise ValueError(f"taxonomy node {node_id} has no embedding")
    best_id: str | None = None
    best_score = np.inf
    for other in taxonomy.level_nodes(3):
        if other.node_id == node_id:
            continue
        if other.embedding is None:
            raise ValueError(f"taxonomy node {other.node_id} has no embedding")
        score = float(np.dot(node.embedding, other.embedding))
        if score < best_score:
            best_id = other.node_id
            best_score = score
    if best_id is None:
        raise ValueError("taxonomy needs at least two leaf nodes")
    return best_id


def save_assignments(assignments: Mapping[SourceId, tuple[str, float]], path: str | Path) -> None:
    lines = []
    for pid in sorted(assignments):
        node_id, score = assignments[pid]
        lines.append(
            json.dumps(
                {"publication_id": pid.to_json(), "node_id": node_id, "score": score},
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_assignments(path: str | Path) -> dict[SourceId, tuple[str, float]]:
    assignments: dict[SourceId, tuple[str, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            assignments[SourceId.from_json(obj["publication_id"])] = (obj["node_id"], obj["score"])
    return assignments
