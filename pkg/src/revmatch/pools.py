"""Candidate pool construction, stratified splits, and training pairs.

Unqualified candidates work in the category nearest the paper's own but
have never published in the paper's category; potential candidates share
the nearest-category footprint and additionally have published in the
paper's category. Both pools exclude the paper's authors and ground-truth
reviewers and apply an h-index floor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, ReviewRecord, ScholarProfile, SourceId
from .taxonomy import Taxonomy, nearest_sibling_category
from .util import atomic_write_text, derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoolConfig:
    min_pubs_in_cstar: int = 2
    h_index_threshold: int = 3
    pool_size: int = 8
    seed: int = 0
    # Restrict candidates to one source so linked twin profiles of the same
    # person cannot enter a pool under a second identity.
    candidate_tag: str | None = "graph-source"


@dataclass(frozen=True)
class LabeledPair:
    paper_id: SourceId
    candidate_id: SourceId
    label: int
    pool_origin: str  # "gt" | "unqualified" | "potential"


def _pubs_in(profile: ScholarProfile, assignments: Mapping[SourceId, tuple[str, float]], nodes: set[str]) -> int:
    return sum(
        1
        for pid in profile.publication_ids
        if pid in assignments and assignments[pid][0] in nodes
    )


def _eligible(
    record: ReviewRecord,
    corpus: Corpus,
    taxonomy: Taxonomy,
    assignments: Mapping[SourceId, tuple[str, float]],
    config: PoolConfig,
    want_target_pubs: bool,
) -> list[SourceId]:
    """Scholars passing the pool predicate, sorted by id."""
    c_p = record.l3_category
    c_star = nearest_sibling_category(c_p, taxonomy)
    target_nodes = {c_p} | taxonomy.descendants(c_p)
    sibling_nodes = {c_star}

    paper = corpus.publications[record.paper_id]
    excluded = set(paper.author_ids) | set(record.reviewer_ids)

    eligible = []
    for profile in corpus.scholars:
        sid = profile.primary_id
        if config.candidate_tag is not None and sid.tag != config.candidate_tag:
            continue
        if any(own in excluded for own in profile.ids):
            continue
        if profile.h_index < config.h_index_threshold:
            continue
        if _pubs_in(profile, assignments, sibling_nodes) < config.min_pubs_in_cstar:
            continue
        if want_target_pubs:
            if _pubs_in(profile, assignments, {c_p}) < 1:
                continue
        elif _pubs_in(profile, assignments, target_nodes) != 0:
            continue
        eligible.append(sid)
    return sorted(eligible)


def _sample_pool(eligible: list[SourceId], config: PoolConfig, record_id: SourceId, kind: str) -> list[SourceId]:
    if len(eligible) <= config.pool_size:
        if len(eligible) < config.pool_size:
            logger.warning(
                "record %s: only %d eligible %s candidates (pool size %d)",
                record_id, len(eligible), kind, config.pool_size,
            )
        return list(eligible)
    rng = np.random.default_rng(derive_seed(config.seed, "pool", kind, str(record_id)))
    chosen = rng.choice(len(eligible), size=config.pool_size, replace=False)
    return [eligible[i] for i in sorted(chosen)]


def build_unqualified_pool(
    record: ReviewRecord,
    corpus: Corpus,
    taxonomy: Taxonomy,
    assignments: Mapping[SourceId, tuple[str, float]],
    config: PoolConfig,
) -> list[SourceId]:
    """Candidates established in the nearest sibling category with zero
    publications in the paper's category or its descendants."""
    eligible = _eligible(record, corpus, taxonomy, assignments, config, want_target_pubs=False)
    return _sample_pool(eligible, config, record.paper_id, "unqualified")


def build_potential_pool(
    record: ReviewRecord,
    corpus: Corpus,
    taxonomy: Taxonomy,
    assignments: Mapping[SourceId, tuple[str, float]],
    config: PoolConfig,
) -> list[SourceId]:
    """Same thresholds as the unqualified pool but with at least one
    publication inside the paper's category."""
    eligible = _eligible(record, corpus, taxonomy, assignments, config, want_target_pubs=True)
    return _sample_pool(eligible, config, record.paper_id, "potential")


def build_pools_for_corpus(
    corpus: Corpus,
    taxonomy: Taxonomy,
    assignments: Mapping[SourceId, tuple[str, float]],
    config: PoolConfig,
) -> list[ReviewRecord]:
    """New record list with both candidate pools filled per record."""
    updated = []
    for record in corpus.records:
        updated.append(
            replace(
                record,
                unqualified_ids=build_unqualified_pool(record, corpus, taxonomy, assignments, config),
                potential_ids=build_potential_pool(record, corpus, taxonomy, assignments, config),
            )
        )
    return updated


@dataclass
class Split:
    train: list[SourceId]
    val: list[SourceId]
    test: list[SourceId]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        for name, ids in (("train", self.train), ("val", self.val), ("test", self.test)):
            atomic_write_text(directory / f"{name}.txt", "".join(f"{sid}\n" for sid in ids))

    @classmethod
    def load(cls, directory: str | Path) -> "Split":
        directory = Path(directory)
        parts = []
        for name in ("train", "val", "test"):
            ids = []
            with (directory / f"{name}.txt").open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        tag, local_id = line.split(":", 1)
                        ids.append(SourceId(tag=tag, local_id=local_id))
            parts.append(ids)
        return cls(*parts)


def apportion(n: int, ratios: Sequence[int]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items over ``ratios``.

    Remainder ties are broken toward the earlier part, so 5 items at 7:2:1
    come out as (4, 1, 0).
    """
    total = sum(ratios)
    quotas = [n * r / total for r in ratios]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    records: Sequence[ReviewRecord], seed: int, ratios: Sequence[int] = (7, 2, 1)
) -> Split:
    """Per-L1-category split into train/val/test by largest remainder."""
    strata: dict[str, list[ReviewRecord]] = {}
    for record in records:
        strata.setdefault(record.l1_category, []).append(record)

    split = Split(train=[], val=[], test=[])
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda r: r.paper_id)
        rng = np.random.default_rng(derive_seed(seed, "split", key))
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n_train, n_val, n_test = apportion(len(members), ratios)
        split.train.extend(r.paper_id for r in shuffled[:n_train])
        split.val.extend(r.paper_id for r in shuffled[n_train : n_train + n_val])
        split.test.extend(r.paper_id for r in shuffled[n_train + n_val :])
    return split


def build_training_pairs(
    records: Sequence[ReviewRecord],
    negatives_per_positive: int,
    seed: int,
    unqualified_fraction: float = 0.5,
) -> list[LabeledPair]:
    """One positive per ground-truth reviewer plus sampled pool negatives.

    Negatives come from the record's two pools in ``unqualified_fraction``
    proportion; a pool smaller than its quota is cycled so the pair count
    stays exact. Records with both pools empty are skipped with a warning.
    """
    pairs: list[LabeledPair] = []
    for record in records:
        if not record.unqualified_ids and not record.potential_ids:
            logger.warning("record %s has no pool candidates; skipped", record.paper_id)
            continue
        positives = [
            LabeledPair(record.paper_id, rid, 1, "gt") for rid in record.reviewer_ids
        ]
        total_neg = len(positives) * negatives_per_positive
        if record.unqualified_ids and record.potential_ids:
            n_unq = int(total_neg * unqualified_fraction + 0.5)
        elif record.unqualified_ids:
            n_unq = total_neg
        else:
            n_unq = 0
        n_pot = total_neg - n_unq

        rng = np.random.default_rng(derive_seed(seed, "pairs", str(record.paper_id)))
        negatives = []
        for pool, count, origin in (
            (record.unqualified_ids, n_unq, "unqualified"),
            (record.potential_ids, n_pot, "potential"),
        ):
            if count == 0:
                continue
            order = rng.permutation(len(pool))
            for i in range(count):
                negatives.append(LabeledPair(record.paper_id, pool[order[i % len(pool)]], 0, origin))
        pairs.extend(positives)
        pairs.extend(negatives)
    return pairs


def ranking_pair_indices(pairs: Sequence[LabeledPair]) -> list[tuple[int, int]]:
    """All within-record (positive, negative) index pairs, in input order."""
    by_paper: dict[SourceId, tuple[list[int], list[int]]] = {}
    for idx, pair in enumerate(pairs):
        pos, neg = by_paper.setdefault(pair.paper_id, ([], []))
        (pos if pair.label == 1 else neg).append(idx)
    result = []
    for paper_id in by_paper:
        pos, neg = by_paper[paper_id]
        for p in pos:
            for q in neg:
                result.append((p, q))
    return result
