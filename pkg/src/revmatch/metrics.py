"""Benchmark tasks: reviewer-recall confidence, unqualified-candidate
confidence, and five ranking metrics over ground-truth plus potential
candidates.

Rankings sort by score descending with ties broken by the smaller scholar
id. NDCG uses binary gains over the full list (no cutoff), normalized by
the ideal ranking.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import ReviewRecord, SourceId
from .util import atomic_write_text

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("rrc", "ucc", "map", "r_prec", "recip_rank", "ndcg", "success_at_5")
_COLUMN_TITLES = {
    "rrc": "RRC",
    "ucc": "UCC",
    "map": "MAP",
    "r_prec": "R-prec",
    "recip_rank": "Recip-rank",
    "ndcg": "NDCG",
    "success_at_5": "Success@5",
}

# A scorer maps (paper_id, scholar_id) to (confidence, ranking_score).
Scorer = Callable[[SourceId, SourceId], tuple[float, float]]


def task1_rrc(confidences_by_record: Sequence[Sequence[float]]) -> float:
    """Mean over records of the mean ground-truth reviewer confidence."""
    if not confidences_by_record:
        raise ValueError("no records to evaluate")
    per_record = []
    for confs in confidences_by_record:
        if not confs:
            raise ValueError("record contributes no ground-truth confidences")
        per_record.append(sum(confs) / len(confs))
    return sum(per_record) / len(per_record)


def task2_ucc(confidences_by_record: Sequence[Sequence[float]]) -> float:
    """Mean over records of the mean unqualified-candidate confidence."""
    if not confidences_by_record:
        raise ValueError("no records to evaluate")
    per_record = [sum(confs) / len(confs) for confs in confidences_by_record if confs]
    if not per_record:
        raise ValueError("every record has an empty unqualified pool")
    return sum(per_record) / len(per_record)


def rank_candidates(scored: Sequence[tuple[SourceId, float]]) -> list[SourceId]:
    """Order by score descending; equal scores go to the smaller scholar id."""
    return [sid for sid, _ in sorted(scored, key=lambda item: (-item[1], item[0]))]


def task3_ranking_metrics(
    scored: Sequence[tuple[SourceId, float]], gt_ids: set[SourceId]
) -> dict[str, float]:
    """AP, R-precision, reciprocal rank, full-list binary NDCG, Success@5."""
    if not scored:
        raise ValueError("empty candidate list")
    for sid, score in scored:
        if not math.isfinite(score):
            raise ValueError(f"non-finite score for {sid}")
    ranking = rank_candidates(scored)
    relevance = [1 if sid in gt_ids else 0 for sid in ranking]
    n_gt = sum(relevance)
    if n_gt == 0:
        raise ValueError("no ground-truth reviewer in the candidate list")

    hits = 0
    precision_sum = 0.0
    recip = 0.0
    dcg = 0.0
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            precision_sum += hits / rank
            if recip == 0.0:
                recip = 1.0 / rank
            dcg += 1.0 / math.log2(rank + 1)
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, n_gt + 1))
    return {
        "map": precision_sum / n_gt,
        "r_prec": sum(relevance[:n_gt]) / n_gt,
        "recip_rank": recip,
        "ndcg": dcg / idcg,
        "success_at_5": 1.0 if any(relevance[:5]) else 0.0,
    }


@dataclass
class EvalReport:
    rrc: float
    ucc: float
    map: float
    r_prec: float
    recip_rank: float
    ndcg: float
    success_at_5: float
    n_records: int
    per_record: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        obj = {name: getattr(self, name) for name in METRIC_COLUMNS}
        obj["n_records"] = self.n_records
        obj["per_record"] = self.per_record
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(
            **{name: obj[name] for name in METRIC_COLUMNS},
            n_records=obj["n_records"],
            per_record=obj.get("per_record", []),
        )


def evaluate_suite(scorer: Scorer, records: Sequence[ReviewRecord]) -> EvalReport:
    """Run all three tasks over ``records`` with one scorer.

    Ranking runs over ground-truth plus potential candidates only. Records
    with an empty unqualified pool are left out of the UCC mean (with a
    warning); a record without ground-truth reviewers is an error.
    """
    if not records:
        raise ValueError("no records to evaluate")
    gt_confs: list[list[float]] = []
    unq_confs: list[list[float]] = []
    rank_rows: list[dict[str, float]] = []
    per_record: list[dict] = []

    for record in records:
        if not record.reviewer_ids:
            raise ValueError(f"record {record.paper_id} has no ground-truth reviewers")
        gt = [scorer(record.paper_id, sid)[0] for sid in sorted(record.reviewer_ids)]
        unq = [scorer(record.paper_id, sid)[0] for sid in sorted(record.unqualified_ids)]
        if not unq:
            logger.warning("record %s has an empty unqualified pool; skipped for UCC", record.paper_id)
        gt_confs.append(gt)
        unq_confs.append(unq)

        ranked_ids = sorted(set(record.reviewer_ids) | set(record.potential_ids))
        scored = [(sid, scorer(record.paper_id, sid)[1]) for sid in ranked_ids]
        row = task3_ranking_metrics(scored, set(record.reviewer_ids))
        rank_rows.append(row)
        entry = {"record": str(record.paper_id)}
        entry.update(row)
        per_record.append(entry)

    def mean_of(key: str) -> float:
        return sum(row[key] for row in rank_rows) / len(rank_rows)

    return EvalReport(
        rrc=task1_rrc(gt_confs),
        ucc=task2_ucc(unq_confs),
        map=mean_of("map"),
        r_prec=mean_of("r_prec"),
        recip_rank=mean_of("recip_rank"),
        ndcg=mean_of("ndcg"),
        success_at_5=mean_of("success_at_5"),
        n_records=len(records),
        per_record=per_record,
    )


def render_table(reports: Mapping[str, EvalReport]) -> str:
    """Aligned plain-text table, one row per scorer."""
    lines = ["Task metrics (ranking over ground-truth + potential; NDCG full-list, no cutoff)"]
    name_width = max([len("scorer")] + [len(name) for name in reports])
    header = ["scorer".ljust(name_width)] + [_COLUMN_TITLES[c].rjust(10) for c in METRIC_COLUMNS]
    lines.append("  ".join(header))
    for name, report in reports.items():
        cells = [name.ljust(name_width)]
        cells += [f"{getattr(report, c):.4f}".rjust(10) for c in METRIC_COLUMNS]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def save_reports(reports: Mapping[str, EvalReport], json_path: str | Path, text_path: str | Path) -> None:
    payload = {name: report.to_json() for name, report in reports.items()}
    atomic_write_text(json_path, json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    atomic_write_text(text_path, render_table(reports))


def load_reports(json_path: str | Path) -> dict[str, EvalReport]:
    with open(json_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return {name: EvalReport.from_json(obj) for name, obj in payload.items()}
