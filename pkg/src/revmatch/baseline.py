"""Retrieval baseline: TF-IDF cosine scoring plus isotonic calibration.

TF is raw term count over document length and IDF is ln(N / df); both are
deliberately hand-rolled so the formulas stay exactly as stated. A
candidate is represented by the mean of their publication vectors. The
calibrator is pool-adjacent-violators with squared error, stepwise
interpolation, and constant extrapolation beyond the fitted range.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import Corpus, SourceId
from .linkage import normalize_title

logger = logging.getLogger(__name__)


def tokenize(text: str) -> list[str]:
    return list(normalize_title(text))


class TfidfScorer(BaseEstimator):
    """Cosine similarity between a paper and the mean of a candidate's
    publication TF-IDF vectors."""

    def fit(self, corpus: Corpus) -> "TfidfScorer":
        df: dict[str, int] = {}
        for pub in corpus.publications.values():
            for token in set(tokenize(pub.text)):
                df[token] = df.get(token, 0) + 1
        n_docs = len(corpus.publications)
        if n_docs == 0:
            raise ValueError("corpus has no publications")
        self.idf_ = {token: math.log(n_docs / count) for token, count in df.items()}
        self.doc_vectors_ = {
            pid: self._vectorize(tokenize(pub.text)) for pid, pub in corpus.publications.items()
        }
        self.corpus_ = corpus
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "idf_"):
            raise NotFittedError("TfidfScorer must be fit on a corpus first")

    def _vectorize(self, tokens: list[str]) -> dict[str, float]:
        if not tokens:
            return {}
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        length = len(tokens)
        vec = {}
        for token, count in counts.items():
            idf = self.idf_.get(token)
            if idf is None:
                continue  # df = 0 terms carry no weight
            vec[token] = (count / length) * idf
        return vec

    def candidate_vector(self, scholar_id: SourceId) -> dict[str, float]:
        self._check_fitted()
        pub_ids = self.corpus_.scholars_by_id[scholar_id].publication_ids
        if not pub_ids:
            logger.warning("candidate %s has no publications; scoring as zero vector", scholar_id)
            return {}
        acc: dict[str, float] = {}
        for pid in pub_ids:
            for token, value in self.doc_vectors_[pid].items():
                acc[token] = acc.get(token, 0.0) + value
        return {token: value / len(pub_ids) for token, value in acc.items()}

    def score(self, paper_id: SourceId, scholar_id: SourceId) -> float:
        self._check_fitted()
        query = self.doc_vectors_[paper_id]
        candidate = self.candidate_vector(scholar_id)
        return _cosine(query, candidate)


def _cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(value * b.get(token, 0.0) for token, value in a.items())
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


@dataclass(frozen=True)
class _Point:
    x: float
    y: float
    weight: float


def pav_fit(xs: Sequence[float], ys: Sequence[float], weights: Sequence[float] | None = None) -> list[tuple[float, float]]:
    """Weighted least-squares isotonic fit by pool adjacent violators.

    Ties in x are merged up front (weighted mean), so the fitted curve is a
    well-defined non-decreasing step function. Returns (x, fitted) pairs in
    ascending x order.
    """
    if len(xs) != len(ys) or not xs:
        raise ValueError("xs and ys must be non-empty and equal length")
    if weights is None:
        weights = [1.0] * len(xs)

    # Aggregate duplicate x values: weighted mean target with summed weight.
    agg: dict[float, tuple[float, float]] = {}
    for x, y, w in zip(xs, ys, weights):
        wy, tw = agg.get(float(x), (0.0, 0.0))
        agg[float(x)] = (wy + w * y, tw + w)
    points = [_Point(x, wy / tw, tw) for x, (wy, tw) in sorted(agg.items())]

    # Blocks of (weighted sum, weight, member count); merge while decreasing.
    blocks: list[list[float]] = []  # [sum_wy, sum_w, n_points]
    for point in points:
        blocks.append([point.y * point.weight, point.weight, 1])
        while len(blocks) > 1 and blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]:
            last = blocks.pop()
            blocks[-1][0] += last[0]
            blocks[-1][1] += last[1]
            blocks[-1][2] += last[2]

    fitted: list[tuple[float, float]] = []
    idx = 0
    for sum_wy, sum_w, count in blocks:
        value = sum_wy / sum_w
        for _ in range(count):
            fitted.append((points[idx].x, value))
            idx += 1
    return fitted


class IsotonicCalibrator(BaseEstimator, TransformerMixin):
    """Maps raw scores to [0, 1] via an isotonic step function.

    Prediction uses stepwise interpolation: a score takes the fitted value
    of the largest fitted x not exceeding it, and the boundary values
    extend constantly beyond the fitted range.
    """

    def fit(self, scores: Sequence[float], labels: Sequence[int]) -> "IsotonicCalibrator":
        if len(scores) != len(labels) or not scores:
            raise ValueError("scores and labels must be non-empty and equal length")
        fitted = pav_fit(list(scores), [float(v) for v in labels])
        self.xs_ = [x for x, _ in fitted]
        self.ys_ = [min(1.0, max(0.0, y)) for _, y in fitted]
        return self

    def transform(self, scores: Sequence[float]) -> list[float]:
        if not hasattr(self, "xs_"):
            raise NotFittedError("IsotonicCalibrator must be fit first")
        out = []
        for score in scores:
            idx = bisect.bisect_right(self.xs_, float(score)) - 1
            out.append(self.ys_[max(idx, 0)])
        return out

    def transform_one(self, score: float) -> float:
        return self.transform([score])[0]


def isotonic_calibrate(
    positive_scores: Sequence[float], negative_scores: Sequence[float]
) -> IsotonicCalibrator:
    """Fit a calibrator on known-match scores (label 1) vs known-distant
    scores (label 0)."""
    if not positive_scores or not negative_scores:
        raise ValueError("calibration needs at least one positive and one negative score")
    scores = list(negative_scores) + list(positive_scores)
    labels = [0] * len(negative_scores) + [1] * len(positive_scores)
    return IsotonicCalibrator().fit(scores, labels)
