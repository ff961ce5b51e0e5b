"""Embedding and summarization services with caching and an offline stub mode.

Real mode talks to HTTP JSON endpoints (bearer-token auth, retry with
backoff). Stub mode is fully deterministic: embeddings come from seeded
token hashing and summaries from fixed templates, so the whole pipeline
can run offline and reproducibly.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from .corpus import Publication
from .errors import ConfigError, ProviderError
from .util import atomic_write_text, sha256_text

logger = logging.getLogger(__name__)

PAPER_SUMMARY_MAX_WORDS = 180
CANDIDATE_SUMMARY_MAX_WORDS = 200
# Stub template budget: 1 marker word + title cap + abstract cap <= 180.
_STUB_TITLE_WORDS = 50
_STUB_ABSTRACT_WORDS = 120


def _load_asset(name: str) -> str:
    return (resources.files("revmatch") / "assets" / name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = ""
    model_name: str = "stub-model"
    api_key_env: str = "REVMATCH_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    retry_backoff: float = 0.5
    cache_dir: str | None = None
    stub_mode: bool = True
    stub_dim: int = 64

    def __post_init__(self) -> None:
        if self.stub_dim < 8:
            raise ConfigError(f"stub_dim must be >= 8, got {self.stub_dim}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass(frozen=True)
class SummaryText:
    text: str
    word_count: int

    @classmethod
    def of(cls, text: str) -> "SummaryText":
        return cls(text=text, word_count=len(text.split()))


@functools.lru_cache(maxsize=200_000)
def _token_vector(model_name: str, token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(
        hashlib.sha256(f"{model_name}\x1ftok\x1f{token}".encode("utf-8")).digest()[:8], "big"
    )
    vec = np.random.default_rng(seed).standard_normal(dim)
    vec.setflags(write=False)
    return vec


def _stub_embedding(model_name: str, text: str, dim: int) -> np.ndarray:
    """Bag-of-token-hashes embedding: shared tokens raise cosine similarity.

    A tiny whole-text component keeps distinct strings at distinct vectors
    even when their token multisets coincide.
    """
    acc = np.zeros(dim)
    for token in text.lower().split():
        acc += _token_vector(model_name, token, dim)
    salt_seed = int.from_bytes(
        hashlib.sha256(f"{model_name}\x1ffull\x1f{text}".encode("utf-8")).digest()[:8], "big"
    )
    acc += 1e-3 * np.random.default_rng(salt_seed).standard_normal(dim)
    return acc / np.linalg.norm(acc)


def first_sentence(text: str) -> str:
    idx = text.find(".")
    return text if idx < 0 else text[: idx + 1]


def select_representative_pubs(pubs: Sequence[Publication], per_list: int = 5) -> list[Publication]:
    """Union of the most cited and the most recent publications.

    Citation ties prefer newer work, recency ties prefer higher citations,
    and remaining ties go to the smaller publication id. The result keeps
    citation-ranked entries first and has between 1 and ``2 * per_list``
    members.
    """
    if not pubs:
        raise ValueError("cannot select representative publications: scholar has none")
    most_cited = sorted(pubs, key=lambda p: (-p.citation_count, -p.year, p.id))[:per_list]
    most_recent = sorted(pubs, key=lambda p: (-p.year, -p.citation_count, p.id))[:per_list]
    selected: list[Publication] = []
    seen = set()
    for pub in most_cited + most_recent:
        if pub.id not in seen:
            seen.add(pub.id)
            selected.append(pub)
    return selected


def joint_embedding(paper_vec: np.ndarray, candidate_vec: np.ndarray) -> np.ndarray:
    """Concatenate paper embedding then candidate embedding; no renormalization."""
    return np.concatenate([np.asarray(paper_vec, dtype=float), np.asarray(candidate_vec, dtype=float)])


class TextServiceClient:
    """Front door for embeddings and summaries, real or stubbed, with a disk cache."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self._session: requests.Session | None = None
        self._paper_system = _load_asset("paper_summary_system.txt")
        self._paper_user = _load_asset("paper_summary_user.txt")
        self._candidate_system = _load_asset("candidate_summary_system.txt")
        self._candidate_user = _load_asset("candidate_summary_user.txt")

    # ------------------------------------------------------------- embeddings

    def embed_text(self, text: str) -> np.ndarray:
        """Unit-norm embedding of ``text``; served from cache when present."""
        if not text or not text.strip():
            raise ValueError("embed_text requires non-empty text")
        cached = self._cache_get("embedding", text)
        if cached is not None:
            vec = np.asarray(cached["vector"], dtype=float)
            if self.config.stub_mode and vec.shape[0] != self.config.stub_dim:
                raise ProviderError(
                    f"cached embedding has dim {vec.shape[0]}, config expects {self.config.stub_dim}"
                )
            return vec
        if self.config.stub_mode:
            vec = _stub_embedding(self.config.model_name, text, self.config.stub_dim)
        else:
            vec = self._embed_remote(text)
        self._cache_put("embedding", text, {"vector": vec.tolist()})
        return vec

    def _embed_remote(self, text: str) -> np.ndarray:
        payload = {"model": self.config.model_name, "input": [text]}
        body = self._post("/embeddings", payload)
        try:
            raw = np.asarray(body["data"][0]["embedding"], dtype=float)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        norm = np.linalg.norm(raw)
        if not np.isfinite(norm) or norm == 0.0:
            raise ProviderError("embedding service returned a degenerate vector")
        return raw / norm

    # -------------------------------------------------------------- summaries

    def summarize_paper(self, pub: Publication) -> SummaryText:
        """Reviewer-oriented summary of one publication from title and abstract."""
        if not pub.title.strip():
            raise ValueError(f"publication {pub.id} has an empty title")
        payload_key = f"paper\x1f{pub.title}\x1f{pub.abstract or ''}"
        cached = self._cache_get("summary", payload_key)
        if cached is not None:
            return SummaryText.of(cached["text"])
        if self.config.stub_mode:
            title_part = " ".join(pub.title.split()[:_STUB_TITLE_WORDS])
            text = f"SUMMARY: {title_part}"
            abstract_words = (pub.abstract or "").split()[:_STUB_ABSTRACT_WORDS]
            if abstract_words:
                text += ". " + " ".join(abstract_words)
        else:
            user = self._paper_user.format(pub.title, pub.abstract or "")
            text = self._chat(self._paper_system, user)
        summary = SummaryText.of(text)
        if summary.word_count > PAPER_SUMMARY_MAX_WORDS:
            logger.warning(
                "paper summary for %s runs %d words (limit %d); keeping it",
                pub.id, summary.word_count, PAPER_SUMMARY_MAX_WORDS,
            )
        self._cache_put("summary", payload_key, {"text": summary.text})
        return summary

    def summarize_candidate(self, summaries: Sequence[SummaryText]) -> SummaryText:
        """Condense a candidate's publication summaries into one profile text."""
        if not summaries:
            raise ValueError("summarize_candidate requires at least one input summary")
        joined = "\n\n".join(s.text for s in summaries)
        cached = self._cache_get("summary", f"candidate\x1f{joined}")
        if cached is not None:
            return SummaryText.of(cached["text"])
        if self.config.stub_mode:
            words = " ".join(first_sentence(s.text) for s in summaries).split()
            text = " ".join(words[:CANDIDATE_SUMMARY_MAX_WORDS])
        else:
            text = self._chat(self._candidate_system, self._candidate_user.format(joined))
        summary = SummaryText.of(text)
        if summary.word_count > CANDIDATE_SUMMARY_MAX_WORDS:
            logger.warning(
                "candidate summary runs %d words (limit %d); keeping it",
                summary.word_count, CANDIDATE_SUMMARY_MAX_WORDS,
            )
        self._cache_put("summary", f"candidate\x1f{joined}", {"text": summary.text})
        return summary

    # ------------------------------------------------------------------ cache

    def _cache_path(self, kind: str, payload: str) -> Path | None:
        if self.config.cache_dir is None:
            return None
        key = hashlib.sha256(
            f"{kind}\x1f{self.config.model_name}\x1f{sha256_text(payload)}".encode("utf-8")
        ).hexdigest()
        return Path(self.config.cache_dir) / f"{key}.json"

    def _cache_get(self, kind: str, payload: str) -> dict | None:
        path = self._cache_path(kind, payload)
        if path is None or not path.exists():
            return None
        with path.open("r", encoding="utf-8") as fh:
            return json.load(fh)

    def _cache_put(self, kind: str, payload: str, obj: dict) -> None:
        path = self._cache_path(kind, payload)
        if path is None:
            return
        record = {"kind": kind, "model": self.config.model_name}
        record.update(obj)
        atomic_write_text(path, json.dumps(record, ensure_ascii=False, sort_keys=True))

    # ------------------------------------------------------------------- http

    def _chat(self, system: str, user: str) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        body = self._post("/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc

    def _post(self, route: str, payload: dict) -> dict:
        if not self.config.endpoint:
            raise ConfigError("provider endpoint is not configured for real mode")
        api_key = os.environ.get(self.config.api_key_env)
        if not api_key:
            raise ConfigError(f"environment variable {self.config.api_key_env} is not set")
        if self._session is None:
            self._session = requests.Session()
        url = self.config.endpoint.rstrip("/") + route
        headers = {"Authorization": f"Bearer {api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self._session.post(url, json=payload, headers=headers, timeout=self.config.timeout)
                if resp.status_code >= 500:
                    last_error = ProviderError(f"server error {resp.status_code} from {url}")
                elif resp.status_code >= 400:
                    raise ProviderError(f"request rejected ({resp.status_code}): {resp.text[:200]}")
                else:
                    return resp.json()
            except ProviderError:
                raise
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
            if attempt < self.config.max_retries:
                time.sleep(self.config.retry_backoff * (2 ** attempt))
        raise ProviderError(f"request to {url} failed after {self.config.max_retries + 1} attempts: {last_error}")


def embed_text(text: str, config: ProviderConfig) -> np.ndarray:
    return TextServiceClient(config).embed_text(text)


def summarize_paper(pub: Publication, config: ProviderConfig) -> SummaryText:
    return TextServiceClient(config).summarize_paper(pub)


def summarize_candidate(summaries: Iterable[SummaryText], config: ProviderConfig) -> SummaryText:
    return TextServiceClient(config).summarize_candidate(list(summaries))
