"""File-based pipeline: every stage reads artifacts, writes artifacts.

Stages are deterministic given (config, seed, inputs). Each stage records a
manifest of input/output content hashes; a rerun whose manifest still
matches is skipped, and artifacts reference each other only through paths
relative to the stage directory so two runs with the same seed produce
byte-identical trees.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path, PurePosixPath
from typing import Callable, Mapping, Sequence

import numpy as np

from .baseline import IsotonicCalibrator, TfidfScorer, isotonic_calibrate
from .corpus import (
    Corpus,
    Publication,
    ReviewRecord,
    SourceId,
    load_corpus,
    save_corpus,
    validate_record,
)
from .errors import ConfigError, IntegrityError, ParseError, RevmatchError
from .linkage import LinkTable, corpus_view_by_tag, link_sources, normalize_title
from .metrics import evaluate_suite, save_reports
from .model import (
    ModelDims,
    MmoeModel,
    TrainConfig,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train_two_stage,
)
from .pools import (
    PoolConfig,
    Split,
    build_pools_for_corpus,
    build_training_pairs,
    ranking_pair_indices,
    stratified_split,
)
from .providers import (
    ProviderConfig,
    TextServiceClient,
    joint_embedding,
    select_representative_pubs,
)
from .synth import generate_synthetic_corpus, materialize_default_taxonomy
from .taxonomy import (
    Taxonomy,
    classify_corpus,
    load_assignments,
    most_distant_category,
    save_assignments,
)
from .util import atomic_write_text, canonical_json, derive_seed, sha256_file, sha256_text


class MissingPrerequisite(RevmatchError):
    """A stage input that an earlier stage should have produced is absent."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        super().__init__(f"missing prerequisite artifact: {self.path}")


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    jobs: int = 1
    # text service
    stub: bool = True
    stub_dim: int = 64
    endpoint: str = ""
    model_name: str = "stub-model"
    api_key_env: str = "REVMATCH_API_KEY"
    cache_dir: str = ""
    # synthetic corpus
    n_records: int = 200
    # linkage
    link_left_tag: str = "graph-source"
    link_right_tag: str = "registry"
    # candidate pools
    min_pubs_in_cstar: int = 2
    h_index_threshold: int = 3
    pool_size: int = 8
    # training data
    negatives_per_positive: int = 4
    unqualified_fraction: float = 0.5
    # model
    n_experts: int = 3
    expert_hidden_dim: int = 64
    expert_out_dim: int = 32
    tower_hidden_dim: int = 16
    epochs_total: int = 100
    stage_boundary: int = 50
    lambda_entropy: float = 0.01
    lambda_auc: float = 0.5
    margin: float = 1.0
    learning_rate: float = 0.1
    batch_size: int = 64
    entropy_bonus: bool = True


_TRUE_WORDS = {"true", "yes", "on", "1"}
_FALSE_WORDS = {"false", "no", "off", "0"}


def _convert(key: str, raw: str, kind: type):
    try:
        if kind is bool:
            word = raw.lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    defaults = PipelineConfig()
    kinds = {f.name: type(getattr(defaults, f.name)) for f in fields(PipelineConfig)}
    values: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
        if key not in kinds:
            raise ConfigError(f"{source}:{line_no}: unknown config key: {key}")
        values[key] = _convert(key, raw.strip(), kinds[key])
    return values


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = replace(cfg, **parse_config_text(path.read_text("utf-8"), source=path.name))
    live = {k: v for k, v in overrides.items() if v is not None}
    if live:
        cfg = replace(cfg, **live)
    return cfg


def config_hash(cfg: PipelineConfig) -> str:
    return sha256_text(canonical_json(asdict(cfg)))


def provider_config(cfg: PipelineConfig) -> ProviderConfig:
    return ProviderConfig(
        endpoint=cfg.endpoint,
        model_name=cfg.model_name,
        api_key_env=cfg.api_key_env,
        cache_dir=cfg.cache_dir or None,
        stub_mode=cfg.stub,
        stub_dim=cfg.stub_dim,
    )


# -------------------------------------------------------------------- paths

@dataclass(frozen=True)
class Paths:
    stage_dir: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_dir", Path(self.stage_dir))

    @property
    def corpus_dir(self) -> Path:
        return self.stage_dir / "corpus"

    @property
    def taxonomy(self) -> Path:
        return self.corpus_dir / "taxonomy.jsonl"

    @property
    def ingest_dir(self) -> Path:
        return self.stage_dir / "ingest"

    @property
    def ingest_report(self) -> Path:
        return self.ingest_dir / "report.json"

    @property
    def links(self) -> Path:
        return self.stage_dir / "link" / "links.jsonl"

    @property
    def assignments(self) -> Path:
        return self.stage_dir / "classify" / "assignments.jsonl"

    @property
    def pooled_records(self) -> Path:
        return self.stage_dir / "pools" / "records.jsonl"

    @property
    def splits_dir(self) -> Path:
        return self.stage_dir / "splits"

    @property
    def split_files(self) -> list[Path]:
        return [self.splits_dir / f"{name}.txt" for name in ("train", "val", "test")]

    @property
    def profiles(self) -> Path:
        return self.stage_dir / "profile" / "profiles.jsonl"

    @property
    def checkpoint(self) -> Path:
        return self.stage_dir / "train" / "model.ckpt"

    @property
    def loss_trace(self) -> Path:
        return self.stage_dir / "train" / "loss_trace.json"

    @property
    def report_json(self) -> Path:
        return self.stage_dir / "eval" / "report.json"

    @property
    def report_text(self) -> Path:
        return self.stage_dir / "eval" / "report.txt"

    @property
    def manifests_dir(self) -> Path:
        return self.stage_dir / "manifests"


def _corpus_files(directory: Path) -> list[Path]:
    return [directory / name for name in ("publications.jsonl", "scholars.jsonl", "records.jsonl")]


def _require(path: Path) -> None:
    if not path.exists():
        raise MissingPrerequisite(path)


# ---------------------------------------------------------------- manifests

def _hash_map(paths: Paths, files: Sequence[Path]) -> dict[str, str]:
    return {
        str(PurePosixPath(f.relative_to(paths.stage_dir))): sha256_file(f)
        for f in sorted(files)
    }


def _manifest_path(paths: Paths, stage: str) -> Path:
    return paths.manifests_dir / f"{stage}.json"


def stage_is_current(
    stage: str, cfg: PipelineConfig, paths: Paths, inputs: Sequence[Path], outputs: Sequence[Path]
) -> bool:
    manifest_file = _manifest_path(paths, stage)
    if not manifest_file.exists():
        return False
    try:
        manifest = json.loads(manifest_file.read_text("utf-8"))
    except json.JSONDecodeError:
        return False
    if manifest.get("config_hash") != config_hash(cfg) or manifest.get("seed") != cfg.seed:
        return False
    if any(not f.exists() for f in [*inputs, *outputs]):
        return False
    return manifest.get("inputs") == _hash_map(paths, inputs) and manifest.get(
        "outputs"
    ) == _hash_map(paths, outputs)


def write_manifest(
    stage: str, cfg: PipelineConfig, paths: Paths, inputs: Sequence[Path], outputs: Sequence[Path]
) -> None:
    payload = {
        "stage": stage,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "inputs": _hash_map(paths, inputs),
        "outputs": _hash_map(paths, outputs),
    }
    atomic_write_text(_manifest_path(paths, stage), canonical_json(payload) + "\n")


# ----------------------------------------------------------- record helpers

def save_records(records: Sequence[ReviewRecord], path: str | Path) -> None:
    lines = [json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_records(path: str | Path) -> list[ReviewRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ReviewRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path.name}:{line_no}: {exc}") from exc
    return records


def save_profiles(
    path: str | Path,
    paper_vectors: Mapping[SourceId, np.ndarray],
    scholar_vectors: Mapping[SourceId, np.ndarray],
) -> None:
    lines = []
    for kind, table in (("paper", paper_vectors), ("scholar", scholar_vectors)):
        for sid in sorted(table):
            row = {"kind": kind, "id": str(sid), "vector": [float(x) for x in table[sid]]}
            lines.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_profiles(
    path: str | Path,
) -> tuple[dict[SourceId, np.ndarray], dict[SourceId, np.ndarray]]:
    path = Path(path)
    papers: dict[SourceId, np.ndarray] = {}
    scholars: dict[SourceId, np.ndarray] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                tag, local_id = row["id"].split(":", 1)
                sid = SourceId(tag=tag, local_id=local_id)
                vec = np.asarray(row["vector"], dtype=float)
                table = {"paper": papers, "scholar": scholars}[row["kind"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path.name}:{line_no}: {exc}") from exc
            table[sid] = vec
    return papers, scholars


def merged_candidate_pubs(
    corpus: Corpus, scholar_id: SourceId, partner_ids: Sequence[SourceId]
) -> list[Publication]:
    """Own publications plus linked-identity ones, deduplicated by title.

    When two sources carry the same publication the copy with the smaller
    id wins, so the merge does not depend on link-table order.
    """
    pubs = list(corpus.publications_of(scholar_id))
    for pid in partner_ids:
        pubs.extend(corpus.publications_of(pid))
    by_title: dict[tuple[str, ...], Publication] = {}
    for pub in sorted(pubs, key=lambda p: p.id):
        key = normalize_title(pub.title)
        if key not in by_title:
            by_title[key] = pub
    return [by_title[key] for key in sorted(by_title)]


# ------------------------------------------------------------------- stages

def stage_synth(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    outputs = [paths.taxonomy, *_corpus_files(paths.corpus_dir)]
    if not force and stage_is_current("synth", cfg, paths, [], outputs):
        return False
    if not paths.taxonomy.exists():
        materialize_default_taxonomy(paths.taxonomy)
    taxonomy = Taxonomy.load(paths.taxonomy)
    client = TextServiceClient(provider_config(cfg))
    taxonomy.embed_nodes(client)
    corpus = generate_synthetic_corpus(taxonomy, client, cfg.n_records, cfg.seed)
    save_corpus(corpus, paths.corpus_dir)
    write_manifest("synth", cfg, paths, [], outputs)
    return True


def stage_ingest(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = _corpus_files(paths.corpus_dir)
    for f in inputs:
        _require(f)
    outputs = [*_corpus_files(paths.ingest_dir), paths.ingest_report]
    if not force and stage_is_current("ingest", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.corpus_dir)
    violations = [v for record in corpus.records for v in validate_record(record, corpus)]
    if violations:
        raise IntegrityError("; ".join(violations))
    save_corpus(corpus, paths.ingest_dir)
    by_tag: dict[str, int] = defaultdict(int)
    for profile in corpus.scholars:
        by_tag[profile.primary_id.tag] += 1
    report = {
        "publications": len(corpus.publications),
        "scholars": len(corpus.scholars),
        "records": len(corpus.records),
        "scholars_by_source": dict(sorted(by_tag.items())),
    }
    atomic_write_text(paths.ingest_report, canonical_json(report) + "\n")
    write_manifest("ingest", cfg, paths, inputs, outputs)
    return True


def stage_link(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = _corpus_files(paths.ingest_dir)
    for f in inputs:
        _require(f)
    outputs = [paths.links]
    if not force and stage_is_current("link", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.ingest_dir)
    left = corpus_view_by_tag(corpus, cfg.link_left_tag)
    right = corpus_view_by_tag(corpus, cfg.link_right_tag)
    table = link_sources(left, right, jobs=cfg.jobs)
    table.save(paths.links)
    write_manifest("link", cfg, paths, inputs, outputs)
    return True


def stage_classify(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = [*_corpus_files(paths.ingest_dir), paths.taxonomy]
    for f in inputs:
        _require(f)
    outputs = [paths.assignments]
    if not force and stage_is_current("classify", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.ingest_dir)
    taxonomy = Taxonomy.load(paths.taxonomy)
    client = TextServiceClient(provider_config(cfg))
    taxonomy.embed_nodes(client)
    assignments = classify_corpus(corpus, taxonomy, client, jobs=cfg.jobs)
    save_assignments(assignments, paths.assignments)
    write_manifest("classify", cfg, paths, inputs, outputs)
    return True


def stage_build_pools(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = [*_corpus_files(paths.ingest_dir), paths.taxonomy, paths.assignments]
    for f in inputs:
        _require(f)
    outputs = [paths.pooled_records, *paths.split_files]
    if not force and stage_is_current("build-pools", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.ingest_dir)
    taxonomy = Taxonomy.load(paths.taxonomy)
    client = TextServiceClient(provider_config(cfg))
    taxonomy.embed_nodes(client)
    assignments = load_assignments(paths.assignments)
    pool_config = PoolConfig(
        min_pubs_in_cstar=cfg.min_pubs_in_cstar,
        h_index_threshold=cfg.h_index_threshold,
        pool_size=cfg.pool_size,
        seed=cfg.seed,
        candidate_tag=cfg.link_left_tag,
    )
    records = build_pools_for_corpus(corpus, taxonomy, assignments, pool_config)
    save_records(records, paths.pooled_records)
    split = stratified_split(records, cfg.seed)
    split.save(paths.splits_dir)
    write_manifest("build-pools", cfg, paths, inputs, outputs)
    return True


def stage_profile(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = [*_corpus_files(paths.ingest_dir), paths.pooled_records, paths.links]
    for f in inputs:
        _require(f)
    outputs = [paths.profiles]
    if not force and stage_is_current("profile", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.ingest_dir)
    records = load_records(paths.pooled_records)
    links = LinkTable.load(paths.links)
    partners: dict[SourceId, list[SourceId]] = defaultdict(list)
    for entry in links.entries:
        partners[entry.left].append(entry.right)
        partners[entry.right].append(entry.left)
    client = TextServiceClient(provider_config(cfg))

    paper_vectors: dict[SourceId, np.ndarray] = {}
    for pid in sorted({r.paper_id for r in records}):
        summary = client.summarize_paper(corpus.publications[pid])
        paper_vectors[pid] = client.embed_text(summary.text)

    candidate_ids = sorted(
        {
            sid
            for record in records
            for sid in [*record.reviewer_ids, *record.unqualified_ids, *record.potential_ids]
        }
    )

    def profile_one(sid: SourceId) -> np.ndarray:
        pubs = merged_candidate_pubs(corpus, sid, partners.get(sid, []))
        representative = select_representative_pubs(pubs)
        summaries = [client.summarize_paper(pub) for pub in representative]
        text = client.summarize_candidate(summaries)
        return client.embed_text(text.text)

    if cfg.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            vectors = list(pool.map(profile_one, candidate_ids))
    else:
        vectors = [profile_one(sid) for sid in candidate_ids]
    scholar_vectors = dict(zip(candidate_ids, vectors))
    save_profiles(paths.profiles, paper_vectors, scholar_vectors)
    write_manifest("profile", cfg, paths, inputs, outputs)
    return True


def select_records(records: Sequence[ReviewRecord], ids: Sequence[SourceId]) -> list[ReviewRecord]:
    """Subset of ``records`` in file order; split files list ids, not order."""
    wanted = set(ids)
    return [r for r in records if r.paper_id in wanted]


def assemble_training_data(
    records: Sequence[ReviewRecord],
    paper_vectors: Mapping[SourceId, np.ndarray],
    scholar_vectors: Mapping[SourceId, np.ndarray],
    negatives_per_positive: int,
    seed: int,
    unqualified_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    pairs = build_training_pairs(records, negatives_per_positive, seed, unqualified_fraction)
    if not pairs:
        raise ValueError("no training pairs could be built from the given records")
    features = np.stack(
        [
            joint_embedding(paper_vectors[p.paper_id], scholar_vectors[p.candidate_id])
            for p in pairs
        ]
    )
    labels = np.array([p.label for p in pairs], dtype=float)
    return features, labels, ranking_pair_indices(pairs)


def train_config_from(cfg: PipelineConfig) -> TrainConfig:
    return TrainConfig(
        n_experts=cfg.n_experts,
        epochs_total=cfg.epochs_total,
        stage_boundary=cfg.stage_boundary,
        lambda_entropy=cfg.lambda_entropy,
        lambda_auc=cfg.lambda_auc,
        margin=cfg.margin,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        entropy_bonus=cfg.entropy_bonus,
    )


def stage_train(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = [paths.profiles, paths.pooled_records, *paths.split_files]
    for f in inputs:
        _require(f)
    outputs = [paths.checkpoint, paths.loss_trace]
    if not force and stage_is_current("train", cfg, paths, inputs, outputs):
        return False
    records = load_records(paths.pooled_records)
    split = Split.load(paths.splits_dir)
    train_records = select_records(records, split.train)
    paper_vectors, scholar_vectors = load_profiles(paths.profiles)
    features, labels, pair_index = assemble_training_data(
        train_records,
        paper_vectors,
        scholar_vectors,
        cfg.negatives_per_positive,
        cfg.seed,
        cfg.unqualified_fraction,
    )
    dims = ModelDims(
        input_dim=features.shape[1],
        expert_hidden_dim=cfg.expert_hidden_dim,
        expert_out_dim=cfg.expert_out_dim,
        tower_hidden_dim=cfg.tower_hidden_dim,
    )
    train_config = train_config_from(cfg)
    model = init_model(dims, cfg.n_experts, cfg.seed)
    result = train_two_stage(model, features, labels, pair_index, train_config)
    save_checkpoint(result.model, train_config, paths.checkpoint)
    atomic_write_text(
        paths.loss_trace, json.dumps(result.loss_trace, sort_keys=True, indent=2) + "\n"
    )
    write_manifest("train", cfg, paths, inputs, outputs)
    return True


def make_model_scorer(
    model: MmoeModel,
    paper_vectors: Mapping[SourceId, np.ndarray],
    scholar_vectors: Mapping[SourceId, np.ndarray],
) -> Callable[[SourceId, SourceId], tuple[float, float]]:
    def scorer(paper_id: SourceId, scholar_id: SourceId) -> tuple[float, float]:
        x = joint_embedding(paper_vectors[paper_id], scholar_vectors[scholar_id])
        confidence, rank_score, _ = forward(model, x)
        return confidence, rank_score

    return scorer


def fit_tfidf_calibrator(
    scorer: TfidfScorer,
    records: Sequence[ReviewRecord],
    corpus: Corpus,
    taxonomy: Taxonomy,
    assignments: Mapping[SourceId, tuple[str, float]],
    seed: int,
    candidate_tag: str,
) -> IsotonicCalibrator:
    """Calibrate raw cosine scores on ground-truth positives against
    scholars publishing only in the category least similar to the paper's."""
    scholars_by_leaf: dict[str, list[SourceId]] = defaultdict(list)
    for profile in sorted(corpus.scholars, key=lambda s: s.primary_id):
        sid = profile.primary_id
        if sid.tag != candidate_tag:
            continue
        leaves = {
            assignments[pid][0] for pid in profile.publication_ids if pid in assignments
        }
        for leaf in sorted(leaves):
            scholars_by_leaf[leaf].append(sid)

    positives: list[float] = []
    negatives: list[float] = []
    for record in records:
        for rid in sorted(record.reviewer_ids):
            positives.append(scorer.score(record.paper_id, rid))
        distant = most_distant_category(record.l3_category, taxonomy)
        excluded = set(record.reviewer_ids)
        candidates = [s for s in scholars_by_leaf.get(distant, []) if s not in excluded]
        quota = min(len(record.reviewer_ids), len(candidates))
        if quota == 0:
            continue
        rng = np.random.default_rng(derive_seed(seed, "calib", str(record.paper_id)))
        chosen = rng.choice(len(candidates), size=quota, replace=False)
        negatives.extend(scorer.score(record.paper_id, candidates[i]) for i in sorted(chosen))
    return isotonic_calibrate(positives, negatives)


def make_tfidf_scorer(
    scorer: TfidfScorer, calibrator: IsotonicCalibrator
) -> Callable[[SourceId, SourceId], tuple[float, float]]:
    def scoped(paper_id: SourceId, scholar_id: SourceId) -> tuple[float, float]:
        raw = scorer.score(paper_id, scholar_id)
        return calibrator.transform_one(raw), raw

    return scoped


def stage_evaluate(cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    inputs = [
        paths.checkpoint,
        paths.profiles,
        paths.pooled_records,
        *paths.split_files,
        *_corpus_files(paths.ingest_dir),
        paths.taxonomy,
        paths.assignments,
    ]
    for f in inputs:
        _require(f)
    outputs = [paths.report_json, paths.report_text]
    if not force and stage_is_current("evaluate", cfg, paths, inputs, outputs):
        return False
    corpus = load_corpus(paths.ingest_dir)
    records = load_records(paths.pooled_records)
    split = Split.load(paths.splits_dir)
    taxonomy = Taxonomy.load(paths.taxonomy)
    client = TextServiceClient(provider_config(cfg))
    taxonomy.embed_nodes(client)
    assignments = load_assignments(paths.assignments)
    model, _ = load_checkpoint(paths.checkpoint, expected_n_experts=cfg.n_experts)
    paper_vectors, scholar_vectors = load_profiles(paths.profiles)

    test_records = select_records(records, split.test)
    train_records = select_records(records, split.train)

    tfidf = TfidfScorer().fit(corpus)
    calibrator = fit_tfidf_calibrator(
        tfidf, train_records, corpus, taxonomy, assignments, cfg.seed, cfg.link_left_tag
    )
    reports = {
        "mmoe": evaluate_suite(make_model_scorer(model, paper_vectors, scholar_vectors), test_records),
        "tfidf": evaluate_suite(make_tfidf_scorer(tfidf, calibrator), test_records),
    }
    save_reports(reports, paths.report_json, paths.report_text)
    write_manifest("evaluate", cfg, paths, inputs, outputs)
    return True


STAGES: tuple[str, ...] = (
    "synth",
    "ingest",
    "link",
    "classify",
    "build-pools",
    "profile",
    "train",
    "evaluate",
)

_STAGE_FNS: dict[str, Callable[..., bool]] = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "link": stage_link,
    "classify": stage_classify,
    "build-pools": stage_build_pools,
    "profile": stage_profile,
    "train": stage_train,
    "evaluate": stage_evaluate,
}


def run_stage(name: str, cfg: PipelineConfig, paths: Paths, force: bool = False) -> bool:
    if name not in _STAGE_FNS:
        raise ConfigError(f"unknown stage: {name}")
    return _STAGE_FNS[name](cfg, paths, force=force)


def run_all(cfg: PipelineConfig, paths: Paths, force: bool = False) -> list[tuple[str, bool]]:
    return [(name, run_stage(name, cfg, paths, force=force)) for name in STAGES]
