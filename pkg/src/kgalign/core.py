#!/usr/bin/env python3
# End-to-end alignment runs: knowledge embedding, candidate generation and language-model
# assisted prediction, followed by evaluation and reporting.

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
import logging
import os
import shutil
import time
from typing import Any, Callable, Dict, Generator, Iterable, List, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np
import orjson

from kgalign.cache import CacheContext, dataset_digest, load_cache, new_cache_context, update_cache
from kgalign.config import PipelineConfig
from kgalign.embedding import EmbeddingMatrix, fit, load_embeddings, save_embeddings, save_params
from kgalign.errors import ConfigError, DatasetError, PhaseError
from kgalign.graph import AlignmentSeedSet, KgPair, build_adjacency, display_name, load_dataset, split_seeds
from kgalign.llm import (
    LiveBackend,
    LlmBackend,
    NameOracleBackend,
    Outcome,
    Prediction,
    generate_virtual_entity,
    iterative_predict,
    transcript_records,
)
from kgalign.log import run_log
from kgalign.metrics import (
    JSON_OPTIONS,
    AlignmentReport,
    PredictionRecord,
    candidate_hit_rate,
    summary_text,
    truth_ranks,
    union_hit_rate,
)
from kgalign.names import NameEmbeddingMatrix, embed_names, load_word_vectors, tokenize
from kgalign.schema.report import SweepDocument, SweepRow, TrainSummary
from kgalign.similarity import (
    CandidateSet,
    Channel,
    EditDistanceIndex,
    Metric,
    candidate_union,
    read_candidates,
    similarity_chunks,
    top_k_candidates,
    write_candidates,
)


logger = logging.getLogger(__name__)


REPORT_FILE = "report.json"
SUMMARY_FILE = "summary.txt"
TIMINGS_FILE = "timings.json"
CANDIDATES_FILE = "candidates.tsv"
PREDICTIONS_FILE = "predictions.tsv"
TRANSCRIPTS_FILE = "transcripts.jsonl"
EMBEDDINGS_FILE = "embeddings.emb"
PARAMS_FILE = "params.ckpt"
SWEEP_FILE = "sweep.json"
CACHE_DIR = "cache"

T = TypeVar("T")
R = TypeVar("R")


@contextmanager
def phase(name: str, timings: Dict[str, float]) -> Generator[None, None, None]:
    """Time a pipeline phase and tag any failure inside it with the phase name."""
    logger.info("Phase %s started", name)
    start = time.perf_counter()
    try:
        yield
    except (ConfigError, PhaseError):
        raise
    except Exception as e:
        raise PhaseError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start
        logger.info("Phase %s took %.2f s", name, timings[name])


@dataclass
class AlignmentRun:
    """Everything a run has produced so far; phases fill it in order."""

    config: PipelineConfig
    out_dir: str
    cache_dir: str
    pair: KgPair
    reference: AlignmentSeedSet
    train: AlignmentSeedSet
    test: AlignmentSeedSet
    names: Dict[int, str]
    digest: str
    candidate_targets: np.ndarray
    timings: Dict[str, float] = field(default_factory=dict)
    embeddings: Optional[EmbeddingMatrix] = None
    train_summary: Optional[TrainSummary] = None
    structural_top: Dict[int, CandidateSet] = field(default_factory=dict)
    ranks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    candidates: Dict[Channel, Dict[int, CandidateSet]] = field(default_factory=dict)
    virtual: Dict[int, Optional[str]] = field(default_factory=dict)
    virtual_responses: Dict[int, List[str]] = field(default_factory=dict)
    predictions: Dict[int, Prediction] = field(default_factory=dict)
    name_oov: int = 0

    @property
    def label(self) -> str:
        return os.path.basename(os.path.normpath(self.config.dataset_dir))

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def parallel_map(function: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Map in a thread pool, keeping the input order."""
    if workers == 1 or len(items) < 2:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, items))


def prepare_run(config: PipelineConfig, cache_dir: Optional[str] = None) -> AlignmentRun:
    """Validate the configuration, load the dataset and split the reference alignment."""
    config.validate_paths()
    timings: Dict[str, float] = {}

    with phase("load", timings):
        pair, reference = load_dataset(config.dataset_dir)
        train, test = split_seeds(reference, config.train_fraction, config.split_seed)
        if not len(train):
            raise DatasetError(f"train fraction {config.train_fraction} leaves no training pairs")

        names = {
            entity: display_name(name, config.clean_names, config.normalize_names)
            for entity, name in pair.union.entities.items()
        }
        candidate_targets = np.setdiff1d(pair.target.entity_ids, train.targets)
        digest = dataset_digest(config.dataset_dir)

    os.makedirs(config.out_dir, exist_ok=True)
    logger.info("Split %i reference pairs into %i train and %i test pairs", len(reference), len(train), len(test))
    return AlignmentRun(
        config=config,
        out_dir=config.out_dir,
        cache_dir=cache_dir or os.path.join(config.out_dir, CACHE_DIR),
        pair=pair,
        reference=reference,
        train=train,
        test=test,
        names=names,
        digest=digest,
        candidate_targets=candidate_targets,
        timings=timings,
    )


def train_context(run: AlignmentRun) -> CacheContext:
    config = run.config
    return new_cache_context(
        run.cache_dir, "train", run.label, run.digest, config.train, config.train_fraction, config.split_seed
    )


def train_summary(meta: Mapping[str, Any]) -> TrainSummary:
    return {
        "initial-loss": meta["initial-loss"],
        "final-loss": meta["final-loss"],
        "epoch-losses": list(meta["epoch-losses"]),
        "seed-pairs": meta["seed-pairs"],
        "augmented-pairs": meta["augmented-pairs"],
    }


def train_phase(run: AlignmentRun) -> EmbeddingMatrix:
    """Train the structural embeddings, or reuse a cached training run with identical inputs."""
    config = run.config
    context = train_context(run)

    with phase("train", run.timings):
        if context.valid:
            logger.info("Reusing cached training run %s", context.stem)
            meta = load_cache(context)
            embeddings = load_embeddings(context.path("emb"), run.pair.entity_ids)
        else:
            result = fit(run.pair, run.train, config.train, build_adjacency(run.pair.union))
            embeddings = result.embeddings
            os.makedirs(run.cache_dir, exist_ok=True)
            save_embeddings(embeddings, context.path("emb"))
            save_params(result.params, context.path("ckpt"))
            meta = {
                "initial-loss": result.initial_loss,
                "final-loss": result.final_loss,
                "epoch-losses": result.epoch_losses,
                "seed-pairs": len(run.train),
                "augmented-pairs": len(result.seeds) - len(run.train),
            }
            update_cache(context, meta)

        shutil.copyfile(context.path("emb"), run.path(EMBEDDINGS_FILE))
        shutil.copyfile(context.path("ckpt"), run.path(PARAMS_FILE))

    run.embeddings = embeddings
    run.train_summary = train_summary(meta)
    return embeddings


def structural_pass(
    embeddings: EmbeddingMatrix, test: AlignmentSeedSet, target_ids: np.ndarray, k: int
) -> Tuple[Dict[int, CandidateSet], np.ndarray]:
    """Top-k structural candidates and the true-target rank of every test pair, one row block at a time."""
    candidates: Dict[int, CandidateSet] = {}
    ranks: List[np.ndarray] = []
    pairs = test.pairs

    offset = 0
    chunks = similarity_chunks(
        embeddings.vectors(test.sources), embeddings.vectors(target_ids), Metric.COSINE, test.sources, target_ids
    )
    for matrix in chunks:
        block = pairs[offset : offset + len(matrix.source_ids)]
        offset += len(block)
        for source, _ in block:
            candidates[source] = top_k_candidates(matrix, source, k, Channel.STRUCTURAL)
        ranks.append(truth_ranks(matrix, AlignmentSeedSet(block)))

    return candidates, np.concatenate(ranks) if ranks else np.zeros(0)


def name_embeddings(run: AlignmentRun) -> Tuple[NameEmbeddingMatrix, NameEmbeddingMatrix]:
    """Averaged word vectors of the test sources and candidate targets; counts names without a known token."""
    assert run.config.word_vectors, "name channel without word vectors"
    sources = run.test.sources
    vocabulary = {token for i in (*sources, *run.candidate_targets) for token in tokenize(run.names[int(i)])}
    store = load_word_vectors(run.config.word_vectors, vocabulary)

    source_names = embed_names(store, {int(i): run.names[int(i)] for i in sources})
    target_names = embed_names(store, {int(i): run.names[int(i)] for i in run.candidate_targets})
    run.name_oov = int(source_names.oov.sum() + target_names.oov.sum())
    return source_names, target_names


def name_channel(run: AlignmentRun) -> Dict[int, CandidateSet]:
    """
    Top-k targets by negative L2 distance between averaged word vectors.  Sources whose name has no
    known token get an empty set, and such targets are never proposed.
    """
    sources = run.test.sources
    source_names, target_names = name_embeddings(run)

    known = ~target_names.oov
    target_ids = target_names.entity_ids[known]
    sets = {int(s): CandidateSet(int(s), (), Channel.NAME) for s in source_names.entity_ids[source_names.oov]}
    if not len(target_ids):
        logger.warning("No candidate target has a known name token; the name channel is empty")
        return {int(s): CandidateSet(int(s), (), Channel.NAME) for s in sources}

    queried = source_names.entity_ids[~source_names.oov]
    rows = source_names.rows[~source_names.oov]
    for matrix in similarity_chunks(rows, target_names.rows[known], Metric.NEGATIVE_L2, queried, target_ids):
        for source in matrix.source_ids:
            sets[int(source)] = top_k_candidates(matrix, int(source), run.config.channels.k, Channel.NAME)
    return sets


def make_backend(config: PipelineConfig, reference: AlignmentSeedSet, names: Mapping[int, str]) -> LlmBackend:
    """The configured backend; the mock backend answers from the reference alignment."""
    llm = config.llm
    if llm.backend == "live":
        return LiveBackend(
            endpoint=llm.resolved_endpoint,
            model=llm.model,
            api_key=llm.api_key,
            timeout=llm.timeout,
            retries=llm.retries,
            backoff=llm.backoff,
            max_concurrency=llm.max_concurrency,
        )
    return NameOracleBackend({names[s]: names[t] for s, t in reference}, max_concurrency=llm.max_concurrency)


def demonstrations(run: AlignmentRun) -> List[Tuple[str, str]]:
    return [(run.names[s], run.names[t]) for s, t in run.train.pairs[: run.config.llm.demonstrations]]


def virtual_phase(run: AlignmentRun, backend: LlmBackend, cacheable: bool) -> None:
    """Ask the backend for a virtual equivalent entity of every test source."""
    config = run.config
    demos = demonstrations(run)
    sources = [int(s) for s in run.test.sources]
    context = new_cache_context(
        run.cache_dir,
        "virtual",
        run.label,
        run.digest,
        config.split_seed,
        config.train_fraction,
        config.clean_names,
        config.normalize_names,
        config.llm.backend,
        config.llm.model,
        config.llm.target_language,
        demos,
    )

    with phase("virtual", run.timings):
        if cacheable and context.valid:
            logger.info("Reusing cached virtual entities %s", context.stem)
            cached = load_cache(context)
            run.virtual = {int(s): cached["virtual"][str(s)] for s in sources}
            run.virtual_responses = {int(s): cached["responses"][str(s)] for s in sources}
            return

        def ask(source: int) -> Tuple[Optional[str], Tuple[str, ...]]:
            return generate_virtual_entity(
                backend, run.names[source], demos, config.llm.target_language, config.llm.parse_retries
            )

        answers = parallel_map(ask, sources, config.workers)
        run.virtual = {s: name for s, (name, _) in zip(sources, answers)}
        run.virtual_responses = {s: list(responses) for s, (_, responses) in zip(sources, answers)}
        if cacheable:
            update_cache(
                context,
                {
                    "virtual": {str(s): name for s, name in run.virtual.items()},
                    "responses": {str(s): responses for s, responses in run.virtual_responses.items()},
                },
            )


def edit_channel(run: AlignmentRun) -> Dict[int, CandidateSet]:
    index = EditDistanceIndex({int(t): run.names[int(t)] for t in run.candidate_targets})
    sets = {}
    for source, virtual_name in run.virtual.items():
        if virtual_name is None:
            sets[source] = CandidateSet(source, (), Channel.EDIT)
        else:
            sets[source] = index.candidates(source, virtual_name, run.config.channels.k)
    return sets


def candidates_phase(run: AlignmentRun, backend: Optional[LlmBackend] = None, cacheable: bool = True) -> None:
    """Fill the candidate sets of every enabled channel and write ``candidates.tsv``."""
    channels = run.config.channels
    assert run.embeddings is not None, "candidates need trained embeddings"

    with phase("candidates", run.timings):
        run.structural_top, run.ranks = structural_pass(
            run.embeddings, run.test, run.candidate_targets, channels.k
        )
        if channels.structural:
            run.candidates[Channel.STRUCTURAL] = run.structural_top
        if channels.name:
            run.candidates[Channel.NAME] = name_channel(run)

    if channels.edit and channels.llm:
        assert backend is not None, "the edit channel needs a backend"
        virtual_phase(run, backend, cacheable)
        with phase("edit", run.timings):
            run.candidates[Channel.EDIT] = edit_channel(run)
    elif channels.edit:
        logger.warning("The edit channel needs virtual entities from the language model; it stays empty")

    ordered = [sets[s] for s in sorted(run.test.sources.tolist()) for sets in run.candidates.values()]
    write_candidates(run.path(CANDIDATES_FILE), ordered)


def union_of(run: AlignmentRun, source: int) -> List[Tuple[int, str]]:
    sets = {channel: by_source[source] for channel, by_source in run.candidates.items() if source in by_source}
    return candidate_union(sets, run.names)


def _structural_best(run: AlignmentRun, source: int) -> Optional[int]:
    top = run.structural_top.get(source)
    return top.candidates[0][0] if top is not None and len(top) else None


def predict_phase(run: AlignmentRun, backend: Optional[LlmBackend]) -> None:
    """Resolve every test source with the elimination protocol, or take the best structural candidate."""
    config = run.config

    def predict(source: int) -> Prediction:
        best = _structural_best(run, source)
        if not config.channels.llm:
            return Prediction(source, best, False, ())

        union = union_of(run, source)
        if not union:
            return Prediction(source, best, best is not None, ())
        assert backend is not None
        return iterative_predict(
            backend, source, run.names[source], union, config.protocol_seed, best, config.llm.parse_retries
        )

    with phase("predict", run.timings):
        sources = [int(s) for s in run.test.sources]
        run.predictions = dict(zip(sources, parallel_map(predict, sources, config.workers)))
        write_predictions(run.path(PREDICTIONS_FILE), run.predictions.values())
        write_transcripts(run)


def write_predictions(path: str, predictions: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in sorted(predictions, key=lambda p: p.source):
            f.write(f"{p.source}\t{'' if p.target is None else p.target}\t{int(p.fallback)}\n")


def read_predictions(path: str) -> Dict[int, Tuple[Optional[int], bool]]:
    predictions: Dict[int, Tuple[Optional[int], bool]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise DatasetError("expected source, target and fallback fields", path, number)
            source, target, fallback = fields
            predictions[int(source)] = (int(target) if target else None, fallback == "1")
    return predictions


def write_transcripts(run: AlignmentRun) -> None:
    with open(run.path(TRANSCRIPTS_FILE), "wb") as f:
        for source in sorted(run.virtual):
            record = {
                "kind": "virtual-entity",
                "source": source,
                "responses": run.virtual_responses.get(source, []),
                "virtual_name": run.virtual[source],
            }
            f.write(orjson.dumps(record, option=orjson.OPT_SORT_KEYS) + b"\n")
        for source in sorted(run.predictions):
            for record in transcript_records(run.predictions[source]):
                f.write(orjson.dumps(record, option=orjson.OPT_SORT_KEYS) + b"\n")


def _channels_holding(run: AlignmentRun, source: int, target: Optional[int]) -> Tuple[str, ...]:
    if target is None:
        return ()
    return tuple(
        channel.value for channel, sets in run.candidates.items() if source in sets and target in sets[source]
    )


def build_report(
    run: AlignmentRun, round_counts: Optional[Mapping[int, int]] = None, parse_failures: Optional[int] = None
) -> AlignmentReport:
    """Assemble the report; round counts and parse failures come from the transcripts when not given."""
    config = run.config
    truth = run.test.as_dict()
    ranks = run.ranks

    records = tuple(
        PredictionRecord(
            source=source,
            target=p.target,
            truth=truth[source],
            fallback=p.fallback,
            channels=_channels_holding(run, source, p.target),
            rounds=round_counts.get(source, 0) if round_counts is not None else len(p.rounds),
        )
        for source, p in sorted(run.predictions.items())
    )
    unions = {int(s): [t for t, _ in union_of(run, int(s))] for s in run.test.sources}

    return AlignmentReport(
        dataset=run.label,
        k=config.channels.k,
        channels=tuple(channel.value for channel in run.candidates),
        llm=config.channels.llm,
        backend=config.llm.backend if config.channels.llm else "none",
        train_pairs=len(run.train),
        hits_at_1=sum(r.correct for r in records) / len(records) if records else 0.0,
        hits_at_10=float(np.mean(ranks <= 10)) if len(ranks) else 0.0,
        structural_hits_at_1=float(np.mean(ranks <= 1)) if len(ranks) else 0.0,
        mrr=float(np.mean(1.0 / ranks)) if len(ranks) else 0.0,
        candidate_hit_rate={
            channel.value: candidate_hit_rate(sets, run.test) for channel, sets in run.candidates.items()
        },
        union_hit_rate=union_hit_rate(unions, run.test),
        predictions=records,
        parse_failures=(
            parse_failures
            if parse_failures is not None
            else sum(r.outcome is Outcome.PARSE_FAILURE for p in run.predictions.values() for r in p.rounds)
        ),
        name_oov=run.name_oov,
        train=run.train_summary,
        runtime=dict(run.timings),
    )


def write_report(report: AlignmentReport, out_dir: str) -> None:
    with open(os.path.join(out_dir, REPORT_FILE), "wb") as f:
        f.write(report.to_json() + b"\n")
    with open(os.path.join(out_dir, SUMMARY_FILE), "w", encoding="utf-8") as f:
        f.write(summary_text(report))
    with open(os.path.join(out_dir, TIMINGS_FILE), "wb") as f:
        f.write(orjson.dumps(report.runtime, option=JSON_OPTIONS) + b"\n")


def run_training(config: PipelineConfig) -> AlignmentRun:
    """Load, split and train; writes the embeddings and parameter checkpoint."""
    run = prepare_run(config)
    train_phase(run)
    return run


def run_candidates(config: PipelineConfig, backend: Optional[LlmBackend] = None) -> AlignmentRun:
    """Everything up to and including candidate generation."""
    run = run_training(config)
    owned = backend is None and config.channels.llm and config.channels.edit
    if owned:
        backend = make_backend(config, run.reference, run.names)
    try:
        candidates_phase(run, backend, cacheable=owned)
    finally:
        if owned and backend is not None:
            backend.close()
    return run


def run_alignment(
    config: PipelineConfig, backend: Optional[LlmBackend] = None, cache_dir: Optional[str] = None
) -> AlignmentReport:
    """
    Execute every phase and write the run artifacts to ``config.out_dir``.

    Arguments
    =========
    config (PipelineConfig)
        The run configuration.
    backend (LlmBackend) [optional]
        A backend to use instead of the configured one; its answers are not cached.
    cache_dir (str) [optional]
        Phase cache shared between runs, ``<out_dir>/cache`` by default.

    Returns
    =======
    report (AlignmentReport)
        Metrics and per-entity predictions, also written as ``report.json`` and ``summary.txt``.
    """
    run = prepare_run(config, cache_dir)

    with run_log(run.out_dir):
        train_phase(run)

        owned = backend is None and config.channels.llm
        active = make_backend(config, run.reference, run.names) if owned else backend
        try:
            candidates_phase(run, active, cacheable=owned)
            predict_phase(run, active)
        finally:
            if owned and active is not None:
                active.close()

        with phase("report", run.timings):
            report = build_report(run)
            write_report(report, run.out_dir)

        logger.info(
            "Hits@1 %.4f, Hits@10 %.4f on %i test pairs", report.hits_at_1, report.hits_at_10, report.test_pairs
        )
    return report


def _rounds_from_transcripts(path: str) -> Tuple[Dict[int, int], int]:
    rounds: Dict[int, int] = {}
    failures = 0
    if not os.path.exists(path):
        return rounds, failures

    with open(path, "rb") as f:
        for line in f:
            record = orjson.loads(line)
            if record.get("kind") != "multi-choice":
                continue
            rounds[record["source"]] = rounds.get(record["source"], 0) + 1
            failures += record["outcome"] == Outcome.PARSE_FAILURE.value
    return rounds, failures


def evaluate_output(config: PipelineConfig) -> AlignmentReport:
    """
    Recompute the report of a finished run from the files in ``config.out_dir``: embeddings,
    candidates, predictions and transcripts.
    """
    run = prepare_run(config)
    timings = run.timings

    with phase("eval", timings):
        run.embeddings = load_embeddings(run.path(EMBEDDINGS_FILE), run.pair.entity_ids)
        context = train_context(run)
        if context.valid:
            run.train_summary = train_summary(load_cache(context))
        if config.channels.name:
            name_embeddings(run)
        run.structural_top, run.ranks = structural_pass(
            run.embeddings, run.test, run.candidate_targets, config.channels.k
        )

        for source, by_channel in read_candidates(run.path(CANDIDATES_FILE)).items():
            for channel, candidate_set in by_channel.items():
                run.candidates.setdefault(channel, {})[source] = candidate_set
        run.candidates = {c: run.candidates[c] for c in Channel if c in run.candidates}

        rounds, failures = _rounds_from_transcripts(run.path(TRANSCRIPTS_FILE))
        stored = read_predictions(run.path(PREDICTIONS_FILE))
        missing = [s for s in run.test.sources.tolist() if s not in stored]
        if missing:
            raise DatasetError(f"no prediction for test entity {missing[0]}", run.path(PREDICTIONS_FILE))

        tested = set(run.test.sources.tolist())
        run.predictions = {
            s: Prediction(s, target, fallback, ()) for s, (target, fallback) in stored.items() if s in tested
        }

        report = build_report(run, rounds, failures)
        write_report(report, run.out_dir)
    return report


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def run_sweep(
    config: PipelineConfig,
    runs: int = 5,
    k_values: Sequence[int] = (),
    fractions: Sequence[float] = (),
    backend: Optional[LlmBackend] = None,
) -> SweepDocument:
    """
    Repeat the pipeline over consecutive split seeds, each candidate count and each train fraction.
    Training runs are shared through one cache, so varying ``k`` never retrains.
    """
    if runs < 1:
        raise ConfigError(f"runs must be positive, got {runs}")
    k_values = tuple(k_values) or (config.channels.k,)
    fractions = tuple(fractions) or (config.train_fraction,)
    cache_dir = os.path.join(config.out_dir, CACHE_DIR)

    rows: List[SweepRow] = []
    for fraction in fractions:
        for run_index in range(runs):
            seed = config.split_seed + run_index
            for k in k_values:
                run_config = replace(
                    config.with_seed(seed),
                    train_fraction=fraction,
                    channels=replace(config.channels, k=k),
                    out_dir=os.path.join(config.out_dir, f"fraction-{fraction}-seed-{seed}-k-{k}"),
                )
                report = run_alignment(run_config, backend, cache_dir)
                rows.append(
                    {
                        "split-seed": seed,
                        "k": k,
                        "train-fraction": fraction,
                        "hits-at-1": report.hits_at_1,
                        "hits-at-10": report.hits_at_10,
                        "mrr": report.mrr,
                        "union-hit-rate": report.union_hit_rate,
                    }
                )

    mean: Dict[str, Dict[str, float]] = {}
    for fraction in fractions:
        for k in k_values:
            group = [row for row in rows if row["k"] == k and row["train-fraction"] == fraction]
            mean[f"k={k},fraction={fraction}"] = {
                metric: _mean([float(row[metric]) for row in group])  # type: ignore[literal-required]
                for metric in ("hits-at-1", "hits-at-10", "mrr", "union-hit-rate")
            }

    document: SweepDocument = {"runs": rows, "mean": mean}
    with open(os.path.join(config.out_dir, SWEEP_FILE), "wb") as f:
        f.write(orjson.dumps(document, option=JSON_OPTIONS) + b"\n")
    return document

