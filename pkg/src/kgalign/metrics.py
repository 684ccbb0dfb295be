"""
Evaluation: Hits@k, mean reciprocal rank, candidate hit rates and the alignment report.

Rankings follow the candidate convention (score descending, then target id ascending), so the rank
of a true target is one plus the number of targets ranked before it.
"""

from dataclasses import dataclass, field
from io import StringIO
import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
from rich.console import Console
from rich.table import Table

from kgalign.graph import AlignmentSeedSet
from kgalign.schema.report import PredictionEntry, ReportDocument, RoundStatistics, TrainSummary
from kgalign.similarity import CandidateSet, SimilarityMatrix


logger = logging.getLogger(__name__)


JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS

Predictions = Mapping[int, Optional[int]]


def truth_ranks(matrix: SimilarityMatrix, test: AlignmentSeedSet) -> np.ndarray:
    """
    1-based rank of every test pair's true target within its source row.  A true target missing
    from the matrix columns gets an infinite rank.
    """
    ranks = np.empty(len(test), dtype=np.float64)
    row_of = {int(s): i for i, s in enumerate(matrix.source_ids)}
    column_of = {int(t): j for j, t in enumerate(matrix.target_ids)}

    for n, (source, target) in enumerate(test):
        if source not in row_of:
            raise ValueError(f"no similarity row for test entity {source}")
        if target not in column_of:
            ranks[n] = np.inf
            continue

        scores = matrix.scores[row_of[source]]
        truth = scores[column_of[target]]
        ahead = np.count_nonzero(scores > truth) + np.count_nonzero((scores == truth) & (matrix.target_ids < target))
        ranks[n] = 1 + ahead
    return ranks


def hits_at_k(ranking_source: Union[SimilarityMatrix, Predictions], test: AlignmentSeedSet, k: int = 1) -> float:
    """
    Fraction of test pairs whose true target ranks within the top ``k`` of a similarity matrix, or
    equals the prediction when ``ranking_source`` maps source ids to predicted targets (``k`` = 1).
    """
    assert k >= 1, f"k must be at least 1, got {k}"
    if not len(test):
        return 0.0

    if isinstance(ranking_source, SimilarityMatrix):
        return float(np.mean(truth_ranks(ranking_source, test) <= k))

    assert k == 1, "a prediction list only supports Hits@1"
    missing = [s for s, _ in test if s not in ranking_source]
    if missing:
        raise ValueError(f"no prediction for test entity {missing[0]}")
    return sum(ranking_source[s] == t for s, t in test) / len(test)


def mean_reciprocal_rank(matrix: SimilarityMatrix, test: AlignmentSeedSet) -> float:
    if not len(test):
        return 0.0
    return float(np.mean(1.0 / truth_ranks(matrix, test)))


def candidate_hit_rate(candidates: Mapping[int, CandidateSet], test: AlignmentSeedSet) -> float:
    """Share of test pairs whose true target is in the source's candidate set."""
    if not len(test):
        return 0.0
    return sum(s in candidates and t in candidates[s] for s, t in test) / len(test)


def union_hit_rate(unions: Mapping[int, Sequence[int]], test: AlignmentSeedSet) -> float:
    if not len(test):
        return 0.0
    return sum(t in unions.get(s, ()) for s, t in test) / len(test)


@dataclass(frozen=True)
class PredictionRecord:
    source: int
    target: Optional[int]
    truth: int
    fallback: bool
    channels: Tuple[str, ...] = ()
    rounds: int = 0

    @property
    def correct(self) -> bool:
        return self.target == self.truth

    def entry(self) -> PredictionEntry:
        return {
            "source": self.source,
            "target": self.target,
            "truth": self.truth,
            "correct": self.correct,
            "fallback": self.fallback,
            "channels": list(self.channels),
            "rounds": self.rounds,
        }


def round_statistics(rounds: Iterable[int]) -> RoundStatistics:
    counts = list(rounds)
    if not counts:
        return {"total": 0, "mean": 0.0, "max": 0}
    return {"total": int(sum(counts)), "mean": float(np.mean(counts)), "max": int(max(counts))}


@dataclass
class AlignmentReport:
    dataset: str
    k: int
    channels: Tuple[str, ...]
    llm: bool
    backend: str
    train_pairs: int
    hits_at_1: float
    hits_at_10: float
    structural_hits_at_1: float
    mrr: float
    candidate_hit_rate: Dict[str, float]
    union_hit_rate: float
    predictions: Tuple[PredictionRecord, ...]
    parse_failures: int = 0
    name_oov: int = 0
    train: Optional[TrainSummary] = None
    runtime: Dict[str, float] = field(default_factory=dict)  # seconds per phase, kept out of the document

    def __post_init__(self) -> None:
        for name in ("hits_at_1", "hits_at_10", "structural_hits_at_1", "mrr", "union_hit_rate"):
            assert 0.0 <= getattr(self, name) <= 1.0, f"{name} outside [0, 1]"

    @property
    def test_pairs(self) -> int:
        return len(self.predictions)

    @property
    def fallbacks(self) -> int:
        return sum(p.fallback for p in self.predictions)

    def document(self) -> ReportDocument:
        doc: ReportDocument = {
            "dataset": self.dataset,
            "k": self.k,
            "channels": list(self.channels),
            "llm": self.llm,
            "backend": self.backend,
            "train-pairs": self.train_pairs,
            "test-pairs": self.test_pairs,
            "hits-at-1": self.hits_at_1,
            "hits-at-10": self.hits_at_10,
            "structural-hits-at-1": self.structural_hits_at_1,
            "mrr": self.mrr,
            "candidate-hit-rate": dict(self.candidate_hit_rate),
            "union-hit-rate": self.union_hit_rate,
            "fallbacks": self.fallbacks,
            "parse-failures": self.parse_failures,
            "name-oov": self.name_oov,
            "rounds": round_statistics(p.rounds for p in self.predictions if p.rounds),
            "predictions": [p.entry() for p in sorted(self.predictions, key=lambda p: p.source)],
        }
        if self.train is not None:
            doc["train"] = self.train
        return doc

    def to_json(self) -> bytes:
        return orjson.dumps(self.document(), option=JSON_OPTIONS)


def summary_table(report: AlignmentReport) -> Table:
    table = Table(title=f"Alignment of {report.dataset}", show_header=True, header_style="bold")
    table.add_column("Metric")
    table.add_column("Value", justify="right")

    rows: List[Tuple[str, str]] = [
        ("test pairs", str(report.test_pairs)),
        ("Hits@1", f"{report.hits_at_1:.4f}"),
        ("Hits@10 (structural)", f"{report.hits_at_10:.4f}"),
        ("Hits@1 (structural)", f"{report.structural_hits_at_1:.4f}"),
        ("MRR (structural)", f"{report.mrr:.4f}"),
    ]
    rows += [(f"{channel} candidate hit rate", f"{rate:.4f}") for channel, rate in report.candidate_hit_rate.items()]
    rows += [
        ("union hit rate", f"{report.union_hit_rate:.4f}"),
        ("fallbacks", str(report.fallbacks)),
        ("unparseable rounds", str(report.parse_failures)),
    ]

    for metric, value in rows:
        table.add_row(metric, value)
    return table


def summary_text(report: AlignmentReport) -> str:
    console = Console(file=StringIO(), width=80, record=True, color_system=None)
    console.print(summary_table(report))
    return console.export_text()
