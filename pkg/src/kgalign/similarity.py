"""
Cross-graph similarity, top-k candidate extraction and edit-distance retrieval.

Every ranking in this module orders by score descending and breaks ties by ascending target id.
"""

from dataclasses import dataclass
from enum import Enum
import logging
from typing import Dict, Generator, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist


logger = logging.getLogger(__name__)


# Upper bound on the number of scores held by one similarity chunk
SCORE_CHUNK = 1 << 23


class Metric(Enum):
    COSINE = "cosine"
    NEGATIVE_L2 = "negative-l2"


class Channel(Enum):
    STRUCTURAL = "structural"
    NAME = "name"
    EDIT = "edit"


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    scores: np.ndarray
    metric: Metric
    source_ids: np.ndarray
    target_ids: np.ndarray

    def __post_init__(self) -> None:
        assert self.scores.shape == (len(self.source_ids), len(self.target_ids)), "scores must match id counts"

    def row(self, source_id: int) -> np.ndarray:
        matches = np.nonzero(self.source_ids == source_id)[0]
        if not len(matches):
            raise KeyError(source_id)
        return self.scores[matches[0]]


@dataclass(frozen=True)
class CandidateSet:
    source: int
    candidates: Tuple[Tuple[int, float], ...]
    channel: Channel

    @property
    def targets(self) -> Tuple[int, ...]:
        return tuple(target for target, _ in self.candidates)

    def __contains__(self, target: int) -> bool:
        return any(t == target for t, _ in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


def _scores(A: np.ndarray, B: np.ndarray, metric: Metric) -> np.ndarray:
    if metric is Metric.COSINE:
        a_norm = np.linalg.norm(A, axis=1, keepdims=True)
        b_norm = np.linalg.norm(B, axis=1, keepdims=True)
        # zero rows score 0 against everything
        a_unit = np.divide(A, a_norm, out=np.zeros_like(A, dtype=np.float64), where=a_norm > 0)
        b_unit = np.divide(B, b_norm, out=np.zeros_like(B, dtype=np.float64), where=b_norm > 0)
        return np.clip(a_unit @ b_unit.T, -1.0, 1.0)

    return -cdist(A, B, "euclidean")


def similarity_matrix(
    A: np.ndarray,
    B: np.ndarray,
    metric: Metric,
    source_ids: Optional[Sequence[int]] = None,
    target_ids: Optional[Sequence[int]] = None,
) -> SimilarityMatrix:
    """
    Score every row of ``A`` against every row of ``B``.

    Arguments
    =========
    A, B (np.ndarray)
        Source and target vectors, one per row, of equal dimension.
    metric (Metric)
        ``COSINE`` or ``NEGATIVE_L2`` (``-||a - b||``).
    source_ids, target_ids (Sequence[int]) [optional]
        Entity ids of the rows; positions are used when omitted.
    """
    A, B = np.atleast_2d(np.asarray(A, dtype=np.float64)), np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} != {B.shape[1]}")

    sources = np.arange(len(A)) if source_ids is None else np.asarray(source_ids, dtype=np.int64)
    targets = np.arange(len(B)) if target_ids is None else np.asarray(target_ids, dtype=np.int64)
    return SimilarityMatrix(_scores(A, B, metric), metric, sources, targets)


def similarity_chunks(
    A: np.ndarray,
    B: np.ndarray,
    metric: Metric,
    source_ids: Sequence[int],
    target_ids: Sequence[int],
) -> Generator[SimilarityMatrix, None, None]:
    """Yield the similarity matrix a block of source rows at a time."""
    source_ids = np.asarray(source_ids, dtype=np.int64)
    chunk = max(1, SCORE_CHUNK // max(1, len(B)))
    for start in range(0, len(A), chunk):
        yield similarity_matrix(A[start : start + chunk], B, metric, source_ids[start : start + chunk], target_ids)


def ranking(scores: np.ndarray, target_ids: np.ndarray) -> np.ndarray:
    """Column order by (score descending, target id ascending)."""
    return np.lexsort((target_ids, -scores))


def top_k_candidates(
    matrix: SimilarityMatrix, source: int, k: int, channel: Channel = Channel.STRUCTURAL
) -> CandidateSet:
    assert k >= 1, f"k must be at least 1, got {k}"

    scores = matrix.row(source)
    order = ranking(scores, matrix.target_ids)[:k]
    candidates = tuple((int(matrix.target_ids[c]), float(scores[c])) for c in order)
    return CandidateSet(int(source), candidates, channel)


class EditDistanceIndex:
    """
    Target names encoded once as a padded code-point matrix, so a query is scored against all
    of them with one vectorized dynamic-programming pass per query character.
    """

    def __init__(self, names: Mapping[int, str]) -> None:
        self.target_ids = np.array(sorted(names), dtype=np.int64)
        self.names = [names[int(i)] for i in self.target_ids]
        self.lengths = np.array([len(name) for name in self.names], dtype=np.int64)

        width = int(self.lengths.max()) if len(self.names) else 0
        self.codes = np.full((len(self.names), width), -1, dtype=np.int64)
        for row, name in enumerate(self.names):
            self.codes[row, : len(name)] = [ord(c) for c in name]

    def distances(self, query: str) -> np.ndarray:
        count, width = self.codes.shape
        columns = np.arange(width + 1)
        previous = np.tile(columns, (count, 1))

        for i, char in enumerate(query, start=1):
            cost = (self.codes != ord(char)).astype(np.int64)
            best = np.empty_like(previous)
            best[:, 0] = i
            best[:, 1:] = np.minimum(previous[:, 1:] + 1, previous[:, :-1] + cost)
            # insertions: current[j] = min over l <= j of best[l] + (j - l)
            previous = np.minimum.accumulate(best - columns, axis=1) + columns

        return previous[np.arange(count), self.lengths]

    def similarities(self, query: str) -> np.ndarray:
        longest = np.maximum(self.lengths, len(query))
        distances = self.distances(query)
        return np.where(longest == 0, 1.0, 1.0 - distances / np.maximum(longest, 1))

    def candidates(self, source: int, query: str, k: int) -> CandidateSet:
        assert k >= 1, f"k must be at least 1, got {k}"
        scores = self.similarities(query)
        order = ranking(scores, self.target_ids)[:k]
        return CandidateSet(source, tuple((int(self.target_ids[c]), float(scores[c])) for c in order), Channel.EDIT)


def edit_distance(s1: str, s2: str) -> int:
    """Levenshtein distance with unit costs, comparing code points."""
    return int(EditDistanceIndex({0: s2}).distances(s1)[0])


def edit_similarity(s1: str, s2: str) -> float:
    """``1 - d(s1, s2) / max(len(s1), len(s2))``; two empty strings are identical (1.0)."""
    longest = max(len(s1), len(s2))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(s1, s2) / longest


def edit_candidates(virtual_name: str, target_names: Mapping[int, str], k: int, source: int = -1) -> CandidateSet:
    """The ``k`` target names closest to a virtual entity name by edit similarity."""
    return EditDistanceIndex(target_names).candidates(source, virtual_name, k)


def format_candidates(candidate_set: CandidateSet) -> str:
    body = ",".join(f"{target}:{score!r}" for target, score in candidate_set.candidates)
    return f"{candidate_set.source}\t{candidate_set.channel.value}\t{body}"


def parse_candidates(line: str) -> CandidateSet:
    source, channel, body = line.rstrip("\n").split("\t")
    candidates = []
    for item in filter(None, body.split(",")):
        target, score = item.split(":", 1)
        candidates.append((int(target), float(score)))
    return CandidateSet(int(source), tuple(candidates), Channel(channel))


def write_candidates(path: str, candidate_sets: Iterable[CandidateSet]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(format_candidates(cs) + "\n" for cs in candidate_sets)


def read_candidates(path: str) -> Dict[int, Dict[Channel, CandidateSet]]:
    by_source: Dict[int, Dict[Channel, CandidateSet]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                cs = parse_candidates(line)
                by_source.setdefault(cs.source, {})[cs.channel] = cs
    return by_source


def candidate_union(
    sets: Mapping[Channel, CandidateSet], names: Mapping[int, str], channels: Sequence[Channel] = tuple(Channel)
) -> List[Tuple[int, str]]:
    """
    Deduplicated union of the candidate sets in channel order (structural, name, edit).  A target
    whose display name repeats an earlier candidate's name is dropped, since options must read
    differently to a language model.
    """
    union: List[Tuple[int, str]] = []
    seen_ids, seen_names = set(), set()
    for channel in channels:
        if channel not in sets:
            continue
        for target in sets[channel].targets:
            name = names[target]
            if target in seen_ids or name in seen_names:
                continue
            seen_ids.add(target)
            seen_names.add(name)
            union.append((target, name))
    return union
