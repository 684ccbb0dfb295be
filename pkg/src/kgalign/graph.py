"""
Knowledge graphs, alignment seeds and neighbor indices.

Datasets follow the DBP15K layout: a directory with ``ent_ids_{1,2}``, ``rel_ids_{1,2}``,
``triples_{1,2}`` and ``ref_ent_ids``, all UTF-8 and tab-separated.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
import logging
import math
import os
import re
from typing import Dict, Generator, Iterator, List, NamedTuple, Sequence, Tuple
import unicodedata

import numpy as np

from kgalign.errors import DatasetError


logger = logging.getLogger(__name__)


ENTITY_FILES = ("ent_ids_1", "ent_ids_2")
RELATION_FILES = ("rel_ids_1", "rel_ids_2")
TRIPLE_FILES = ("triples_1", "triples_2")
REFERENCE_FILE = "ref_ent_ids"

# Characters dropped from names when clean_names is on
NAME_NOISE_PATTERN = re.compile(r"[,;:!?()\[\]{}\"'«»“”]+")


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Side(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: Dict[int, str]
    relations: Dict[int, str]
    triples: Tuple[Triple, ...]

    def __post_init__(self) -> None:
        for ids, kind in ((self.entities, "entity"), (self.relations, "relation")):
            negative = [i for i in ids if i < 0]
            if negative:
                raise DatasetError(f"negative {kind} id {negative[0]}")

        for triple in self.triples:
            if triple.head not in self.entities or triple.tail not in self.entities:
                raise DatasetError(f"triple {tuple(triple)} references an unknown entity")
            if triple.relation not in self.relations:
                raise DatasetError(f"triple {tuple(triple)} references an unknown relation")

    @cached_property
    def entity_ids(self) -> np.ndarray:
        return np.array(sorted(self.entities), dtype=np.int64)

    @cached_property
    def relation_ids(self) -> np.ndarray:
        return np.array(sorted(self.relations), dtype=np.int64)


def lookup_rows(sorted_ids: np.ndarray, entity_ids: Sequence[int]) -> np.ndarray:
    """Positions of ``entity_ids`` in the ascending ``sorted_ids``; an id that is absent raises ``KeyError``."""
    ids = np.asarray(entity_ids, dtype=np.int64)
    rows = np.searchsorted(sorted_ids, ids)
    if len(ids):
        inside = rows < len(sorted_ids)
        missing = ~inside
        missing[inside] = sorted_ids[rows[inside]] != ids[inside]
        if missing.any():
            raise KeyError(f"unknown entity id {int(ids[missing][0])}")
    return rows


@dataclass(frozen=True)
class KgPair:
    """
    Two graphs whose entity and relation id spaces are disjoint, so the side of any id is
    recoverable.  Rows of every embedding matrix follow ``entity_ids`` (ascending ids of the union).
    """

    source: KnowledgeGraph
    target: KnowledgeGraph

    def __post_init__(self) -> None:
        shared = self.source.entities.keys() & self.target.entities.keys()
        if shared:
            raise DatasetError(f"entity id {min(shared)} appears in both graphs")

        shared = self.source.relations.keys() & self.target.relations.keys()
        if shared:
            raise DatasetError(f"relation id {min(shared)} appears in both graphs")

    def side_of(self, entity_id: int) -> Side:
        if entity_id in self.source.entities:
            return Side.SOURCE
        if entity_id in self.target.entities:
            return Side.TARGET
        raise KeyError(entity_id)

    def name_of(self, entity_id: int) -> str:
        graph = self.source if self.side_of(entity_id) is Side.SOURCE else self.target
        return graph.entities[entity_id]

    @cached_property
    def union(self) -> KnowledgeGraph:
        return KnowledgeGraph(
            entities={**self.source.entities, **self.target.entities},
            relations={**self.source.relations, **self.target.relations},
            triples=self.source.triples + self.target.triples,
        )

    @cached_property
    def entity_ids(self) -> np.ndarray:
        return self.union.entity_ids

    @cached_property
    def source_rows(self) -> np.ndarray:
        return np.searchsorted(self.entity_ids, self.source.entity_ids)

    @cached_property
    def target_rows(self) -> np.ndarray:
        return np.searchsorted(self.entity_ids, self.target.entity_ids)

    def rows_of(self, entity_ids: Sequence[int]) -> np.ndarray:
        return lookup_rows(self.entity_ids, entity_ids)


@dataclass(frozen=True)
class AlignmentSeedSet:
    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self) -> None:
        sources = [s for s, _ in self.pairs]
        targets = [t for _, t in self.pairs]
        if len(set(sources)) != len(sources):
            raise DatasetError("a source entity appears in more than one seed pair")
        if len(set(targets)) != len(targets):
            raise DatasetError("a target entity appears in more than one seed pair")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.pairs)

    @cached_property
    def sources(self) -> np.ndarray:
        return np.array([s for s, _ in self.pairs], dtype=np.int64)

    @cached_property
    def targets(self) -> np.ndarray:
        return np.array([t for _, t in self.pairs], dtype=np.int64)

    def as_dict(self) -> Dict[int, int]:
        return dict(self.pairs)


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """
    Edges in row space.  Entity rows follow ascending entity ids; relation indices are the dense
    position of a relation among the ascending relation ids, ``index + relation_count`` for the
    inverse direction, and ``2 * relation_count`` for the self-loop.

    Edges are sorted by (entity, neighbor, relation); ``offsets[i]:offsets[i + 1]`` slices the edges
    aggregated into entity row ``i``.

    Outside row space (``edges_of``, ``relation_id``) an edge carries a relation id: the graph's own
    id forward, ``id + relation_stride`` inverse and ``2 * relation_stride`` for the self-loop, where
    ``relation_stride`` is one past the largest relation id.  With dense ids this is ``id + |R|``.
    """

    entity_ids: np.ndarray
    relation_count: int
    heads: np.ndarray
    tails: np.ndarray
    relations: np.ndarray
    offsets: np.ndarray
    relation_ids: np.ndarray

    @property
    def entity_count(self) -> int:
        return len(self.entity_ids)

    @property
    def edge_count(self) -> int:
        return len(self.heads)

    @property
    def self_relation(self) -> int:
        return 2 * self.relation_count

    @property
    def total_relations(self) -> int:
        return 2 * self.relation_count + 1

    @property
    def relation_stride(self) -> int:
        return int(self.relation_ids.max()) + 1 if len(self.relation_ids) else 0

    def relation_id(self, index: int) -> int:
        """Relation id of a dense relation index."""
        assert 0 <= index < self.total_relations, f"relation index {index} out of range"
        if index == self.self_relation:
            return 2 * self.relation_stride
        if index >= self.relation_count:
            return int(self.relation_ids[index - self.relation_count]) + self.relation_stride
        return int(self.relation_ids[index])

    def edges_of(self, entity_id: int) -> List[Tuple[int, int]]:
        """(neighbor entity-id, relation id) edges of one entity, in index order."""
        row = int(np.searchsorted(self.entity_ids, entity_id))
        assert row < self.entity_count and self.entity_ids[row] == entity_id, f"unknown entity {entity_id}"
        lo, hi = self.offsets[row], self.offsets[row + 1]
        edges = zip(self.tails[lo:hi], self.relations[lo:hi])
        return [(int(self.entity_ids[t]), self.relation_id(int(r))) for t, r in edges]


def _read_fields(path: str, width: int) -> Generator[Tuple[int, List[str]], None, None]:
    """Yield (line number, tab-separated fields) for every non-blank line of a UTF-8 file."""
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip()
            if not line:
                continue

            fields = line.split("\t", width - 1)
            if len(fields) != width:
                raise DatasetError(f"expected {width} tab-separated fields, got {len(fields)}", path, number)

            yield number, fields


def _parse_id(value: str, path: str, number: int) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise DatasetError(f"{value!r} is not an integer id", path, number) from None

    if parsed < 0:
        raise DatasetError(f"negative id {parsed}", path, number)
    return parsed


def _parse_names(path: str) -> Dict[int, str]:
    names: Dict[int, str] = {}
    for number, (raw_id, name) in _read_fields(path, 2):
        entry_id = _parse_id(raw_id, path, number)
        if entry_id in names:
            raise DatasetError(f"duplicate id {entry_id}", path, number)
        names[entry_id] = name
    return names


def parse_kg_files(entity_file: str, relation_file: str, triple_file: str) -> KnowledgeGraph:
    """
    Parse one side of a dataset.

    Arguments
    =========
    entity_file (str)
        Lines of ``<id>\\t<name>``.
    relation_file (str)
        Lines of ``<id>\\t<name>``.
    triple_file (str)
        Lines of ``<head>\\t<relation>\\t<tail>``.

    Returns
    =======
    graph (KnowledgeGraph)
        The validated graph.  Errors carry the offending file and line number.
    """
    entities = _parse_names(entity_file)
    relations = _parse_names(relation_file)

    triples = []
    for number, fields in _read_fields(triple_file, 3):
        head, relation, tail = (_parse_id(field, triple_file, number) for field in fields)
        if head not in entities or tail not in entities:
            raise DatasetError(f"dangling entity id in triple {head, relation, tail}", triple_file, number)
        if relation not in relations:
            raise DatasetError(f"dangling relation id {relation}", triple_file, number)
        triples.append(Triple(head, relation, tail))

    logger.debug(
        "Parsed %s: %i entities, %i relations, %i triples", entity_file, len(entities), len(relations), len(triples)
    )
    return KnowledgeGraph(entities=entities, relations=relations, triples=tuple(triples))


def parse_seed_pairs(path: str, pair: KgPair) -> AlignmentSeedSet:
    seeds = []
    seen_sources, seen_targets = set(), set()
    for number, fields in _read_fields(path, 2):
        source, target = (_parse_id(field, path, number) for field in fields)
        if source not in pair.source.entities:
            raise DatasetError(f"unknown source entity {source}", path, number)
        if target not in pair.target.entities:
            raise DatasetError(f"unknown target entity {target}", path, number)
        if source in seen_sources or target in seen_targets:
            raise DatasetError(f"seed pair {source, target} repeats an entity", path, number)

        seen_sources.add(source)
        seen_targets.add(target)
        seeds.append((source, target))

    return AlignmentSeedSet(tuple(seeds))


def load_dataset(directory: str) -> Tuple[KgPair, AlignmentSeedSet]:
    """Load both graphs and the reference alignment from a DBP15K-style directory."""
    tables = (ENTITY_FILES, RELATION_FILES, TRIPLE_FILES)
    graphs = [parse_kg_files(*(os.path.join(directory, files[side]) for files in tables)) for side in (0, 1)]
    pair = KgPair(source=graphs[0], target=graphs[1])
    reference = parse_seed_pairs(os.path.join(directory, REFERENCE_FILE), pair)

    logger.info(
        "Loaded dataset %s: %i + %i entities, %i reference pairs",
        directory,
        len(pair.source.entities),
        len(pair.target.entities),
        len(reference),
    )
    return pair, reference


def split_seeds(
    seeds: AlignmentSeedSet, train_fraction: float, rng_seed: int
) -> Tuple[AlignmentSeedSet, AlignmentSeedSet]:
    """
    Randomly partition seeds into train and test sets.  ``|train| = round(fraction * |seeds|)``
    with halves rounded up; both partitions are sorted by source id.
    """
    assert 0 < train_fraction <= 1, f"train fraction {train_fraction} outside (0, 1]"

    train_count = int(math.floor(train_fraction * len(seeds) + 0.5))
    order = np.random.default_rng(rng_seed).permutation(len(seeds))
    pairs = seeds.pairs

    train = sorted(pairs[i] for i in order[:train_count])
    test = sorted(pairs[i] for i in order[train_count:])
    return AlignmentSeedSet(tuple(train)), AlignmentSeedSet(tuple(test))


def build_adjacency(kg: KnowledgeGraph) -> NeighborIndex:
    """
    Build the aggregation neighborhoods of every entity: a forward and an inverse edge per triple
    plus one self-loop per entity, giving ``2 * |T| + |E|`` edges.
    """
    entity_ids = kg.entity_ids
    relation_count = len(kg.relation_ids)

    if kg.triples:
        triples = np.array(kg.triples, dtype=np.int64)
        heads = np.searchsorted(entity_ids, triples[:, 0])
        tails = np.searchsorted(entity_ids, triples[:, 2])
        relations = np.searchsorted(kg.relation_ids, triples[:, 1])
    else:
        heads = tails = relations = np.zeros(0, dtype=np.int64)

    loops = np.arange(len(entity_ids), dtype=np.int64)
    edge_heads = np.concatenate([heads, tails, loops])
    edge_tails = np.concatenate([tails, heads, loops])
    edge_relations = np.concatenate(
        [relations, relations + relation_count, np.full(len(loops), 2 * relation_count, dtype=np.int64)]
    )

    order = np.lexsort((edge_relations, edge_tails, edge_heads))
    edge_heads, edge_tails, edge_relations = edge_heads[order], edge_tails[order], edge_relations[order]
    offsets = np.searchsorted(edge_heads, np.arange(len(entity_ids) + 1))

    return NeighborIndex(
        entity_ids=entity_ids,
        relation_count=relation_count,
        heads=edge_heads,
        tails=edge_tails,
        relations=edge_relations,
        offsets=offsets,
        relation_ids=kg.relation_ids,
    )


def short_name(name: str) -> str:
    """Strip a URI down to its final path segment; other names pass through."""
    if "://" in name:
        return name.rstrip("/").rsplit("/", 1)[-1]
    return name


def display_name(name: str, clean: bool = False, normalize: bool = False) -> str:
    """
    Human-readable form of an entity name, used in prompts and edit-distance comparison.

    URI prefixes are dropped and underscores become spaces.  ``clean`` also removes punctuation
    that tends to derail language models; ``normalize`` applies NFC normalization.
    """
    text = short_name(name).replace("_", " ")
    if clean:
        text = NAME_NOISE_PATTERN.sub(" ", text)
    if normalize:
        text = unicodedata.normalize("NFC", text)
    return " ".join(text.split())


def write_graph(kg: KnowledgeGraph, entity_file: str, relation_file: str, triple_file: str) -> None:
    with open(entity_file, "w", encoding="utf-8") as f:
        f.writelines(f"{i}\t{kg.entities[i]}\n" for i in sorted(kg.entities))

    with open(relation_file, "w", encoding="utf-8") as f:
        f.writelines(f"{i}\t{kg.relations[i]}\n" for i in sorted(kg.relations))

    with open(triple_file, "w", encoding="utf-8") as f:
        f.writelines(f"{h}\t{r}\t{t}\n" for h, r, t in kg.triples)


def write_seed_pairs(seeds: AlignmentSeedSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(f"{s}\t{t}\n" for s, t in seeds)


def write_dataset(pair: KgPair, reference: AlignmentSeedSet, directory: str) -> None:
    """Write a pair and its reference alignment in the layout read by load_dataset."""
    os.makedirs(directory, exist_ok=True)
    for side, graph in enumerate((pair.source, pair.target)):
        write_graph(
            graph,
            os.path.join(directory, ENTITY_FILES[side]),
            os.path.join(directory, RELATION_FILES[side]),
            os.path.join(directory, TRIPLE_FILES[side]),
        )
    write_seed_pairs(reference, os.path.join(directory, REFERENCE_FILE))
