"""
Synthetic knowledge-graph pairs for desk-scale runs.

The target graph is an isomorphic copy of a random source graph with permuted entity ids and
systematically transliterated names, so the complete reference alignment is known.
"""

import logging
import os
from typing import Dict, List, Set, Tuple

import numpy as np

from kgalign.errors import ConfigError
from kgalign.graph import AlignmentSeedSet, KgPair, KnowledgeGraph, Triple, display_name, write_dataset
from kgalign.names import tokenize, write_word_vectors


logger = logging.getLogger(__name__)


SOURCE_PREFIX = "http://source.example.org/"
TARGET_PREFIX = "http://target.example.org/"
WORD_VECTORS_FILE = "word_vectors.txt"

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
VOWEL_SHIFT = str.maketrans("aeiouAEIOU", "eiouaEIOUA")


def transliterate(word: str) -> str:
    """Rotate the vowels of a word (a to e, ..., u to a) and append "n"."""
    return word.translate(VOWEL_SHIFT) + "n"


def target_name(source_name: str) -> str:
    return "_".join(transliterate(word) for word in source_name.split("_"))


def _syllable(rng: np.random.Generator) -> str:
    return CONSONANTS[int(rng.integers(len(CONSONANTS)))] + VOWELS[int(rng.integers(len(VOWELS)))]


def _word(rng: np.random.Generator) -> str:
    return "".join(_syllable(rng) for _ in range(int(rng.integers(2, 4)))).capitalize()


def _names(count: int, rng: np.random.Generator) -> List[str]:
    names: List[str] = []
    seen: Set[str] = set()
    while len(names) < count:
        name = "_".join(_word(rng) for _ in range(int(rng.integers(1, 4))))
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _triples(entity_count: int, relation_count: int, triple_count: int, rng: np.random.Generator) -> List[Triple]:
    """A random spanning tree first, so the graph is connected, then uniformly drawn distinct triples."""
    triples: List[Triple] = []
    seen: Set[Triple] = set()

    def add(triple: Triple) -> None:
        if triple not in seen:
            seen.add(triple)
            triples.append(triple)

    for entity in range(1, entity_count):
        parent = int(rng.integers(entity))
        add(Triple(entity, int(rng.integers(relation_count)), parent))

    while len(triples) < triple_count:
        head, tail = (int(v) for v in rng.integers(entity_count, size=2))
        add(Triple(head, int(rng.integers(relation_count)), tail))
    return triples


def generate_synthetic_pair(
    entity_count: int, relation_count: int, triple_count: int, rng_seed: int
) -> Tuple[KgPair, AlignmentSeedSet]:
    """
    Build a random source graph and its isomorphic, renamed copy.

    Source entities take ids ``0 .. n-1`` and target entities ``n .. 2n-1`` in permuted order;
    relations take ``0 .. R-1`` and ``R .. 2R-1``.  The returned seed set is the full alignment.
    """
    if min(entity_count, relation_count, triple_count) < 1:
        raise ConfigError("entity, relation and triple counts must be positive")
    if triple_count < entity_count:
        raise ConfigError(f"need at least as many triples as entities, got {triple_count} < {entity_count}")
    if triple_count > entity_count * entity_count * relation_count:
        raise ConfigError(f"{triple_count} distinct triples do not fit {entity_count} entities")

    rng = np.random.default_rng(rng_seed)
    names = _names(entity_count, rng)
    triples = _triples(entity_count, relation_count, triple_count, rng)
    target_ids = entity_count + rng.permutation(entity_count)

    source = KnowledgeGraph(
        entities={i: f"{SOURCE_PREFIX}resource/{name}" for i, name in enumerate(names)},
        relations={r: f"{SOURCE_PREFIX}property/relation_{r}" for r in range(relation_count)},
        triples=tuple(triples),
    )
    target = KnowledgeGraph(
        entities={int(target_ids[i]): f"{TARGET_PREFIX}resource/{target_name(name)}" for i, name in enumerate(names)},
        relations={relation_count + r: f"{TARGET_PREFIX}property/relation_{r}n" for r in range(relation_count)},
        triples=tuple(Triple(int(target_ids[h]), relation_count + r, int(target_ids[t])) for h, r, t in triples),
    )

    reference = AlignmentSeedSet(tuple((i, int(target_ids[i])) for i in range(entity_count)))
    logger.info(
        "Generated synthetic pair: %i entities, %i relations, %i triples per graph",
        entity_count,
        relation_count,
        len(triples),
    )
    return KgPair(source=source, target=target), reference


def synthetic_word_vectors(pair: KgPair, dim: int, rng_seed: int, noise: float = 0.05) -> Dict[str, np.ndarray]:
    """
    Word vectors for every name token of a synthetic pair: each source token gets a random vector
    and its transliterated target token the same vector plus Gaussian noise.
    """
    if dim < 1:
        raise ConfigError(f"vector dimension must be positive, got {dim}")

    rng = np.random.default_rng([rng_seed, 2])
    vectors: Dict[str, np.ndarray] = {}
    tokens = sorted({token for name in pair.source.entities.values() for token in tokenize(display_name(name))})
    for token in tokens:
        vector = rng.standard_normal(dim)
        vectors[token] = vector
        vectors[transliterate(token)] = vector + noise * rng.standard_normal(dim)
    return vectors


def write_synthetic_dataset(
    directory: str,
    entity_count: int = 200,
    relation_count: int = 10,
    triple_count: int = 600,
    rng_seed: int = 0,
    vector_dim: int = 32,
) -> Tuple[KgPair, AlignmentSeedSet]:
    """Write a synthetic pair in the dataset layout, plus ``word_vectors.txt`` unless ``vector_dim`` is 0."""
    pair, reference = generate_synthetic_pair(entity_count, relation_count, triple_count, rng_seed)
    write_dataset(pair, reference, directory)
    if vector_dim:
        vectors = synthetic_word_vectors(pair, vector_dim, rng_seed)
        write_word_vectors(vectors, os.path.join(directory, WORD_VECTORS_FILE))
    return pair, reference
