"""Averaged pretrained word vectors as name embeddings."""

from dataclasses import dataclass
import logging
import re
from typing import Collection, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from kgalign.errors import DatasetError
from kgalign.graph import lookup_rows


logger = logging.getLogger(__name__)


TOKEN_SEPARATORS = re.compile(r"[\s_\-,()]+")


@dataclass(frozen=True, eq=False)
class WordVectorStore:
    tokens: Dict[str, int]
    vectors: np.ndarray

    @property
    def dim(self) -> Optional[int]:
        """Vector dimension, undefined (None) for an empty store."""
        return self.vectors.shape[1] if self.tokens else None

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.tokens[token]]


class NameVector(NamedTuple):
    vector: np.ndarray
    oov: bool  # every token was out of vocabulary


@dataclass(frozen=True, eq=False)
class NameEmbeddingMatrix:
    rows: np.ndarray
    entity_ids: np.ndarray
    oov: np.ndarray

    def rows_of(self, entity_ids: Sequence[int]) -> np.ndarray:
        return lookup_rows(self.entity_ids, entity_ids)


def tokenize(name: str) -> List[str]:
    return [token for token in TOKEN_SEPARATORS.split(name.lower()) if token]


def load_word_vectors(path: str, vocabulary: Optional[Collection[str]] = None) -> WordVectorStore:
    """
    Read a space-separated word-vector text file (``token v1 ... vd`` per line).  The dimension comes
    from the first line; on later lines the last ``d`` fields are the vector and the rest, joined
    by single spaces, is the token, as some pretrained files have tokens such as ``". . ."``.

    Every line is validated; when ``vocabulary`` is given only its tokens are kept, which keeps
    memory bounded for large pretrained files.
    """
    tokens: Dict[str, int] = {}
    rows: List[np.ndarray] = []
    dim: Optional[int] = None

    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            fields = line.rstrip().split(" ")
            if not any(fields):
                continue

            if dim is None:
                dim = len(fields) - 1
                if dim < 1:
                    raise DatasetError("word vector line has no components", path, number)
            if len(fields) <= dim:
                raise DatasetError(f"expected {dim} components, got {len(fields) - 1}", path, number)

            token = " ".join(fields[:-dim])
            if not token:
                raise DatasetError("word vector line has no token", path, number)
            if token in tokens:
                raise DatasetError(f"duplicate token {token!r}", path, number)
            try:
                values = np.array(fields[-dim:], dtype=np.float64)
            except ValueError:
                raise DatasetError("unparseable number", path, number) from None

            # placeholder index marks the token as seen even when filtered out
            tokens[token] = -1
            if vocabulary is None or token in vocabulary:
                tokens[token] = len(rows)
                rows.append(values)

    kept = {token: index for token, index in tokens.items() if index >= 0}
    vectors = np.vstack(rows) if rows else np.zeros((0, dim or 0))
    logger.info("Loaded %i word vectors of dimension %s from %s", len(kept), dim, path)
    return WordVectorStore(kept, vectors)


def name_embedding(store: WordVectorStore, name: str) -> NameVector:
    """
    Mean of the vectors of the in-vocabulary tokens of ``name``.  Names without any known token get
    a zero vector flagged as out of vocabulary.
    """
    if store.dim is None:
        raise DatasetError("cannot embed names with an empty word-vector store")

    # sorted so that names with the same token multiset average in the same order
    known = sorted(token for token in tokenize(name) if token in store)
    if not known:
        return NameVector(np.zeros(store.dim), True)
    return NameVector(np.mean(np.vstack([store.vector(token) for token in known]), axis=0), False)


def embed_names(store: WordVectorStore, names: Mapping[int, str]) -> NameEmbeddingMatrix:
    """Embed a mapping of entity id to (display) name; rows follow ascending entity ids."""
    entity_ids = np.array(sorted(names), dtype=np.int64)
    embedded = [name_embedding(store, names[int(i)]) for i in entity_ids]
    rows = np.vstack([v.vector for v in embedded]) if embedded else np.zeros((0, store.dim or 0))
    oov = np.array([v.oov for v in embedded], dtype=bool)

    if oov.any():
        logger.warning("%i of %i names have no known token", int(oov.sum()), len(oov))
    return NameEmbeddingMatrix(rows, entity_ids, oov)


def write_word_vectors(vectors: Mapping[str, np.ndarray], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token in sorted(vectors):
            f.write(token + " " + " ".join(repr(float(v)) for v in vectors[token]) + "\n")
