"""
Content-addressed storage of phase outputs.

A phase result is stored under ``<cache_dir>/<slug>-<digest>.<ext>`` where the digest hashes every
input of the phase, so a changed input never reads a stale entry and re-running a later phase does
not repeat the earlier ones.
"""

from dataclasses import dataclass
import hashlib
import logging
import os
from typing import Any, Dict

import orjson
from slugify import slugify

from kgalign.graph import ENTITY_FILES, REFERENCE_FILE, RELATION_FILES, TRIPLE_FILES


logger = logging.getLogger(__name__)


DIGEST_LENGTH = 16
READ_BLOCK = 1 << 20


@dataclass(frozen=True)
class CacheContext:
    """Identifies one cached phase output."""

    cache_dir: str  # Path to cache directory
    phase: str  # Phase name, e.g. "train"
    label: str  # Human-readable part of the entry name, e.g. the dataset name
    digest: str  # sha256 hex digest of the phase inputs

    @property
    def stem(self) -> str:
        return slugify(f"{self.phase} {self.label}") + "-" + self.digest[:DIGEST_LENGTH]

    def path(self, ext: str) -> str:
        return os.path.join(self.cache_dir, f"{self.stem}.{ext}")

    @property
    def meta_path(self) -> str:
        return self.path("json")

    @property
    def valid(self) -> bool:
        """An entry is complete once its metadata file exists; it is written last."""
        return os.path.exists(self.meta_path)


def digest_of(*parts: Any) -> str:
    """sha256 over the canonical JSON encoding of ``parts`` (dataclasses and numpy arrays allowed)."""
    encoded = orjson.dumps(parts, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
    return hashlib.sha256(encoded).hexdigest()


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(READ_BLOCK), b""):
            sha.update(block)
    return sha.hexdigest()


def dataset_digest(directory: str) -> str:
    names = [*ENTITY_FILES, *RELATION_FILES, *TRIPLE_FILES, REFERENCE_FILE]
    return digest_of([(name, file_digest(os.path.join(directory, name))) for name in names])


def new_cache_context(cache_dir: str, phase: str, label: str, *inputs: Any) -> CacheContext:
    """
    Factory function for CacheContexts.

    Arguments
    ---------
    cache_dir (str)
        The cache directory.
    phase     (str)
        Name of the phase whose output is cached.
    label     (str)
        Readable suffix of the entry name.
    inputs    (Any)
        Everything the phase output depends on.
    """
    return CacheContext(cache_dir=cache_dir, phase=phase, label=label, digest=digest_of(phase, *inputs))


def update_cache(context: CacheContext, meta: Dict[str, Any]) -> None:
    """Write the metadata of an entry; payload files written through ``context.path`` must already exist."""
    os.makedirs(context.cache_dir, exist_ok=True)
    with open(context.meta_path, "wb") as f:
        f.write(orjson.dumps(meta, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY))
    logger.debug("Cached %s", context.meta_path)


def load_cache(context: CacheContext) -> Dict[str, Any]:
    assert context.valid, f"no cache entry at {context.meta_path}"
    with open(context.meta_path, "rb") as f:
        return orjson.loads(f.read())
