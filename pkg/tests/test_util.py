from io import StringIO
import os
import sys
from typing import Dict, List, Tuple

from kgalign.graph import AlignmentSeedSet, KgPair, KnowledgeGraph, Triple


TESTS_DIR = os.path.dirname(os.path.realpath(__file__))
SAMPLES_DIR = os.path.join(TESTS_DIR, "samples")
TINY_DIR = os.path.join(SAMPLES_DIR, "tiny")
TINY_VECTORS = os.path.join(TINY_DIR, "word_vectors.txt")
TINY_CONFIG = os.path.join(TINY_DIR, "run.toml")

# display names of the tiny sample, source id -> (source name, target name)
TINY_NAMES: Dict[int, Tuple[str, str]] = {
    0: ("北京", "Beijing"),
    1: ("上海", "Shanghai"),
    2: ("长江", "Yangtze River"),
    3: ("中国", "China"),
    4: ("黄河", "Yellow River"),
    5: ("孔子", "Confucius"),
}


class StandardOutputCapture(list):
    def __enter__(self):
        self._stdout = sys.stdout
        sys.stdout = self._stringio = StringIO()
        return self

    def __exit__(self, *args):
        self.extend(self._stringio.getvalue().splitlines())
        del self._stringio
        sys.stdout = self._stdout

    def __eq__(self, other):
        return list(self) == list(other)

    def __ne__(self, other):
        return list(self) != list(other)


def mirrored_pair(triples: List[Tuple[int, int, int]], entity_count: int, relation_count: int) -> KgPair:
    """A source graph and its copy with entity ids shifted by 100 and relation ids by ``relation_count``."""
    source = KnowledgeGraph(
        entities={i: f"e{i}" for i in range(entity_count)},
        relations={r: f"r{r}" for r in range(relation_count)},
        triples=tuple(Triple(*t) for t in triples),
    )
    target = KnowledgeGraph(
        entities={100 + i: f"E{i}" for i in range(entity_count)},
        relations={relation_count + r: f"R{r}" for r in range(relation_count)},
        triples=tuple(Triple(100 + h, relation_count + r, 100 + t) for h, r, t in triples),
    )
    return KgPair(source=source, target=target)


def mirrored_seeds(entity_count: int) -> AlignmentSeedSet:
    return AlignmentSeedSet(tuple((i, 100 + i) for i in range(entity_count)))


def toy_pair() -> Tuple[KgPair, AlignmentSeedSet]:
    """10 + 10 entities, 3 relations, 20 triples per graph."""
    # fmt: off
    triples = [
        (0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 4), (4, 2, 5),
        (5, 2, 6), (6, 0, 7), (7, 1, 8), (8, 2, 9), (9, 0, 0),
        (0, 1, 5), (1, 2, 6), (2, 0, 7), (3, 2, 8), (4, 0, 9),
        (5, 1, 0), (6, 2, 1), (7, 0, 3), (8, 1, 2), (9, 2, 4),
    ]
    # fmt: on
    return mirrored_pair(triples, 10, 3), mirrored_seeds(10)
