import os
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pytest

from kgalign.errors import DatasetError
from kgalign.graph import (
    AlignmentSeedSet,
    KgPair,
    KnowledgeGraph,
    Side,
    Triple,
    build_adjacency,
    display_name,
    load_dataset,
    parse_kg_files,
    parse_seed_pairs,
    short_name,
    split_seeds,
    write_dataset,
)
from tests.test_util import TINY_DIR, toy_pair


def write_lines(path: Path, lines: str) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        f.write(lines)
    return path


def test_load_tiny_dataset():
    pair, reference = load_dataset(TINY_DIR)

    assert len(pair.source.entities) == 6
    assert len(pair.target.relations) == 3
    assert len(pair.source.triples) == 7
    assert reference.as_dict() == {i: 10 + i for i in range(6)}
    assert pair.side_of(3) is Side.SOURCE
    assert pair.side_of(13) is Side.TARGET
    assert pair.name_of(12) == "http://dbpedia.org/resource/Yangtze_River"


def test_side_of_unknown_entity():
    pair, _ = load_dataset(TINY_DIR)
    with pytest.raises(KeyError):
        pair.side_of(99)


class BadFile(NamedTuple):
    triples: str
    want_line: int

    def __str__(self):
        return repr(self.triples)


BAD_TRIPLES = [
    BadFile("0\t0\t1\n1\t0\t7\n", 2),  # dangling entity
    BadFile("0\t0\t1\n\n0\t5\t1\n", 3),  # dangling relation
    BadFile("0\t0\n", 1),  # missing field
    BadFile("0\tx\t1\n", 1),  # not an integer
    BadFile("0\t0\t-1\n", 1),  # negative id
]


@pytest.mark.parametrize("case", BAD_TRIPLES, ids=str)
def test_parse_errors_carry_line_numbers(tmp_path, case: BadFile):
    entities = write_lines(tmp_path / "ent", "0\ta\n1\tb\n")
    relations = write_lines(tmp_path / "rel", "0\tr\n")
    triples = write_lines(tmp_path / "tri", case.triples)

    with pytest.raises(DatasetError) as raised:
        parse_kg_files(entities, relations, triples)

    assert raised.value.line == case.want_line
    assert f":{case.want_line}:" in str(raised.value)


def test_duplicate_entity_id(tmp_path):
    entities = write_lines(tmp_path / "ent", "0\ta\n0\tb\n")
    relations = write_lines(tmp_path / "rel", "0\tr\n")
    triples = write_lines(tmp_path / "tri", "")

    with pytest.raises(DatasetError, match="duplicate id 0"):
        parse_kg_files(entities, relations, triples)


def test_overlapping_entity_ids():
    graph = KnowledgeGraph(entities={0: "a"}, relations={0: "r"}, triples=())
    other = KnowledgeGraph(entities={0: "b"}, relations={1: "s"}, triples=())
    with pytest.raises(DatasetError, match="both graphs"):
        KgPair(source=graph, target=other)


def test_seed_pairs_must_be_one_to_one():
    with pytest.raises(DatasetError):
        AlignmentSeedSet(((0, 10), (1, 10)))
    with pytest.raises(DatasetError):
        AlignmentSeedSet(((0, 10), (0, 11)))


class BadSeeds(NamedTuple):
    lines: str
    want_line: int
    want_message: str

    def __str__(self):
        return self.want_message


BAD_SEEDS = [
    BadSeeds("0\t100\n1\t7\n", 2, "unknown target entity 7"),
    BadSeeds("42\t100\n", 1, "unknown source entity 42"),
    BadSeeds("0\t100\n0\t101\n", 2, "repeats an entity"),
    BadSeeds("0\t100\n1\t100\n", 2, "repeats an entity"),
]


def test_parse_seed_pairs(tmp_path):
    pair, _ = toy_pair()
    seeds = parse_seed_pairs(str(write_lines(tmp_path / "ref", "0\t100\n3\t103\n")), pair)
    assert seeds.pairs == ((0, 100), (3, 103))


@pytest.mark.parametrize("case", BAD_SEEDS, ids=str)
def test_seed_file_errors(tmp_path, case: BadSeeds):
    pair, _ = toy_pair()
    with pytest.raises(DatasetError, match=case.want_message) as raised:
        parse_seed_pairs(str(write_lines(tmp_path / "ref", case.lines)), pair)
    assert raised.value.line == case.want_line


def test_reference_with_unknown_entity(tmp_path):
    for name in os.listdir(TINY_DIR):
        with open(os.path.join(TINY_DIR, name), "rb") as src, open(tmp_path / name, "wb") as dst:
            dst.write(src.read())
    write_lines(tmp_path / "ref_ent_ids", "0\t10\n1\t3\n")

    with pytest.raises(DatasetError, match="unknown target entity 3"):
        load_dataset(str(tmp_path))


def test_split_seeds():
    seeds = AlignmentSeedSet(tuple((i, 1000 + i) for i in range(9)))
    train, test = split_seeds(seeds, 0.5, rng_seed=7)

    assert len(train) == 5  # 4.5 rounds half up
    assert len(test) == 4
    assert set(train.pairs) | set(test.pairs) == set(seeds.pairs)
    assert not set(train.pairs) & set(test.pairs)
    assert list(train.pairs) == sorted(train.pairs)


def test_split_seeds_is_deterministic():
    seeds = AlignmentSeedSet(tuple((i, 1000 + i) for i in range(50)))
    assert split_seeds(seeds, 0.3, 3) == split_seeds(seeds, 0.3, 3)
    assert split_seeds(seeds, 0.3, 3) != split_seeds(seeds, 0.3, 4)


def test_adjacency_edge_count():
    pair, _ = toy_pair()
    index = build_adjacency(pair.union)

    # forward and inverse edge per triple plus one self-loop per entity
    assert index.edge_count == 2 * 40 + 20
    assert index.total_relations == 2 * 6 + 1
    assert np.all(np.diff(index.offsets) >= 1)


def test_adjacency_edges_of_entity():
    kg = KnowledgeGraph(
        entities={0: "a", 1: "b", 2: "c"},
        relations={5: "r", 9: "s"},
        triples=(Triple(0, 5, 1), Triple(2, 9, 0)),
    )
    index = build_adjacency(kg)

    # ids are sparse: inverse ids add 10 (one past the largest id), the self-loop is 20
    assert index.edges_of(0) == [(0, 20), (1, 5), (2, 19)]
    assert index.edges_of(1) == [(0, 15), (1, 20)]
    assert index.edges_of(2) == [(0, 9), (2, 20)]

    # row space keeps dense indices: 5 and 9 are 0 and 1, inverses add 2, the self-loop is 4
    assert [index.relation_id(r) for r in range(index.total_relations)] == [5, 9, 15, 19, 20]
    assert index.relations[index.offsets[0] : index.offsets[1]].tolist() == [4, 0, 3]


def test_adjacency_of_isolated_entities():
    kg = KnowledgeGraph(entities={0: "a", 1: "b"}, relations={0: "r"}, triples=())
    index = build_adjacency(kg)
    assert index.edge_count == 2
    assert index.edges_of(1) == [(1, 2)]


class NameCase(NamedTuple):
    name: str
    clean: bool
    normalize: bool
    want: str

    def __str__(self):
        return self.name


NAME_CASES = [
    NameCase("http://dbpedia.org/resource/Tim_Berners-Lee", False, False, "Tim Berners-Lee"),
    NameCase("http://zh.dbpedia.org/resource/北京", False, False, "北京"),
    NameCase("http://dbpedia.org/resource/Paris_(Texas)", True, False, "Paris Texas"),
    NameCase("Plain  name", False, False, "Plain name"),
    NameCase("Café", False, True, "Café"),
]


@pytest.mark.parametrize("case", NAME_CASES, ids=str)
def test_display_name(case: NameCase):
    assert display_name(case.name, case.clean, case.normalize) == case.want


def test_short_name_keeps_non_uris():
    assert short_name("a/b") == "a/b"
    assert short_name("http://x.org/resource/A/") == "A"


def test_write_dataset_reloads(tmp_path):
    pair, reference = toy_pair()
    write_dataset(pair, reference, str(tmp_path))

    loaded, loaded_reference = load_dataset(str(tmp_path))
    assert loaded.source.triples == pair.source.triples
    assert loaded.target.entities == pair.target.entities
    assert loaded_reference == reference


@pytest.mark.skipif("DBP15K_DIR" not in os.environ, reason="DBP15K_DIR is not set")
def test_dbp15k_zh_en_english_side():
    pair, _ = load_dataset(os.path.join(os.environ["DBP15K_DIR"], "zh_en"))
    assert len(pair.target.entities) == 19572
    assert len(pair.target.relations) == 1323
    assert len(pair.target.triples) == 95142
