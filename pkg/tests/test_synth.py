import os

import numpy as np
import pytest

from kgalign.errors import ConfigError
from kgalign.graph import display_name, load_dataset, short_name
from kgalign.names import load_word_vectors, tokenize
from kgalign.synth import (
    WORD_VECTORS_FILE,
    generate_synthetic_pair,
    synthetic_word_vectors,
    target_name,
    transliterate,
    write_synthetic_dataset,
)


def test_transliterate():
    assert transliterate("Baku") == "Bekan"
    assert transliterate("Paris") == "Perosn"
    assert target_name("Kona_Tive") == "Kunen_Tovin"


def test_synthetic_pair_sizes():
    pair, reference = generate_synthetic_pair(50, 4, 120, rng_seed=1)

    assert len(pair.source.entities) == len(pair.target.entities) == 50
    assert len(pair.source.relations) == len(pair.target.relations) == 4
    assert len(pair.source.triples) == len(set(pair.source.triples)) == 120
    assert len(reference) == 50
    assert sorted(pair.target.entities) == list(range(50, 100))


def test_target_is_an_isomorphic_copy():
    pair, reference = generate_synthetic_pair(30, 3, 70, rng_seed=2)
    mapping = reference.as_dict()

    mapped = {(mapping[h], r + 3, mapping[t]) for h, r, t in pair.source.triples}
    assert mapped == {tuple(triple) for triple in pair.target.triples}

    for source, target in reference:
        source_name = short_name(pair.source.entities[source])
        assert short_name(pair.target.entities[target]) == target_name(source_name)


def test_source_graph_is_connected():
    pair, _ = generate_synthetic_pair(40, 2, 40, rng_seed=3)
    neighbours = {entity: set() for entity in pair.source.entities}
    for h, _, t in pair.source.triples:
        neighbours[h].add(t)
        neighbours[t].add(h)

    seen, frontier = {0}, [0]
    while frontier:
        for nxt in neighbours[frontier.pop()] - seen:
            seen.add(nxt)
            frontier.append(nxt)
    assert len(seen) == 40


def test_generation_is_deterministic():
    first, _ = generate_synthetic_pair(20, 2, 50, rng_seed=5)
    second, _ = generate_synthetic_pair(20, 2, 50, rng_seed=5)
    assert first == second


@pytest.mark.parametrize(
    "entities, relations, triples, message",
    [
        (0, 2, 10, "must be positive"),
        (10, 2, 5, "at least as many triples"),
        (2, 1, 5, "do not fit"),
    ],
)
def test_invalid_counts(entities, relations, triples, message):
    with pytest.raises(ConfigError, match=message):
        generate_synthetic_pair(entities, relations, triples, rng_seed=0)


def test_word_vectors_cover_both_name_sets():
    pair, reference = generate_synthetic_pair(20, 2, 40, rng_seed=4)
    vectors = synthetic_word_vectors(pair, dim=8, rng_seed=4)

    for source, target in reference:
        for token in tokenize(display_name(pair.source.entities[source])):
            np.testing.assert_allclose(vectors[token], vectors[transliterate(token)], atol=0.5)
        for token in tokenize(display_name(pair.target.entities[target])):
            assert token in vectors

    with pytest.raises(ConfigError):
        synthetic_word_vectors(pair, dim=0, rng_seed=4)


def test_write_synthetic_dataset(tmp_path):
    directory = str(tmp_path / "synthetic")
    pair, reference = write_synthetic_dataset(directory, 25, 3, 60, rng_seed=6, vector_dim=4)

    loaded_pair, loaded_reference = load_dataset(directory)
    assert loaded_pair == pair
    assert loaded_reference == reference
    assert load_word_vectors(os.path.join(directory, WORD_VECTORS_FILE)).dim == 4

    skipped = str(tmp_path / "no-vectors")
    write_synthetic_dataset(skipped, 25, 3, 60, rng_seed=6, vector_dim=0)
    assert not os.path.exists(os.path.join(skipped, WORD_VECTORS_FILE))
