import numpy as np
import pytest

from kgalign.errors import DatasetError
from kgalign.names import (
    WordVectorStore,
    embed_names,
    load_word_vectors,
    name_embedding,
    tokenize,
    write_word_vectors,
)
from tests.test_util import TINY_VECTORS


def test_tokenize():
    assert tokenize("Yangtze River") == ["yangtze", "river"]
    assert tokenize("Tim Berners-Lee (scientist)") == ["tim", "berners", "lee", "scientist"]
    assert tokenize("北京") == ["北京"]
    assert tokenize("  ") == []


def test_load_word_vectors():
    store = load_word_vectors(TINY_VECTORS)
    assert len(store) == 13
    assert store.dim == 6
    np.testing.assert_array_equal(store.vector("china"), [0, 0, 0, 1, 0, 0])


def test_load_word_vectors_with_vocabulary():
    store = load_word_vectors(TINY_VECTORS, vocabulary={"china", "北京", "unknown"})
    assert sorted(store.tokens) == ["china", "北京"]
    assert store.vectors.shape == (2, 6)


@pytest.mark.parametrize(
    "content, message",
    [
        ("a 1 2\nb 1\n", "expected 2 components"),
        ("a 1 2\na 3 4\n", "duplicate token"),
        ("a 1 x\n", "unparseable"),
        ("a\n", "no components"),
        ("a 1 2\n 3 4\n", "no token"),
    ],
)
def test_malformed_word_vectors(tmp_path, content, message):
    path = tmp_path / "vectors.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DatasetError, match=message):
        load_word_vectors(str(path))


def test_filtered_lines_are_still_validated(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("a 1 2\nb 1\n", encoding="utf-8")
    with pytest.raises(DatasetError, match=":2:"):
        load_word_vectors(str(path), vocabulary={"a"})


def test_tokens_may_contain_spaces(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("the 0.1 0.2 0.3\n. . . 0.4 0.5 0.6\nat&amp;t 0.7 0.8 0.9\n", encoding="utf-8")
    store = load_word_vectors(str(path))

    assert store.dim == 3
    assert ". . ." in store
    assert store.vector(". . .").tolist() == [0.4, 0.5, 0.6]
    assert store.vector("at&amp;t").tolist() == [0.7, 0.8, 0.9]


def test_name_embedding_averages_known_tokens():
    store = WordVectorStore({"new": 0, "york": 1}, np.array([[1.0, 0.0], [0.0, 3.0]]))

    embedded = name_embedding(store, "New York City")
    assert not embedded.oov
    np.testing.assert_allclose(embedded.vector, [0.5, 1.5])


def test_name_embedding_out_of_vocabulary():
    store = WordVectorStore({"new": 0}, np.array([[1.0, 2.0]]))

    embedded = name_embedding(store, "Atlantis")
    assert embedded.oov
    np.testing.assert_array_equal(embedded.vector, [0.0, 0.0])


def test_name_embedding_is_order_independent():
    store = load_word_vectors(TINY_VECTORS)
    np.testing.assert_array_equal(
        name_embedding(store, "Yellow River").vector, name_embedding(store, "River Yellow").vector
    )


def test_empty_store():
    store = WordVectorStore({}, np.zeros((0, 0)))
    assert store.dim is None
    with pytest.raises(DatasetError):
        name_embedding(store, "anything")


def test_name_embedding_stays_within_its_token_vectors():
    rng = np.random.default_rng(3)
    words = [f"w{i}" for i in range(12)]
    store = WordVectorStore({word: i for i, word in enumerate(words)}, rng.normal(size=(12, 5)))

    for _ in range(50):
        chosen = list(rng.choice(words, size=rng.integers(1, 6)))
        embedded = name_embedding(store, " ".join(chosen + ["unknown"]))
        vectors = np.vstack([store.vector(word) for word in chosen])

        assert not embedded.oov
        assert np.all(embedded.vector >= vectors.min(axis=0) - 1e-12)
        assert np.all(embedded.vector <= vectors.max(axis=0) + 1e-12)


def test_embed_names():
    store = load_word_vectors(TINY_VECTORS)
    matrix = embed_names(store, {14: "Yellow River", 10: "Beijing", 99: "Atlantis"})

    np.testing.assert_array_equal(matrix.entity_ids, [10, 14, 99])
    np.testing.assert_array_equal(matrix.oov, [False, False, True])
    np.testing.assert_allclose(matrix.rows[matrix.rows_of([14])[0]], [0, 0, 0, 0, 1, 0])
    with pytest.raises(KeyError):
        matrix.rows_of([11])


def test_write_word_vectors(tmp_path):
    path = str(tmp_path / "vectors.txt")
    write_word_vectors({"b": np.array([0.1, 0.2]), "a": np.array([1.0, -1.0])}, path)

    store = load_word_vectors(path)
    assert list(store.tokens) == ["a", "b"]
    np.testing.assert_array_equal(store.vector("b"), [0.1, 0.2])
