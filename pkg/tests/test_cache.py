import os
import shutil

import numpy as np

from kgalign.cache import dataset_digest, digest_of, load_cache, new_cache_context, update_cache
from kgalign.embedding import TrainConfig
from tests.test_util import TINY_DIR


def test_digest_is_stable_and_sensitive():
    assert digest_of("train", TrainConfig()) == digest_of("train", TrainConfig())
    assert digest_of("train", TrainConfig()) != digest_of("train", TrainConfig(epochs=13))
    assert digest_of({"b": 1, "a": 2}) == digest_of({"a": 2, "b": 1})
    assert digest_of(np.arange(3)) == digest_of([0, 1, 2])


def test_context_stem():
    context = new_cache_context("/tmp/cache", "train", "zh_en (DBP15K)", "digest")

    assert context.stem.startswith("train-zh-en-dbp15k-")
    assert len(context.stem) == len("train-zh-en-dbp15k-") + 16
    assert context.path("emb") == os.path.join("/tmp/cache", context.stem + ".emb")
    assert context.meta_path.endswith(".json")


def test_phase_name_is_part_of_the_digest():
    train = new_cache_context("/tmp/cache", "train", "tiny", "x")
    virtual = new_cache_context("/tmp/cache", "virtual", "tiny", "x")
    assert train.digest != virtual.digest


def test_update_and_load(tmp_path):
    context = new_cache_context(str(tmp_path / "cache"), "train", "tiny", 1, 2)
    assert not context.valid

    update_cache(context, {"final-loss": 0.25, "epoch-losses": np.array([1.0, 0.5])})
    assert context.valid
    assert load_cache(context) == {"final-loss": 0.25, "epoch-losses": [1.0, 0.5]}


def test_dataset_digest_follows_file_contents(tmp_path):
    copy = tmp_path / "tiny"
    shutil.copytree(TINY_DIR, copy)
    assert dataset_digest(str(copy)) == dataset_digest(TINY_DIR)

    with open(copy / "triples_1", "a", encoding="utf-8") as f:
        f.write("0\t0\t1\n")
    assert dataset_digest(str(copy)) != dataset_digest(TINY_DIR)
