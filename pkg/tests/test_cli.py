import os
from typing import NamedTuple, Sequence

import orjson
import pytest

from kgalign.__main__ import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_config, main
from kgalign.__args__ import parse_args
from kgalign.core import CANDIDATES_FILE, EMBEDDINGS_FILE, REPORT_FILE, SWEEP_FILE
from kgalign.similarity import Channel
from tests.test_util import TINY_CONFIG, TINY_DIR, TINY_VECTORS, StandardOutputCapture


TINY_RUN = ["-c", TINY_CONFIG, "-d", TINY_DIR, "-w", TINY_VECTORS, "-o", "{out}", "--epochs", "2"]


class Case(NamedTuple):
    argv: Sequence[str]
    want_lines: Sequence[str]
    want_code: int

    def __str__(self):
        return " ".join(self.argv)

    def resolve(self, out: str) -> Sequence[str]:
        return [arg.replace("{out}", out) for arg in self.argv]


CASES = [
    Case(["train", *TINY_RUN], ["Embeddings written to", "Loss"], EXIT_OK),
    Case(["candidates", *TINY_RUN], ["Candidates written to"], EXIT_OK),
    Case(["align", *TINY_RUN], ["Hits@1", "1.0000", "Report written to"], EXIT_OK),
    Case(["align", *TINY_RUN, "--ablate", "llm,edit", "--seed", "3"], ["Hits@1 (structural)"], EXIT_OK),
    Case(["synth", "-o", "{out}", "--entities", "12", "--triples", "30"], ["Dataset written to"], EXIT_OK),
    Case(["info"], ["kg-align"], EXIT_OK),
    Case(["align", "--ablate", "attention"], [], EXIT_USAGE),
    Case(["align", *TINY_RUN, "-b", "remote"], [], EXIT_USAGE),
    Case([], [], EXIT_USAGE),
    Case(["align", "-d", "/nonexistent/dataset", "-o", "{out}"], [], EXIT_USAGE),
    Case(["align", *TINY_RUN, "--workers", "0"], [], EXIT_USAGE),
    Case(["align", *TINY_RUN, "--ablate", "structural,name,edit"], [], EXIT_USAGE),
    Case(["synth", "-o", "{out}", "--entities", "12", "--triples", "5"], [], EXIT_USAGE),
]


@pytest.mark.parametrize("case", CASES)
def test_cli(case: Case, tmp_path):
    with StandardOutputCapture() as got_output_lines:
        got_code = main(case.resolve(str(tmp_path)))

    assert got_code == case.want_code
    output = "\n".join(got_output_lines)
    for want in case.want_lines:
        assert want in output


def test_help_exits_cleanly():
    with StandardOutputCapture():
        assert main(["--help"]) == EXIT_OK


def test_align_then_eval(tmp_path):
    argv = [arg.replace("{out}", str(tmp_path)) for arg in TINY_RUN]
    with StandardOutputCapture():
        assert main(["align", *argv]) == EXIT_OK
    report = (tmp_path / REPORT_FILE).read_bytes()
    assert os.path.isfile(tmp_path / CANDIDATES_FILE)
    assert os.path.isfile(tmp_path / EMBEDDINGS_FILE)

    with StandardOutputCapture():
        assert main(["eval", *argv]) == EXIT_OK
    assert (tmp_path / REPORT_FILE).read_bytes() == report


def test_eval_without_a_finished_run(tmp_path):
    argv = [arg.replace("{out}", str(tmp_path)) for arg in TINY_RUN]
    with StandardOutputCapture():
        assert main(["eval", *argv]) == EXIT_FAILURE


def test_sweep(tmp_path):
    argv = [arg.replace("{out}", str(tmp_path)) for arg in TINY_RUN]
    with StandardOutputCapture() as got_output_lines:
        assert main(["sweep", *argv, "--runs", "1", "--k-values", "2,3"]) == EXIT_OK

    assert any("Sweep means" in line for line in got_output_lines)
    document = orjson.loads((tmp_path / SWEEP_FILE).read_bytes())
    assert len(document["runs"]) == 2


def test_flags_override_the_configuration_file():
    args = parse_args(["align", "-c", TINY_CONFIG, "--dim", "16", "-k", "5", "--ablate", "name", "--ablate", "llm"])
    config = build_config(args)

    assert config.train.dim == 16
    assert config.train.epochs == 3
    assert config.channels.k == 5
    assert config.channels.enabled == (Channel.STRUCTURAL, Channel.EDIT)
    assert not config.channels.llm


def test_seed_flag_sets_every_seed():
    config = build_config(parse_args(["align", "--seed", "9"]))
    assert (config.split_seed, config.protocol_seed, config.train.rng_seed) == (9, 9, 9)
