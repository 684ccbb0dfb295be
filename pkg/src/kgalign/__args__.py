"""Align the entities of two knowledge graphs with structural embeddings and a language model."""

from argparse import SUPPRESS, ArgumentParser, ArgumentTypeError, Namespace
from logging import getLogger
from typing import List, Optional, Sequence

from rich_argparse import ArgumentDefaultsRichHelpFormatter as ArgumentDefaultsHelpFormatter

from kgalign import __issues__, __repository__, __version__
from kgalign.config import ABLATIONS, BACKENDS


logger = getLogger(__name__)


RICH_EPILOG = (
    f"[grey50]Version {__version__}[/] | "
    f"[dark_cyan][link={__repository__}]{__repository__}[/][/] | "
    f"[dark_cyan][link={__issues__}]{__issues__}[/][/]"
)

PLAIN_EPILOG = f"Version {__version__} | {__repository__} | {__issues__}"

COMMANDS = ("train", "candidates", "align", "eval", "synth", "sweep", "info")


def comma_list(value: str) -> List[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise ArgumentTypeError("expected a comma-separated list")
    return items


def int_list(value: str) -> List[int]:
    try:
        return [int(item) for item in comma_list(value)]
    except ValueError:
        raise ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def float_list(value: str) -> List[float]:
    try:
        return [float(item) for item in comma_list(value)]
    except ValueError:
        raise ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from None


def ablation_list(value: str) -> List[str]:
    names = comma_list(value)
    unknown = [name for name in names if name not in ABLATIONS]
    if unknown:
        raise ArgumentTypeError(f"unknown ablation {unknown[0]!r}, choose from {', '.join(ABLATIONS)}")
    return names


def run_options() -> ArgumentParser:
    """Options shared by every subcommand that runs the pipeline.  Unset options keep config-file values."""
    parser = ArgumentParser(add_help=False)

    group_data = parser.add_argument_group("Data Options")
    group_data.add_argument("-c", "--config", metavar="FILE", default=SUPPRESS, help="TOML configuration file")
    group_data.add_argument("-d", "--dataset-dir", metavar="DIR", help="DBP15K-style dataset directory")
    group_data.add_argument("-w", "--word-vectors", metavar="FILE", help="pretrained word-vector text file")
    group_data.add_argument("-o", "--out", metavar="DIR", help="output directory for artifacts")
    group_data.add_argument("--train-fraction", metavar="F", type=float, help="share of reference pairs used as seeds")
    group_data.add_argument("--seed", type=int, help="seed for the split, training and the protocol")
    group_data.add_argument("--clean-names", action="store_true", default=None, help="strip punctuation from names")
    group_data.add_argument("--normalize-names", action="store_true", default=None, help="NFC-normalize names")

    group_train = parser.add_argument_group("Training Options")
    group_train.add_argument("--epochs", type=int, help="training epochs")
    group_train.add_argument("--dim", type=int, help="embedding dimension")
    group_train.add_argument("--layers", type=int, help="attention layers")
    group_train.add_argument("--batch-size", type=int, help="seed pairs per optimizer step")
    group_train.add_argument("--learning-rate", metavar="LR", type=float, help="RMSProp learning rate")

    group_align = parser.add_argument_group("Alignment Options")
    group_align.add_argument("-k", "--k", type=int, help="candidates per channel")
    group_align.add_argument("-b", "--backend", choices=BACKENDS, help="language-model backend")
    group_align.add_argument(
        "-a",
        "--ablate",
        metavar="NAMES",
        type=ablation_list,
        action="append",
        default=[],
        help=f"disable channels or the language model, comma-separated ({', '.join(ABLATIONS)}); repeatable",
    )
    group_align.add_argument("--workers", type=int, help="concurrent per-entity work items")

    return parser


def get_parser() -> ArgumentParser:
    generating_man: bool = __name__ == "<run_path>"
    epilog = PLAIN_EPILOG if generating_man else RICH_EPILOG

    parser = ArgumentParser(
        prog="kg-align",
        description=__doc__,
        epilog=epilog,
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", default=0, action="count", help="increase logging verbosity")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    shared = [run_options()]

    def add(name: str, summary: str, parents: Sequence[ArgumentParser] = ()) -> ArgumentParser:
        return commands.add_parser(
            name,
            help=summary,
            description=summary,
            epilog=epilog,
            parents=list(parents),
            formatter_class=ArgumentDefaultsHelpFormatter,
        )

    add("train", "train structural embeddings and write them to the output directory", shared)
    add("candidates", "train (or reuse) embeddings and write the candidate sets of every channel", shared)
    add("align", "run the full pipeline and write the alignment report", shared)
    add("eval", "recompute the report from the artifacts of a finished run", shared)

    sweep = add("sweep", "repeat the pipeline over splits, candidate counts and seed fractions", shared)
    sweep.add_argument("--runs", type=int, default=5, help="consecutive split seeds per combination")
    sweep.add_argument("--k-values", metavar="LIST", type=int_list, default=[], help="comma-separated k values")
    sweep.add_argument("--fractions", metavar="LIST", type=float_list, default=[], help="comma-separated fractions")

    synth = add("synth", "write a synthetic isomorphic graph pair and matching word vectors")
    synth.add_argument("-o", "--out", metavar="DIR", required=True, help="dataset directory to create")
    synth.add_argument("--entities", type=int, default=200, help="entities per graph")
    synth.add_argument("--relations", type=int, default=10, help="relations per graph")
    synth.add_argument("--triples", type=int, default=600, help="triples per graph")
    synth.add_argument("--seed", type=int, default=0, help="generator seed")
    synth.add_argument("--vector-dim", type=int, default=32, help="word-vector dimension, 0 to skip vectors")

    add("info", "show the usage guide")
    return parser


def parse_args(argv: Optional[Sequence[str]]) -> Namespace:
    return get_parser().parse_args(argv)
