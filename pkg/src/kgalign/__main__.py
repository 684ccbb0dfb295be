#!/usr/bin/env python3
"""kg-align: entity alignment across two knowledge graphs with structural embeddings and a language model."""
from argparse import Namespace
from dataclasses import replace
import logging
import os
from pkgutil import get_data
import sys
from typing import Any, Dict, List, Optional, Sequence

from rich import print
from rich.console import Console
from rich.markdown import Markdown
from rich.panel import Panel
from rich.table import Table

from kgalign.__args__ import parse_args
from kgalign.config import PipelineConfig, apply_overrides, load_config
from kgalign.core import CANDIDATES_FILE, EMBEDDINGS_FILE, PARAMS_FILE, REPORT_FILE, SWEEP_FILE, run_alignment
from kgalign.core import evaluate_output, run_candidates, run_sweep, run_training
from kgalign.errors import AlignmentError, ConfigError
from kgalign.log import configure_logging
from kgalign.metrics import summary_table
from kgalign.synth import WORD_VECTORS_FILE, write_synthetic_dataset


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


def info() -> Markdown:
    info_data = get_data("kgalign", "info.md")
    info_decoded = info_data.decode("utf-8") if info_data else ""
    return Markdown(info_decoded)


def print_info(console: Optional[Console] = None) -> None:
    if not console:
        console = Console(width=120)

    console.print(info())


def build_config(args: Namespace) -> PipelineConfig:
    """The configuration file (if any) with every command-line flag that was given applied on top."""
    config = load_config(args.config) if "config" in args else PipelineConfig()

    overrides: Dict[str, Any] = {
        "dataset_dir": args.dataset_dir,
        "word_vectors": args.word_vectors,
        "out_dir": args.out,
        "train_fraction": args.train_fraction,
        "workers": args.workers,
        "clean_names": args.clean_names,
        "normalize_names": args.normalize_names,
        "train.epochs": args.epochs,
        "train.dim": args.dim,
        "train.layers": args.layers,
        "train.batch_size": args.batch_size,
        "train.learning_rate": args.learning_rate,
        "channels.k": args.k,
        "llm.backend": args.backend,
    }
    config = apply_overrides(config, overrides)

    if args.seed is not None:
        config = config.with_seed(args.seed)

    ablations: List[str] = [name for names in args.ablate for name in names]
    if ablations:
        config = replace(config, channels=config.channels.ablate(ablations))
    return config


def run_command(args: Namespace) -> None:
    if args.command == "synth":
        write_synthetic_dataset(args.out, args.entities, args.relations, args.triples, args.seed, args.vector_dim)
        print(f"Dataset written to [bold]{args.out}[/]")
        if args.vector_dim:
            print(f"Word vectors written to [bold]{os.path.join(args.out, WORD_VECTORS_FILE)}[/]")
        return

    config = build_config(args)

    if args.command == "train":
        run = run_training(config)
        summary = run.train_summary or {}
        print(f"Embeddings written to [bold]{run.path(EMBEDDINGS_FILE)}[/]")
        print(f"Parameters written to [bold]{run.path(PARAMS_FILE)}[/]")
        if summary:
            print(f"Loss {summary['initial-loss']:.4f} -> {summary['final-loss']:.4f}")

    elif args.command == "candidates":
        run = run_candidates(config)
        print(f"Candidates written to [bold]{run.path(CANDIDATES_FILE)}[/]")

    elif args.command in ("align", "eval"):
        report = run_alignment(config) if args.command == "align" else evaluate_output(config)
        print(summary_table(report))
        print(f"Report written to [bold]{os.path.join(config.out_dir, REPORT_FILE)}[/]")

    elif args.command == "sweep":
        document = run_sweep(config, args.runs, args.k_values, args.fractions)
        table = Table(title="Sweep means")
        for column in ("group", "hits-at-1", "hits-at-10", "mrr", "union-hit-rate"):
            table.add_column(column, justify="left" if column == "group" else "right")
        for group, means in document["mean"].items():
            table.add_row(group, *(f"{value:.4f}" for value in means.values()))
        print(table)
        print(f"Sweep written to [bold]{os.path.join(config.out_dir, SWEEP_FILE)}[/]")


def main(argv: Optional[Sequence[str]] = None) -> int:
    # parse command-line arguments and configure logging
    if argv is None:
        argv = sys.argv[1:]

    try:
        args = parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logger.debug("Parsed command-line arguments:\n%r", args)

    verbosity = args.verbose if "verbose" in args else 0
    configure_logging(verbosity)

    if args.command == "info":
        print_info()
        return EXIT_OK

    try:
        run_command(args)
    except ConfigError as e:
        print(Panel(e.advice(), title="[red]" + e.message), file=sys.stderr)
        return EXIT_USAGE
    except AlignmentError as e:
        logger.debug("Run failed", exc_info=True)
        print(Panel(e.advice() or "Re-run with -vvv for details.", title="[red]" + e.message), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    exit(main(sys.argv[1:]))
