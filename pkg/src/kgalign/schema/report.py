from typing import Dict, List, Optional, TypedDict

from typing_extensions import Required


# | PredictionEntry.
PredictionEntry = TypedDict(
    "PredictionEntry",
    {
        # | Required property
        "source": Required[int],
        # | Predicted target, null when the protocol ends without a winner and no fallback exists.
        # |
        # | Required property
        "target": Required[Optional[int]],
        # | Required property
        "truth": Required[int],
        # | Required property
        "correct": Required[bool],
        # | Required property
        "fallback": Required[bool],
        # | Channels whose candidate set holds the predicted target.
        "channels": List[str],
        "rounds": int,
    },
    total=False,
)


# | RoundStatistics.
RoundStatistics = TypedDict(
    "RoundStatistics",
    {
        # | Required property
        "total": Required[int],
        # | Required property
        "mean": Required[float],
        # | Required property
        "max": Required[int],
    },
    total=False,
)


# | TrainSummary.
TrainSummary = TypedDict(
    "TrainSummary",
    {
        # | Required property
        "initial-loss": Required[float],
        # | Required property
        "final-loss": Required[float],
        # | Required property
        "epoch-losses": Required[List[float]],
        "seed-pairs": int,
        "augmented-pairs": int,
    },
    total=False,
)


# | ReportDocument.
ReportDocument = TypedDict(
    "ReportDocument",
    {
        # | Required property
        "dataset": Required[str],
        # | Required property
        "k": Required[int],
        # | Required property
        "channels": Required[List[str]],
        # | Required property
        "llm": Required[bool],
        "backend": str,
        # | Required property
        "train-pairs": Required[int],
        # | Required property
        "test-pairs": Required[int],
        # | Required property
        "hits-at-1": Required[float],
        # | Required property
        "hits-at-10": Required[float],
        "structural-hits-at-1": float,
        "mrr": float,
        # | Required property
        "candidate-hit-rate": Required[Dict[str, float]],
        "union-hit-rate": float,
        "fallbacks": int,
        "parse-failures": int,
        "name-oov": int,
        "rounds": "RoundStatistics",
        "train": "TrainSummary",
        # | Required property
        "predictions": Required[List["PredictionEntry"]],
    },
    total=False,
)


# | SweepRow.
SweepRow = TypedDict(
    "SweepRow",
    {
        # | Required property
        "split-seed": Required[int],
        # | Required property
        "k": Required[int],
        # | Required property
        "train-fraction": Required[float],
        # | Required property
        "hits-at-1": Required[float],
        # | Required property
        "hits-at-10": Required[float],
        "mrr": float,
        "union-hit-rate": float,
    },
    total=False,
)


# | SweepDocument.
SweepDocument = TypedDict(
    "SweepDocument",
    {
        # | Required property
        "runs": Required[List["SweepRow"]],
        # | Mean metrics per (k, train-fraction) combination, keyed "k=<k>,fraction=<f>".
        # |
        # | Required property
        "mean": Required[Dict[str, Dict[str, float]]],
    },
    total=False,
)
