"""MAG-fusion multimodal sentiment toolkit.

Thin wrappers over the C++ core: synthetic corpus generation, training,
evaluation, and highlight extraction, plus the metric suite.
"""

import json as _json

from ._core import (  # noqa: F401
    binary_accuracy,
    f1_binary,
    mae,
    pearson,
)
from . import _core

__all__ = [
    "binary_accuracy",
    "f1_binary",
    "mae",
    "pearson",
    "metrics_report",
    "generate",
    "train",
    "evaluate",
    "highlight",
]


def metrics_report(preds, labels):
    """Accuracy, F1, MAE and Pearson correlation as a dict."""
    return _json.loads(_core.metrics_report_json(list(preds), list(labels)))


def generate(n, out_dir, seed=None, **gen_config):
    """Write a synthetic corpus and its manifest; returns the manifest."""
    return _json.loads(_core.gen_json(n=n, seed=seed, out_dir=str(out_dir), **gen_config))


def train(data, out_dir, config=None, overrides=(), seed=None):
    """Train on a JSONL corpus; returns the run summary."""
    return _json.loads(
        _core.train_json(
            data=str(data),
            out_dir=str(out_dir),
            config=None if config is None else str(config),
            overrides=list(overrides),
            seed=seed,
        )
    )


def evaluate(checkpoint, data, out_dir=None):
    """Evaluate a checkpoint; returns the metrics report."""
    return _json.loads(
        _core.eval_json(
            checkpoint=str(checkpoint),
            data=str(data),
            out_dir=None if out_dir is None else str(out_dir),
        )
    )


def highlight(
    checkpoint,
    stream,
    window,
    stride=1,
    threshold=None,
    quantile=None,
    min_gap=0,
    min_len=0,
    positive_only=False,
    out_dir=None,
):
    """Score a stream and return highlight segments as a list of dicts."""
    return _json.loads(
        _core.highlight_json(
            checkpoint=str(checkpoint),
            stream=str(stream),
            window=window,
            stride=stride,
            threshold=threshold,
            quantile=quantile,
            min_gap=min_gap,
            min_len=min_len,
            positive_only=positive_only,
            out_dir=None if out_dir is None else str(out_dir),
        )
    )
