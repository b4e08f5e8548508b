# Copyright 2026 The vsmwsd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Python access to the vsmwsd engine."""

import json as _json

from . import _core
from ._core import (
    ArgumentError,
    ConfigError,
    EvaluationError,
    FormatError,
    UnsupportedError,
    kl_diag_gauss,
    macro_f1,
    profiles,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "EvaluationError",
    "FormatError",
    "UnsupportedError",
    "corpus_summary",
    "evaluate",
    "gradcheck",
    "kl_diag_gauss",
    "macro_f1",
    "profiles",
    "train",
    "write_synth_corpus",
]


def write_synth_corpus(spec, meta_path, blob_path):
    """Generates a synthetic corpus from a SynthSpec dict and writes it."""
    _core.write_synth_corpus(_json.dumps(spec), str(meta_path), str(blob_path))


def corpus_summary(meta_path, blob_path):
    """Loads and validates a corpus; returns its dim, size and inventory."""
    return _json.loads(_core.corpus_summary(str(meta_path), str(blob_path)))


def train(config, seed, out_path):
    """Meta-trains from a RunConfig dict and writes the checkpoint."""
    return _json.loads(_core.train(_json.dumps(config), int(seed), str(out_path)))


def evaluate(checkpoints, split="meta-test"):
    """Evaluates one checkpoint per seed; returns the report as a dict."""
    if isinstance(checkpoints, (str, bytes)) or hasattr(checkpoints, "__fspath__"):
        checkpoints = [checkpoints]
    return _json.loads(_core.evaluate([str(p) for p in checkpoints], split))


def gradcheck(tolerance=1e-4):
    return _json.loads(_core.gradcheck(tolerance))
