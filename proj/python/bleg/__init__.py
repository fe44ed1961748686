"""Python access to the bleg core: synthetic data, serialization, metrics,
information-theory checks and the command-line pipeline."""

import json
import sys

from . import _bleg
from ._bleg import (
    BlegError,
    alignment_loss,
    compute_metrics,
    make_split,
    mutual_information,
    parse_graph_text,
    serialize_graph,
    synthetic_dataset,
)

__all__ = [
    "BlegError",
    "alignment_loss",
    "compute_metrics",
    "default_config",
    "gradient_fidelity",
    "main",
    "make_split",
    "mutual_information",
    "parse_graph_text",
    "run",
    "serialize_graph",
    "synthetic_dataset",
    "theorem_check",
]


def default_config():
    return json.loads(_bleg.default_config())


def theorem_check(sizes, probs, corruption=None):
    if corruption is None:
        return json.loads(_bleg.theorem_check(sizes, probs))
    return json.loads(_bleg.theorem_check(sizes, probs, corruption))


def gradient_fidelity(seed=0, step=1e-5, tolerance=1e-3):
    return json.loads(_bleg.gradient_fidelity(seed, step, tolerance))


def run(args):
    """Runs one CLI invocation in-process; returns (exit code, stdout, stderr)."""
    return _bleg.cli_run([str(a) for a in args])


def main():
    code, out, err = run(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
