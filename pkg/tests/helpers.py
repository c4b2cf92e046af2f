"""Shared helpers for the test modules."""

import numpy as np

from incrtl import _pykernels

try:
    from incrtl import _ckernels
except ImportError:  # extension not built
    _ckernels = None

# filled by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def random_design(rng, n, d, intercept=True):
    X = rng.standard_normal((n, d))
    if intercept:
        X[:, 0] = 1.0
    return X


def write_table(path, header, rows):
    path.write_text(",".join(header) + "\n" + "\n".join(",".join(f"{v!r}" for v in r) for r in rows) + "\n")
    return path
