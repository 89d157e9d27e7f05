"""Acceptance gate: the thirteen named checks at full scale.

Each test runs one named check from :mod:`supersim.verify` with its pinned
seeds and tolerances and prints a single pass/fail line (visible with
``pytest -s``).  The checks are ordered and numbered; several share one
cached equilibrium run, so running the whole module is much cheaper than
the sum of its parts looks.
"""
import pytest

from supersim.verify import CHECKS

_CRITERIA = [
    ("C01", "coupling-contraction"),
    ("C02", "oracle-stationary"),
    ("C03", "oracle-transient"),
    ("C04", "d1-exact-law"),
    ("C05", "balance-identity"),
    ("C06", "tail-law"),
    ("C07", "max-two-point"),
    ("C08", "equilibrium-domination"),
    ("C09", "mixing-upper"),
    ("C10", "mixing-lower"),
    ("C11", "survival-bound"),
    ("C12", "meanfield"),
    ("C13", "chernoff"),
]


@pytest.mark.parametrize("tag,name", _CRITERIA, ids=[t for t, _ in _CRITERIA])
def test_acceptance(tag, name):
    result = CHECKS[name](False)
    line = f"[{tag}] {result.line()}"
    print(line)
    assert result.passed, line
