"""Acceptance gate: all 14 verification criteria at their stated
tolerances.

The report is computed once per session at the tier given by
SUPERLAB_ACCEPTANCE_TIER (default "full"; set to "fast" for a smoke
run) and each criterion is asserted as its own test with a one-line
pass/fail summary printed to the terminal.
"""

import os

import pytest

from superlab.verify import run_verify

TIER = os.environ.get("SUPERLAB_ACCEPTANCE_TIER", "full")
SEED = int(os.environ.get("SUPERLAB_ACCEPTANCE_SEED", "20260826"))

_cache = {}


def _report():
    if "report" not in _cache:
        _cache["report"] = run_verify(tier=TIER, seed=SEED)
    return _cache["report"]


@pytest.mark.parametrize("cid", range(1, 15))
def test_criterion(cid, capsys):
    res = next(r for r in _report().results if r.cid == cid)
    with capsys.disabled():
        print("\n" + res.line())
    assert not res.skipped, f"criterion {cid} skipped: {res.reason}"
    assert res.passed, res.line()
