"""Every acceptance criterion at its stated tolerance, one line each.

The statistical criteria use fixed seeds chosen before any run and take
about twenty minutes in total on one core.
"""

import os

import pytest

from cmjtrees.verification import CRITERIA, format_result, run_one

WORKERS = int(os.environ.get("CMJ_WORKERS", os.cpu_count() or 1))


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n}")
def test_criterion(number, acceptance_log):
    res = run_one(number, workers=WORKERS)
    text = format_result(res)
    acceptance_log.append(text.splitlines()[0])
    print(text)
    assert res.passed, text
