"""Acceptance battery: one test per criterion, each printing a pass/fail line."""

import pytest

from chaoskit import acceptance

RESULTS = []


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda fn: fn.__name__)
def test_criterion(criterion):
    result = criterion()
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.details
