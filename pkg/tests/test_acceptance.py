"""Acceptance suite: one test per end-to-end criterion, fixed seed."""

from __future__ import annotations

import pytest

from lepage.acceptance import CRITERIA, run_one

NUMBERS = [entry[0] for entry in CRITERIA]
TITLES = {entry[0]: entry[1] for entry in CRITERIA}


def test_registry_is_complete():
    assert NUMBERS == list(range(1, 12))


@pytest.mark.parametrize("number", NUMBERS,
                         ids=[f"{n:02d}-{TITLES[n].replace(' ', '-')}"
                              for n in NUMBERS])
def test_criterion(number):
    result = run_one(number, seed=0)
    print(result.line())
    assert result.passed, result.line()
