"""Acceptance battery A1-A10 at the stated tolerances; one PASS/FAIL line per criterion."""

import pytest

from fiocalc.acceptance import CRITERIA

RUNTIME_LIMITS = {"A1": 30.0, "A5": 600.0, "A6": 240.0}


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name, capsys):
    res = CRITERIA[name]()
    with capsys.disabled():
        print(f"\n{res.line()}")
    assert res.passed, res.detail
    if name in RUNTIME_LIMITS:
        assert res.seconds < RUNTIME_LIMITS[name]
    if name == "A5":
        assert res.data["winner"] in ("step5", "corollary")
