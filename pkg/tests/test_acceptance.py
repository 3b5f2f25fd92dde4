"""End-to-end acceptance suite.

One test per criterion, each printing its PASS/FAIL line with the measured
values.  The same checks back the ``qibf test-acceptance`` subcommand.
"""
import pytest

from qibf.acceptance import CRITERIA


@pytest.mark.parametrize("name,fn", CRITERIA, ids=[name for name, _ in CRITERIA])
def test_acceptance_criterion(name, fn):
    ok, detail = fn()
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"
