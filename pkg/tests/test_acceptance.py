"""One test per acceptance criterion; each prints a PASS/FAIL line (use ``-s`` to see them live)."""

import pytest

from procmetric.acceptance import CRITERIA, run


@pytest.mark.parametrize("ident", sorted(CRITERIA))
def test_criterion(ident):
    outcome = run(ident)
    print(outcome.line())
    assert outcome.passed, outcome.detail
