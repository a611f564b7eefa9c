"""Every acceptance criterion at its stated tolerance.

Each test prints a single PASS/FAIL line (outside pytest's capture) so the
log of a full run reads as the acceptance report.
"""

import pytest

from streammoments.acceptance import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    check = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + check.line())
    assert check.passed, check.line()
