"""One test per acceptance criterion, at the criterion's own tolerances.

Each test prints a single pass/fail line; the lines are also gathered into
the terminal summary (see ``conftest.py``).
"""

import pytest

from srlab import acceptance

SUMMARY: list[str] = []


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    checks = acceptance.CRITERIA[number]()
    passed = all(c.passed for c in checks)
    failed = [c.line() for c in checks if not c.passed]
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}" + (f"  {'; '.join(failed)}" if failed else "")
    SUMMARY.append(line)
    print(line)
    for c in checks:
        print("    " + c.line())
    assert passed, "\n".join(failed)
