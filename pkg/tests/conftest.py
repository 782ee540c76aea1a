import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int("".join(filter(str.isdigit, c))), c)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
