from __future__ import annotations

import os
import re

import pytest

_CRITERIA: dict = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TNCOND_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="paper-scale run; set TNCOND_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[int(m.group(1))] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[k]
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}  {detail}")
