from collections import OrderedDict

import pytest

# criterion number -> list of (part, passed, detail)
ACCEPTANCE: "OrderedDict[int, list]" = OrderedDict()


@pytest.fixture
def criterion():
    def record(number: int, part: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(number, []).append((part, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}{'' if p else ' [FAIL]'}: {d}" for name, p, d in parts)
        tr.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
