import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def record(number: int, title: str, parts: list[tuple[str, bool]]):
        ok = all(flag for _, flag in parts)
        detail = "; ".join(f"{label} [{'ok' if flag else 'FAILED'}]" for label, flag in parts)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
