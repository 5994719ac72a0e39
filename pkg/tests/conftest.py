_ACCEPTANCE_LINES = []


def criterion(num: int, desc: str, ok: bool) -> None:
    """Record one acceptance-criterion verdict and assert it."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {desc}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
