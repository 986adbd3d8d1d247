"""Collects acceptance outcomes and prints one line per criterion."""

ACCEPTANCE = {}


def record(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (name, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
