ACCEPTANCE_LINES = {}


def record(number: int, ok: bool, detail: str, gate: bool = True) -> None:
    tag = ("PASS" if ok else "FAIL") if gate else ("PASS (info)" if ok else "FAIL (info)")
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {tag}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
