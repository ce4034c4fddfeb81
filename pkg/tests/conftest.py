"""Per-criterion verdict collection for the acceptance suite."""

_RESULTS: dict[int, tuple[str, bool, str]] = {}


def record(number: int, description: str, ok: bool, detail: str = "") -> bool:
    """Store one acceptance verdict; returns ok so callers can assert it."""
    _RESULTS[number] = (description, bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        description, ok, detail = _RESULTS[number]
        line = f"criterion {number} ({description}): {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
