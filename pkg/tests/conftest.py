"""Shared pytest plumbing: collects acceptance verdict lines and echoes them
after the run, outside output capture, so they appear once per criterion."""

_verdicts = []


def verdict(number: int, label: str, ok: bool, detail: str) -> bool:
    line = (f"acceptance {number:2d} ({label}): "
            f"{'PASS' if ok else 'FAIL'} [{detail}]")
    _verdicts.append(line)
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _verdicts:
        terminalreporter.section("acceptance verdicts")
        for line in _verdicts:
            terminalreporter.write_line(line)
