import os

# the classic XLA CPU runtime is several times faster for these small graphs
os.environ.setdefault("XLA_FLAGS", "--xla_cpu_use_thunk_runtime=false")

from hypothesis import settings  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

import pytest  # noqa: E402

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """record(label, passed, detail) -> passed; lines are repeated in the terminal summary."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip()
        _LINES.append(line)
        print(line)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
