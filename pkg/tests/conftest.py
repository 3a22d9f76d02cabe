from collections import defaultdict

import pytest

# criterion -> [(label, passed, detail)]
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


@pytest.fixture
def acceptance(capsys):
    """Record one acceptance check and echo a PASS/FAIL line past output capture."""

    def record(criterion: int, label: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE[criterion].append((label, bool(passed), detail))
        with capsys.disabled():
            tag = "PASS" if passed else "FAIL"
            print(f"\n[acceptance {criterion}] {tag} {label}: {detail}", end="")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[criterion]
        failed = [label for label, ok, _ in checks if not ok]
        tag = "FAIL" if failed else "PASS"
        line = f"criterion {criterion}: {tag} ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += " failing: " + ", ".join(failed)
        terminalreporter.write_line(line)
