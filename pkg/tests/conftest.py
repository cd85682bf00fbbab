from collections import OrderedDict

import pytest

_ACCEPTANCE: "OrderedDict[str, list[tuple[bool, str]]]" = OrderedDict()


class _Recorder:
    def __call__(self, criterion: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
        return bool(passed)


@pytest.fixture
def record():
    """Register an acceptance-criterion outcome for the end-of-session summary."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, outcomes in _ACCEPTANCE.items():
        ok = sum(p for p, _ in outcomes)
        status = "PASS" if ok == len(outcomes) else "FAIL"
        if len(outcomes) == 1:
            detail = outcomes[0][1]
        else:
            failed = [d for p, d in outcomes if not p]
            detail = f"{ok}/{len(outcomes)} checks" + (f"; failing: {', '.join(failed)}" if failed else "")
        terminalreporter.write_line(f"{status}  {criterion}: {detail}")
