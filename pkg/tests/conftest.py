import pytest

_RESULTS: dict[int, dict] = {}

CRITERIA = {
    1: "iterated-expectation oracle",
    2: "value-iteration contraction and uniqueness",
    3: "nested vs value-iteration agreement",
    4: "maxmin rectangular hull",
    5: "entropic tower with paired parameters",
    6: "no-gain composition rectangularity",
    7: "translation invariance and CAAA of fixed points",
    8: "exponential-form falsification",
    9: "sequential recursivity without CAAA",
    10: "robust LLN coverage",
    11: "byte-identical reruns",
}


class AcceptanceLog:
    """Collects one pass/fail entry per sub-case; the summary merges them per criterion."""

    def record(self, criterion: int, case: str, passed: bool, detail: str = "") -> bool:
        entry = _RESULTS.setdefault(criterion, {"cases": []})
        entry["cases"].append((case, bool(passed), detail))
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(CRITERIA):
        if k not in _RESULTS:
            tr.write_line(f"criterion {k:2d} ({CRITERIA[k]}): NOT RUN")
            continue
        cases = _RESULTS[k]["cases"]
        failed = [c for c in cases if not c[1]]
        verdict = "PASS" if not failed else "FAIL"
        tr.write_line(f"criterion {k:2d} ({CRITERIA[k]}): {verdict} [{len(cases) - len(failed)}/{len(cases)} cases]")
        for case, _, detail in failed:
            tr.write_line(f"    failing case {case}: {detail}")
