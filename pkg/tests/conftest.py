import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_runtest_logreport(report):
    # Collect acceptance outcomes; a failure in any phase marks the criterion FAIL.
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    entry = _CRITERIA.setdefault(name, {"ok": True, "detail": ""})
    if report.failed:
        entry["ok"] = False
    for key, value in report.user_properties:
        if key == "detail":
            entry["detail"] = value


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        entry = _CRITERIA[name]
        number = int(name.split("_")[2])
        status = "PASS" if entry["ok"] else "FAIL"
        detail = f"  ({entry['detail']})" if entry["detail"] else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {name}{detail}")
