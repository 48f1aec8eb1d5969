import re

_criteria = {}   # nodeid -> (number, title)
_outcomes = {}   # nodeid -> (passed, detail)


def pytest_collection_modifyitems(items):
    for item in items:
        m = re.match(r"test_criterion_(\d+)_", item.name)
        if m and item.path.name == "test_acceptance.py":
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _criteria[item.nodeid] = (int(m.group(1)), doc)


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or report.failed:
        detail = dict(report.user_properties).get("detail", "")
        prev = _outcomes.get(report.nodeid, (True, ""))
        _outcomes[report.nodeid] = (prev[0] and report.passed, detail or prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (num, title) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        if nodeid not in _outcomes:
            continue
        ok, detail = _outcomes[nodeid]
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
