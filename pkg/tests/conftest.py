from collections import defaultdict

import pytest

_results = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            item.user_properties.append(("criterion", mark.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        _results[props["criterion"]].append((report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, title), outcomes in sorted(_results.items()):
        ok = all(o == "passed" for o, _ in outcomes)
        details = "; ".join(d for _, d in outcomes if d)
        tr.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{details}]" if details else ""))


@pytest.fixture
def detail(record_property):
    """Attach a measurement string to the acceptance summary line."""
    parts = []

    def add(text):
        parts.append(text)
        record_property("detail", " | ".join(parts))

    return add
