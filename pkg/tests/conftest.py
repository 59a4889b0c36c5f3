import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (title, [(passed, detail), ...])
_verdicts: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    if rep.when != "call" and rep.passed:
        return
    number, title = marker.args
    passed = rep.passed          # an expected failure (xfail) reports as skipped, so it counts as FAIL
    detail = dict(item.user_properties).get("detail", "")
    if not passed and not detail and rep.longrepr is not None:
        detail = str(rep.longrepr).strip().splitlines()[-1][:200]
    _verdicts.setdefault(number, (title, []))[1].append((passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        title, parts = _verdicts[number]
        status = "PASS" if all(p for p, _ in parts) else "FAIL"
        details = "; ".join(d for _, d in parts if d)
        terminalreporter.write_line(f"criterion {number} {title}: {status}" + (f" | {details}" if details else ""))
