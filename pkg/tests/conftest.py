import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with its sub-checks."""
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])
               if r.when == "call" and "test_acceptance.py::test_criterion_" in r.nodeid]
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(reports, key=lambda r: int(r.nodeid.split("test_criterion_")[1].split("_")[0])):
        name = r.nodeid.split("::")[-1].removeprefix("test_criterion_")
        number, _, title = name.partition("_")
        terminalreporter.write_line(f"criterion {number} ({title.replace('_', ' ')}): {'PASS' if r.passed else 'FAIL'}")
        for label, verdict in r.user_properties:
            terminalreporter.write_line(f"    {label}: {verdict}")
