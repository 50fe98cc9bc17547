import sys
from collections import OrderedDict
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")

# criterion number -> (title, [outcomes])
_CRITERIA: "OrderedDict[int, list]" = OrderedDict()
TITLES = {
    1: "water-filling matches grid oracle and dominates random splits",
    2: "MRT beats random beamformers; Cauchy-Schwarz equality",
    3: "ip optimum matches brute-force max-min; inner LP matches vertices",
    4: "optimality properties: tile rates, equal/monotone FoV rates, case ordering",
    5: "CCCP monotone, KKT, single-user reduction, desk-scale run",
    6: "linearized DC constraints tangent and majorizing",
    7: "rate splitting with SDMA warm start never below SDMA",
    8: "slot shortfall: slot-1 replay and overload saturation",
    9: "determinism, bit accounting, proposed >= equal power",
    10: "analytic gradients match central differences",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for n in getattr(report, "criteria", ()):
        _CRITERIA.setdefault(n, []).append((report.nodeid, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = tuple(m.args[0] for m in item.iter_markers("criterion"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        ok = all(outcome == "passed" for _, outcome in results)
        failed = [nid.split("::")[-1] for nid, outcome in results if outcome != "passed"]
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {TITLES.get(n, '')}"
        if failed:
            line += f"  [failing: {', '.join(failed)}]"
        terminalreporter.write_line(line)
