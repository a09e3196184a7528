from __future__ import annotations

import numpy as np
import pytest

from bprlab.data import InteractionLog, split_user_based, synthetic_log

_ACCEPTANCE: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion checked by the test")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    cid, title = crit
    entry = _ACCEPTANCE.setdefault(cid, {"title": title, "passed": True, "ran": False, "skipped": False, "notes": []})
    for key, value in report.user_properties:
        if key == "detail" and value not in entry["notes"]:
            entry["notes"].append(value)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["ran"] = True
        if report.skipped:
            entry["skipped"] = True
        elif report.failed:
            entry["passed"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (str(m.args[0]), m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: (int("".join(ch for ch in c if ch.isdigit()) or 0), c)):
        e = _ACCEPTANCE[cid]
        if not e["ran"]:
            continue
        status = "SKIP" if e["skipped"] and e["passed"] else ("PASS" if e["passed"] else "FAIL")
        note = f"  [{'; '.join(e['notes'])}]" if e["notes"] else ""
        tr.write_line(f"criterion {cid:<3} {status}  {e['title']}{note}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_log():
    # 6 users x 8 items, hand-written
    events = [
        (0, 0, 10), (0, 1, 20), (0, 2, 30), (0, 5, 40),
        (1, 1, 11), (1, 3, 21), (1, 4, 31),
        (2, 0, 12), (2, 2, 22), (2, 6, 32), (2, 7, 42),
        (3, 1, 13), (3, 5, 23),
        (4, 0, 14), (4, 3, 24), (4, 4, 34), (4, 6, 44),
        (5, 2, 15), (5, 7, 25), (5, 1, 35),
    ]
    return InteractionLog.from_events(events, 6, 8)


@pytest.fixture(scope="session")
def small_log():
    return synthetic_log(n_users=200, n_items=150, n_topics=4, mean_events=25.0, seed=3)


@pytest.fixture(scope="session")
def small_bundle(small_log):
    return split_user_based(small_log, 20, 0.8, seed=7)
