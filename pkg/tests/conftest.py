import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lrxxz", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lrxxz")


def random_rho(rng, rank=4):
    a = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, n=2):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion; tests carry @pytest.mark.criterion(n, title)
_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion gate")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" and rep.passed:
        return
    num, title = mark.args
    entry = _criteria.setdefault(num, {"title": title, "ok": True, "ran": False, "detail": []})
    if rep.failed:
        entry["ok"] = False
        entry["detail"].append(f"{item.name}: {rep.longrepr.reprcrash.message if hasattr(rep.longrepr, 'reprcrash') else 'error'}")
    if rep.when == "call":
        entry["ran"] = True
        entry["detail"].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        tr.write_line(f"criterion {num} ({e['title']}): {status}")
        for d in e["detail"]:
            tr.write_line(f"    {d.splitlines()[0][:200]}")
