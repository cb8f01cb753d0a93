import numpy as np
import pytest
import torch

from ctrrefine.data import RawRecord, build_vocabulary

_ACCEPTANCE = {}


@pytest.fixture
def toy_records():
    """Three rows over fields A and B: a1, a1, a2 / b1, b2, b2."""
    return [RawRecord(1, ("a1", "b1")), RawRecord(0, ("a1", "b2")), RawRecord(1, ("a2", "b2"))]


@pytest.fixture
def toy_schema(toy_records):
    return build_vocabulary(toy_records, min_count=1, field_names=["A", "B"])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _float32_default():
    torch.set_default_dtype(torch.float32)
    yield


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (report.when != "call" and report.passed):
        return
    status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
    details = [v for k, v in item.user_properties if k == "detail"]
    if report.failed and call.excinfo is not None:
        details.append(str(call.excinfo.value).splitlines()[0][:160])
    _ACCEPTANCE[str(mark.args[0])] = (status, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        status, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}".rstrip())
