import numpy as np
import pytest

from uwb_breath.harness.corpus import make_corpus
from uwb_breath.harness.dataset import dataset_windows


@pytest.fixture(scope="session")
def small_corpus():
    """3 persons x 6 setups x 1 recording of 60 s (3 windows each)."""
    return make_corpus(n_persons=3, n_setups=6, recordings_per_pair=1, duration_s=60.0, seed=11)


@pytest.fixture(scope="session")
def small_windows(small_corpus):
    return dataset_windows(small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance reporting: one PASS/FAIL line per criterion, taken from the real test outcome

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(code): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    code = marker.args[0]
    details = [str(v) for k, v in item.user_properties if k == "detail"]
    status = "PASS" if rep.passed else "FAIL"
    _CRITERIA[code] = f"{code} {status}  {'; '.join(details)}".rstrip()
    print(f"\n{_CRITERIA[code]}")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for code in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[code])
