import os
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"
GERMAN_CSV = DATA_DIR / "german_numeric.csv"

# filled by test_acceptance and echoed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session", autouse=True)
def _table_cache(tmp_path_factory):
    old = os.environ.get("SAIA_CACHE_DIR")
    os.environ["SAIA_CACHE_DIR"] = str(tmp_path_factory.mktemp("tables"))
    yield
    if old is None:
        os.environ.pop("SAIA_CACHE_DIR", None)
    else:
        os.environ["SAIA_CACHE_DIR"] = old


@pytest.fixture(scope="session")
def small_tables():
    from saia.adapt import tabulate_bopt
    return {k: tabulate_bopt(k, n_grid=200) for k in (2, 3)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
