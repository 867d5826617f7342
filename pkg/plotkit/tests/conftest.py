import importlib.util
import pathlib

import pytest

# lets a repo-wide pytest run pass over this directory cleanly when the
# figure package is not installed; the training package never depends on it.
# probe a submodule: the bare project directory on sys.path satisfies
# find_spec("plotkit") as an empty namespace package even when uninstalled
def _installed():
    try:
        return importlib.util.find_spec("plotkit.figures") is not None
    except ImportError:
        return False


collect_ignore_glob = [] if _installed() else ["test_*.py"]

DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def trace_csv():
    return DATA / "trace.csv"


@pytest.fixture(scope="session")
def sweep_csv():
    return DATA / "sweep.csv"
