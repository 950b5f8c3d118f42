"""Pytest configuration and shared fixtures."""
import shutil
import sys
import tempfile
from pathlib import Path

import pytest

# Add project root to path
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from infra.observability import set_trace_root  # noqa: E402
from tests.fixtures.synthetic import two_group_dataset  # noqa: E402


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test outputs."""
    tmpdir = tempfile.mkdtemp()
    yield tmpdir
    shutil.rmtree(tmpdir, ignore_errors=True)


@pytest.fixture
def small_dataset():
    """400 rows, two groups (80/20), minority coefficients negated."""
    return two_group_dataset(n=400, minority=0.2)


@pytest.fixture
def two_group_shift_dataset():
    """2,000 rows with a 10% minority whose true coefficients are negated."""
    return two_group_dataset(n=2000, minority=0.1, seed=3)


@pytest.fixture(autouse=True)
def isolate_trace(tmp_path, monkeypatch):
    """Keep trace files out of the working tree."""
    monkeypatch.chdir(tmp_path)
    set_trace_root(None)
    yield
    set_trace_root(None)
