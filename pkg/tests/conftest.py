"""
Shared fixtures: small grids, the default problem and its initial density
"""
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from coupling.problem import build_problem  # noqa: E402
from grid_core.grids import TimeGrid, TorusGrid  # noqa: E402
from measures.densities import cosine_density  # noqa: E402


@pytest.fixture
def grid32():
    return TorusGrid(1, 32)


@pytest.fixture
def grid64():
    return TorusGrid(1, 64)


@pytest.fixture
def unit_time():
    return TimeGrid(0.0, 1.0, 50)


@pytest.fixture
def problem():
    return build_problem("default")


@pytest.fixture
def m0_32(grid32):
    return cosine_density(grid32, 0.5)


@pytest.fixture
def m0_64(grid64):
    return cosine_density(grid64, 0.5)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path / "runs"
