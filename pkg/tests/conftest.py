"""Pytest configuration and shared fixtures."""
import pytest
import yaml
from pathlib import Path

from sdlalab.config import build_run_config
from sdlalab.harmonic import AggregateSet, SolverSettings
from sdlalab.lattice import Site


@pytest.fixture
def fixtures_dir():
    """Return the path to the fixtures directory."""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def load_yaml():
    """Factory fixture to load YAML files."""
    def _load(filepath):
        with open(filepath, 'r') as f:
            return yaml.safe_load(f)
    return _load


@pytest.fixture
def column3():
    """Vertical column of height 3 standing on the origin."""
    return AggregateSet.column(3)


@pytest.fixture
def lshape():
    return AggregateSet.of([Site(0, 1), Site(0, 2), Site(1, 1), Site(2, 1)])


@pytest.fixture
def fast_settings():
    """Solver settings for desk-sized domains."""
    return SolverSettings(tol=1e-10, width_factor=1.0)


@pytest.fixture
def make_cfg(tmp_path):
    """Factory fixture for a RunConfig writing into a temporary directory."""
    def _make(command, replicas=1, seed=0, **params):
        return build_run_config(
            command,
            master_seed=seed,
            replicas=replicas,
            workers=1,
            out_dir=str(tmp_path / command),
            overrides=params,
        )
    return _make
