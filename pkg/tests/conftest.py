import os
import textwrap

import pytest

import mfgmp
from mfgmp.core.grid import GridSpec
from mfgmp.core.models import lq_model, zero_model
from mfgmp.core.yamlcfg import YAMLConfig
from mfgmp.work_managers import SerialWorkManager, environment

SCENARIO_PATH = os.path.join(os.path.dirname(__file__), 'fixtures', 'scenarios')


def scenario_path(name):
    return os.path.join(SCENARIO_PATH, name)


@pytest.fixture
def small_grid():
    '''k = 2, d = 1 grid small enough for a full solve in well under a second.'''
    return GridSpec([0.0, 0.0], [1.0, 1.0], [5, 5], [-1.0], [1.0], [9], T=0.1, dt=0.01)


@pytest.fixture
def lq_spec():
    return lq_model()


@pytest.fixture
def zero_spec():
    return zero_model()


@pytest.fixture
def write_scenario(tmp_path):
    '''Write YAML text to a scenario file under tmp_path and return its path.'''

    def write(text, name='scenario.yaml'):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text))
        return str(path)

    return write


@pytest.fixture(autouse=True)
def clear_state():
    yield
    rc = mfgmp.rc
    rc.verbosity = None
    rc.config = YAMLConfig()
    rc.scenario_file = None
    rc.work_manager = SerialWorkManager()
    environment.default_env.args = None
