import os

import pytest

from environment import parse_grid, parse_mdp
from ldba import parse_ldba
from reward_machine import parse_srm

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures')


def _read(name: str) -> str:
    with open(os.path.join(FIXTURES, name), 'r', encoding='utf-8') as handle:
        return handle.read()


@pytest.fixture
def fixture_path():
    """Absolute path of a file under fixtures/."""
    return lambda name: os.path.join(FIXTURES, name)


@pytest.fixture
def lava_goal_srm():
    return parse_srm(_read('lava_goal.srm'))


@pytest.fixture
def lava_goal_quarter_srm():
    return parse_srm(_read('lava_goal_quarter.srm'))


@pytest.fixture
def lava_goal_grid():
    """(Mdp, LabelingFunction) of the 4x2 grid with lava at (1,0), (2,0) and the goal at (3,0)."""
    return parse_grid(_read('lava_goal.grid'))


@pytest.fixture
def near_goal_grid():
    return parse_grid(_read('near_goal.grid'))


@pytest.fixture
def coin():
    """(Mdp, LabelingFunction): 'fair' flips to the heads state with probability 1/2."""
    return parse_mdp(_read('coin.mdp'))


@pytest.fixture
def eps_choice_spec():
    return parse_ldba(_read('eps_choice.ldba'))
