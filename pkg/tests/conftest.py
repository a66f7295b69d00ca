import math

import pytest

from pymfg.api_helpers import create_game, get_game_opts
from pymfg.data import TimeGrid
from pymfg.models import LqSpec
from pymfg.solvers import LatticeConfig

# closed-form cost of the degenerate LQ game with x0 = 1, sigma = 1, T = 1
DEGENERATE_COST = 0.25 + 0.5 * math.log(2.0)


def lq_spec(preset='lq_acceptance', **overrides):
    opts = get_game_opts(preset, **overrides)
    opts.pop('type')
    return LqSpec.from_dict(opts)


@pytest.fixture(scope='module')
def acceptance_spec():
    return lq_spec('lq_acceptance')


@pytest.fixture(scope='module')
def degenerate_spec():
    return lq_spec('lq_degenerate')


@pytest.fixture(scope='module')
def acceptance_game():
    return create_game('lq_acceptance')


@pytest.fixture(scope='module')
def degenerate_game():
    return create_game('lq_degenerate')


@pytest.fixture(scope='module')
def zero_cost_game():
    """q = m = 0 and b = alpha: the optimal control vanishes and X = x0 + sigma W."""
    return create_game('lq_degenerate', q=0.0)


@pytest.fixture(scope='module')
def small_lattice():
    return LatticeConfig(h=0.05, radius=5.0)


@pytest.fixture(scope='module')
def grid20():
    return TimeGrid(1.0, 20)
