# flake8: noqa
from .api_helpers import create_game, get_game_opts, list_games
from .solvers import solve_lq_riccati, solve_mfg
from .version import __gitsha__, __version__
