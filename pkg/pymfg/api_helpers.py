import fnmatch
import re
from copy import deepcopy

from pymfg.default_game_configs import DEFAULT_CONFIGS
from pymfg.models import build_model


def get_game_opts(game_name, **overrides):
    """Options of a preset game with ``overrides`` applied on top."""
    assert game_name in DEFAULT_CONFIGS.keys(), f'Game {game_name} not implemented yet. Available: {list_games()}'
    opts = deepcopy(DEFAULT_CONFIGS[game_name]['model_opts'])
    opts.update(overrides)
    return opts


def create_game(game_name, **overrides):
    """Build a preset game, e.g. ``create_game('lq_acceptance', sigma=0.5)``."""
    return build_model(get_game_opts(game_name, **overrides))


def _natural_key(string_):
    return [int(s) if s.isdigit() else s for s in re.split(r'(\d+)', string_.lower())]


def list_games(filter='', exclude_filters='', with_oracle=None):
    """Return list of available game presets, sorted alphabetically.

    Args:
        filter (str | list[str]): Wildcard filter string that works with fnmatch.
        exclude_filters (str | list[str]): Wildcard filters to exclude games after including them with filter.
        with_oracle (bool, optional): Keep only games with (True) or without (False) an LQ oracle.

    Example:
        list_games('lq*') -- returns all linear-quadratic presets
    """
    all_games = list(DEFAULT_CONFIGS.keys())
    if with_oracle is not None:
        all_games = [name for name in all_games if DEFAULT_CONFIGS[name]['oracle'] == with_oracle]
    if filter:
        games = set()
        include_filters = filter if isinstance(filter, (tuple, list)) else [filter]
        for f in include_filters:
            games = games.union(fnmatch.filter(all_games, f))
    else:
        games = set(all_games)
    if exclude_filters:
        if not isinstance(exclude_filters, (tuple, list)):
            exclude_filters = [exclude_filters]
        for xf in exclude_filters:
            games = games.difference(fnmatch.filter(games, xf))
    return sorted(games, key=_natural_key)
