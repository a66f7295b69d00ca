import hashlib
import json
from collections import OrderedDict
from os import path as osp

import yaml

TOP_LEVEL_KEYS = ('name', 'seed', 'model', 'lq_spec', 'grid', 'fixedpoint', 'experiment')
GRID_KEYS = ('n_steps', )
EXPERIMENT_KEYS = (
    'Ns',
    'replications',
    'reps',
    'deviations',
    'sampler',
    'limit_cost',
    'metric',
    'time_stride',
    'reference_atoms',
    'regularity_cap',
    'smp_perturbations',
    'smp_particles',
)


class ConfigError(ValueError):
    """Raised for malformed option files."""


def ordered_yaml():
    """Support OrderedDict for yaml.

    Returns:
        yaml Loader and Dumper.
    """
    try:
        from yaml import CDumper as Dumper
        from yaml import CLoader as Loader
    except ImportError:
        from yaml import Dumper, Loader

    _mapping_tag = yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG

    def dict_representer(dumper, data):
        return dumper.represent_dict(data.items())

    def dict_constructor(loader, node):
        return OrderedDict(loader.construct_pairs(node))

    Dumper.add_representer(OrderedDict, dict_representer)
    Loader.add_constructor(_mapping_tag, dict_constructor)
    return Loader, Dumper


def dict2str(opt, indent_level=1):
    """dict to string for printing options.

    Args:
        opt (dict): Option dict.
        indent_level (int): Indent level. Default: 1.

    Return:
        (str): Option string for printing.
    """
    msg = '\n'
    for k, v in opt.items():
        if isinstance(v, dict):
            msg += ' ' * (indent_level * 2) + k + ':['
            msg += dict2str(v, indent_level + 1)
            msg += ' ' * (indent_level * 2) + ']\n'
        else:
            msg += ' ' * (indent_level * 2) + k + ': ' + str(v) + '\n'
    return msg


def check_keys(section, opt, allowed):
    """Reject keys of ``opt`` outside ``allowed``."""
    if not isinstance(opt, dict):
        raise ConfigError(f'Section [{section}] must be a mapping, but got {type(opt).__name__}')
    unknown = [k for k in opt.keys() if k not in allowed]
    if unknown:
        raise ConfigError(f'Unknown keys in [{section}]: {unknown}. Allowed: {list(allowed)}')


def validate_options(opt):
    """Strict schema check of a parsed option dict.

    Sub-sections backed by dataclasses (``fixedpoint``, ``lq_spec``) and game
    builders (``model``) are checked again by the code that consumes them.
    """
    check_keys('root', opt, TOP_LEVEL_KEYS)
    if 'model' in opt and 'lq_spec' in opt:
        raise ConfigError('Give either [model] or [lq_spec], not both.')
    if 'model' in opt:
        model_opt = opt['model']
        if not isinstance(model_opt, dict) or ('preset' in model_opt) == ('type' in model_opt):
            raise ConfigError('[model] needs exactly one of the keys "preset" or "type".')
    if 'grid' in opt:
        check_keys('grid', opt['grid'], GRID_KEYS)
        n_steps = opt['grid'].get('n_steps', 100)
        if not isinstance(n_steps, int) or n_steps < 1:
            raise ConfigError(f'grid.n_steps must be a positive integer, but got {n_steps}')
    if 'experiment' in opt:
        check_keys('experiment', opt['experiment'], EXPERIMENT_KEYS)
    if 'seed' in opt:
        seed = opt['seed']
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f'seed must be an unsigned 64-bit integer, but got {seed}')
    return opt


def load_options(path):
    """Parse a YAML (or JSON) option file and validate it.

    Returns:
        OrderedDict: Options.
    """
    if path is None or not osp.isfile(path):
        raise ConfigError(f'Option file not found: {path}')
    with open(path, mode='r') as f:
        try:
            opt = yaml.load(f, Loader=ordered_yaml()[0])
        except yaml.YAMLError as err:
            raise ConfigError(f'Cannot parse option file {path}: {err}') from err
    if opt is None:
        opt = OrderedDict()
    return validate_options(opt)


def config_hash(opt):
    """sha256 of the canonical JSON form of the options."""
    canonical = json.dumps(opt, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
