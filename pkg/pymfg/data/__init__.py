import importlib
from copy import deepcopy
from os import path as osp

from pymfg.utils import get_root_logger, scandir
from pymfg.utils.registry import SAMPLER_REGISTRY
from .measure import DiscreteMeasure, MeasureFlow
from .time_grid import TimeGrid

__all__ = ['TimeGrid', 'DiscreteMeasure', 'MeasureFlow', 'build_sampler']

# automatically scan and import sampler modules for registry
# scan all the files under the data folder with '_sampler' in file names
data_folder = osp.dirname(osp.abspath(__file__))
sampler_filenames = [osp.splitext(osp.basename(v))[0] for v in scandir(data_folder) if v.endswith('_sampler.py')]
# import all the sampler modules
_sampler_modules = [importlib.import_module(f'pymfg.data.{file_name}') for file_name in sampler_filenames]


def build_sampler(opt):
    """Build a distribution sampler from options.

    Args:
        opt (dict): Configuration. It must contain:
            type (str): Sampler type, e.g. ``GaussianSampler``.
    """
    opt = deepcopy(opt)
    sampler_type = opt.pop('type')
    sampler = SAMPLER_REGISTRY.get(sampler_type)(**opt)
    logger = get_root_logger()
    logger.info(f'Sampler [{sampler.__class__.__name__}] is created.')
    return sampler
