import importlib
from copy import deepcopy
from os import path as osp

from pymfg.utils import get_root_logger, scandir
from pymfg.utils.registry import MODEL_REGISTRY
from .base_model import AssumptionReport, AssumptionViolation, MfgModel, check_model_assumptions
from .lq_model import LqSpec, TimeCoefficient, build_lq_model, check_lq_assumptions

__all__ = [
    'build_model',
    'MfgModel',
    'AssumptionReport',
    'AssumptionViolation',
    'check_model_assumptions',
    'LqSpec',
    'TimeCoefficient',
    'build_lq_model',
    'check_lq_assumptions',
]

# automatically scan and import model modules for registry
# scan all the files under the 'models' folder and collect files ending with
# '_model.py'
model_folder = osp.dirname(osp.abspath(__file__))
model_filenames = [osp.splitext(osp.basename(v))[0] for v in scandir(model_folder) if v.endswith('_model.py')]
# import all the model modules
_model_modules = [importlib.import_module(f'pymfg.models.{file_name}') for file_name in model_filenames]


def build_model(opt):
    """Build a game from options.

    Args:
        opt (dict): Configuration. It must contain:
            type (str): Name of a registered game builder, e.g. ``lq_game``.
    """
    opt = deepcopy(opt)
    model_type = opt.pop('type')
    try:
        model = MODEL_REGISTRY.get(model_type)(**opt)
    except TypeError as err:
        raise ValueError(f'Bad options for game [{model_type}]: {err}') from err
    logger = get_root_logger()
    logger.info(f'Game [{model_type}] is created.')
    return model
