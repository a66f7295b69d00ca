from copy import deepcopy

from pymfg.utils.registry import METRIC_REGISTRY
from .wasserstein import moment, sup_w2, w1_exact, w2, w2_1d, w2_exact

__all__ = [
    'moment',
    'w2_1d',
    'w2_exact',
    'w1_exact',
    'w2',
    'sup_w2',
    'calculate_metric',
]


def calculate_metric(data, opt):
    """Calculate metric from data and options.

    Args:
        data (tuple): Positional arguments of the metric, e.g. two measures.
        opt (dict): Configuration. It must contain:
            type (str): Metric name, e.g. ``w2_1d``.
    """
    opt = deepcopy(opt)
    metric_type = opt.pop('type')
    return METRIC_REGISTRY.get(metric_type)(*data, **opt)
