from .logger import AvgTimer, IterationLogger, close_file_handlers, get_env_info, get_root_logger
from .misc import get_time_str, make_run_dir, parallel_map, scandir, set_random_seed
from .rng import STREAM_IDS, gaussian_increments, make_generator, player_increments
from .tensor_util import DTYPE, as_batch, to_matrix, to_tensor

__all__ = [
    # logger.py
    'AvgTimer',
    'IterationLogger',
    'close_file_handlers',
    'get_root_logger',
    'get_env_info',
    # misc.py
    'set_random_seed',
    'get_time_str',
    'make_run_dir',
    'parallel_map',
    'scandir',
    # rng.py
    'STREAM_IDS',
    'make_generator',
    'gaussian_increments',
    'player_increments',
    # tensor_util.py
    'DTYPE',
    'to_tensor',
    'as_batch',
    'to_matrix',
]
