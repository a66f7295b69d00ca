import datetime
import logging
import time

initialized_logger = {}


class AvgTimer():

    def __init__(self, window=200):
        self.window = window  # average window
        self.current_time = 0
        self.total_time = 0
        self.count = 0
        self.avg_time = 0
        self.start()

    def start(self):
        self.start_time = self.tic = time.time()

    def record(self):
        self.count += 1
        self.toc = time.time()
        self.current_time = self.toc - self.tic
        self.total_time += self.current_time
        self.avg_time = self.total_time / self.count

        if self.count > self.window:
            self.count = 0
            self.total_time = 0

        self.tic = time.time()

    def get_current_time(self):
        return self.current_time


class IterationLogger():
    """Message logger for iterative solvers.

    Args:
        name (str): Run name shown in front of each message.
        max_iters (int): Iteration budget, used for the ETA.
        interval (int): Log every ``interval`` iterations. Default: 1.
    """

    def __init__(self, name, max_iters, interval=1):
        self.name = name
        self.max_iters = max_iters
        self.interval = interval
        self.start_time = time.time()
        self.logger = get_root_logger()

    def __call__(self, log_vars):
        """Format one logging message.

        Args:
            log_vars (dict): It contains the following keys:
                iter (int): Current iteration, starting from 1.
                time (float, optional): Time of the current iteration.
            Every other item is printed as ``key: value``.
        """
        log_vars = dict(log_vars)
        current_iter = log_vars.pop('iter')
        if current_iter % self.interval != 0 and current_iter != self.max_iters:
            return

        message = f'[{self.name[:12]}][iter:{current_iter:4d}/{self.max_iters}] '

        if 'time' in log_vars:
            iter_time = log_vars.pop('time')
            total_time = time.time() - self.start_time
            eta_sec = total_time / current_iter * (self.max_iters - current_iter)
            eta_str = str(datetime.timedelta(seconds=int(eta_sec)))
            message += f'[eta: {eta_str}, time: {iter_time:.3f}] '

        for k, v in log_vars.items():
            if isinstance(v, float):
                message += f'{k}: {v:.4e} '
            else:
                message += f'{k}: {v} '
        self.logger.info(message)


def get_root_logger(logger_name='pymfg', log_level=None, log_file=None):
    """Get the root logger.

    The logger will be initialized if it has not been initialized. By default a
    StreamHandler will be added. If `log_file` is specified, a FileHandler will
    also be added.

    Args:
        logger_name (str): root logger name. Default: 'pymfg'.
        log_level (int | None): The logger level. Left unchanged when None,
            except on first initialization where it defaults to INFO.
        log_file (str | None): The log filename. If specified, a FileHandler
            will be added to the root logger.

    Returns:
        logging.Logger: The root logger.
    """
    logger = logging.getLogger(logger_name)
    format_str = '%(asctime)s %(levelname)s: %(message)s'

    if logger_name not in initialized_logger:
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(logging.Formatter(format_str))
        logger.addHandler(stream_handler)
        logger.propagate = False
        logger.setLevel(logging.INFO if log_level is None else log_level)
        initialized_logger[logger_name] = True
    elif log_level is not None:
        logger.setLevel(log_level)

    if log_file is not None:
        file_handler = logging.FileHandler(log_file, 'w')
        file_handler.setFormatter(logging.Formatter(format_str))
        logger.addHandler(file_handler)
    return logger


def close_file_handlers(logger_name='pymfg'):
    """Detach and close every file handler of the logger."""
    logger = logging.getLogger(logger_name)
    for handler in list(logger.handlers):
        if isinstance(handler, logging.FileHandler):
            logger.removeHandler(handler)
            handler.close()


def get_env_info():
    """Get environment information.

    Currently, only the versions of the numerical stack.
    """
    import numpy
    import ot
    import scipy
    import torch

    return {
        'numpy': numpy.__version__,
        'scipy': scipy.__version__,
        'torch': torch.__version__,
        'pot': ot.__version__,
    }
