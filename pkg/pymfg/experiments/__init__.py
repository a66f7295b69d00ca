from .nplayer import (ChaosTable, NashGapReport, PlayerCosts, chaos_experiment, deviation_sweep, fit_loglog_slope,
                      nash_gap_study, simulate_nplayer, simulate_system)
from .strategies import (BaseStrategy, ConstantStrategy, EquilibriumStrategy, FrozenFlowStrategy, OpenLoopStrategy,
                         ScaledStrategy, ZeroStrategy, build_strategy)
from .wasserstein_rate import RateTable, empirical_rate_experiment

__all__ = [
    # strategies.py
    'BaseStrategy',
    'EquilibriumStrategy',
    'ScaledStrategy',
    'ZeroStrategy',
    'ConstantStrategy',
    'OpenLoopStrategy',
    'FrozenFlowStrategy',
    'build_strategy',
    # nplayer.py
    'PlayerCosts',
    'NashGapReport',
    'ChaosTable',
    'simulate_system',
    'simulate_nplayer',
    'deviation_sweep',
    'nash_gap_study',
    'chaos_experiment',
    'fit_loglog_slope',
    # wasserstein_rate.py
    'RateTable',
    'empirical_rate_experiment',
]
