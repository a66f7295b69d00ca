from collections import OrderedDict

# Presets are option dicts for ``build_model``. ``lq_acceptance`` and
# ``lq_degenerate`` have closed-form or Riccati oracles in ``solvers.lq_oracle``.

_LQ_DEGENERATE = OrderedDict(
    b0=0.0, b1=0.0, b2=1.0, m=0.0, mbar=0.0, n=1.0, q=1.0, qbar=0.0, sigma=1.0, x0=1.0, T=1.0)

DEFAULT_CONFIGS = OrderedDict({
    'lq_acceptance': {
        'model_opts': {
            'type': 'lq_game',
            'b0': 0.0,
            'b1': 0.0,
            'b2': 1.0,
            'm': 1.0,
            'mbar': 0.5,
            'n': 1.0,
            'q': 1.0,
            'qbar': 0.5,
            'sigma': 1.0,
            'x0': 1.0,
            'T': 1.0,
        },
        'measure_dependence': 'mean-only',
        'oracle': True,
    },
    'lq_degenerate': {
        'model_opts': dict(type='lq_game', **_LQ_DEGENERATE),
        'measure_dependence': 'none',
        'oracle': True,
    },
    'lq_measure_free': {
        'model_opts': dict(type='lq_game', **{
            **_LQ_DEGENERATE, 'm': 1.0
        }),
        'measure_dependence': 'none',
        'oracle': True,
    },
    'lq_violating': {
        'model_opts': dict(type='lq_game', **{
            **_LQ_DEGENERATE, 'qbar': -2.0
        }),
        'measure_dependence': 'mean-only',
        'oracle': True,
    },
    'quartic_control': {
        'model_opts': {
            'type': 'quartic_game',
            'x0': 1.0,
            'sigma': 1.0,
            'T': 1.0,
            'kappa': 0.1,
            'rho': 0.5,
            'c_x': 1.0,
        },
        'measure_dependence': 'mean-only',
        'oracle': False,
    },
})
