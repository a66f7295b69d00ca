r"""Command pipelines behind the ``pymfg`` console script.

Each pipeline takes a run context and returns ``(exit_code, summary_lines)``.
``run`` owns the run directory, the log file and the manifest.
"""
import logging
import time
from collections import OrderedDict
from copy import deepcopy
from os import path as osp

import numpy as np
import pandas as pd
import torch

from pymfg.api_helpers import get_game_opts
from pymfg.data import TimeGrid, build_sampler
from pymfg.experiments import chaos_experiment, empirical_rate_experiment, nash_gap_study
from pymfg.models import (AssumptionViolation, LqSpec, build_lq_model, build_model, check_lq_assumptions,
                          check_model_assumptions)
from pymfg.solvers import (FixedPointConfig, LqOracleError, check_value_function, random_feedback_perturbations,
                           smp_gap_check, solve_lq_riccati, solve_mfg)
from pymfg.solvers.fixedpoint import fresh_matching_error, geometric_rate
from pymfg.utils import close_file_handlers, get_env_info, get_root_logger, make_run_dir, set_random_seed
from pymfg.utils.io_util import write_csv, write_json, write_summary
from pymfg.utils.options import ConfigError, config_hash, dict2str, load_options
from pymfg.utils.rng import STREAM_IDS
from pymfg.version import __gitsha__, __version__

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

DEFAULT_NASH_DEVIATIONS = (
    {'type': 'EquilibriumStrategy'},
    {'type': 'ScaledStrategy', 'factor': 0.9},
    {'type': 'ScaledStrategy', 'factor': 1.1},
    {'type': 'ZeroStrategy'},
)


def lq_spec_from_options(opt):
    """The LqSpec behind the options, or None for games without one."""
    if 'lq_spec' in opt:
        spec_opt = opt['lq_spec']
    elif 'model' in opt:
        model_opt = _model_options(opt)
        if model_opt.get('type') != 'lq_game':
            return None
        spec_opt = {k: v for k, v in model_opt.items() if k != 'type'}
    else:
        raise ConfigError('Options need a [model] or an [lq_spec] section.')
    try:
        return LqSpec.from_dict(dict(spec_opt))
    except ValueError as err:
        raise ConfigError(f'Bad LQ spec: {err}') from err


def _model_options(opt):
    model_opt = dict(deepcopy(opt['model']))
    if 'preset' in model_opt:
        preset = model_opt.pop('preset')
        try:
            return get_game_opts(preset, **model_opt)
        except AssertionError as err:
            raise ConfigError(str(err)) from err
    return model_opt


def model_from_options(opt):
    spec = lq_spec_from_options(opt)
    if spec is not None:
        return build_lq_model(spec)
    return build_model(_model_options(opt))


def fixedpoint_config(opt, seed):
    fp_opt = dict(deepcopy(opt.get('fixedpoint', {})))
    if 'seed' in fp_opt:
        raise ConfigError('Set the master seed at the top level, not in [fixedpoint].')
    if 'n_steps' in fp_opt:
        raise ConfigError('Set the number of time steps in [grid], not in [fixedpoint].')
    fp_opt['n_steps'] = opt.get('grid', {}).get('n_steps', 100)
    fp_opt['seed'] = seed
    try:
        return FixedPointConfig.from_dict(fp_opt)
    except (TypeError, ValueError, AssertionError) as err:
        raise ConfigError(f'Bad [fixedpoint] section: {err}') from err


def _experiment(ctx):
    return ctx['opt'].get('experiment', {})


def _oracle(model, n_steps):
    if model.lq_spec is None:
        return None
    return solve_lq_riccati(model.lq_spec, TimeGrid(model.T, n_steps))


def _solve_and_write(ctx):
    """Solve the game and write the solve artifacts; shared by solve, nash-gap and chaos."""
    opt, run_dir, logger = ctx['opt'], ctx['run_dir'], get_root_logger()
    model = model_from_options(opt)
    config = fixedpoint_config(opt, ctx['seed'])
    solution = solve_mfg(model, config, name=opt.get('name', 'mfg'))

    write_csv(solution.flow.to_frame(), osp.join(run_dir, 'flow.csv'))
    write_csv(solution.residual_frame(), osp.join(run_dir, 'residuals.csv'))
    solution.field.save(osp.join(run_dir, 'field.json'))
    regularity = check_value_function(solution.field, _experiment(ctx).get('regularity_cap'))
    write_json(regularity.to_dict(), osp.join(run_dir, 'regularity.json'))

    cost = solution.cost.to_dict()
    cost.update({
        'converged': solution.converged,
        'diverged': solution.diverged,
        'iterations': solution.iterations,
        'final_residual': solution.residual_history[-1],
        'contraction': geometric_rate(solution.residual_history),
    })
    oracle = _oracle(model, config.n_steps)
    if oracle is not None:
        cost['oracle_cost'] = oracle.J
        cost['mean_path_error'] = float(np.abs(solution.flow.mean_path() - oracle.xbar).max())
    if solution.converged:
        cost['fresh_matching_error'] = fresh_matching_error(model, solution)
    write_json(cost, osp.join(run_dir, 'cost.json'))

    lines = [
        f'converged: {solution.converged} after {solution.iterations} iterations '
        f'(final residual {solution.residual_history[-1]:.4e}, tol {config.tol})',
        f'cost J: {solution.cost.mean:.6f} +- {solution.cost.stderr:.2e}',
        f'field lipschitz {regularity.lipschitz:.4f}, growth {regularity.growth:.4f}'
        + (' (cap violated)' if regularity.violated else ''),
    ]
    if oracle is not None:
        lines.append(f'oracle cost {oracle.J:.6f}, sup_t |mean - xbar| {cost["mean_path_error"]:.4e}')
    if not solution.converged:
        logger.warning('Fixed point not reached; experiments that need an equilibrium are skipped.')
    limit_cost = _experiment(ctx).get('limit_cost')
    if limit_cost is None:
        limit_cost = oracle.J if oracle is not None else solution.cost.mean
    return model, solution, float(limit_cost), lines


def _smp_checks(ctx, model, solution):
    """Sufficiency gaps of the solved control against random feedback perturbations."""
    exp = _experiment(ctx)
    count = exp.get('smp_perturbations', 0)
    if not count:
        return []
    perturbations = random_feedback_perturbations(count, model.d, model.k, ctx['seed'])
    rows = []
    for i, perturbation in enumerate(perturbations):
        report = smp_gap_check(model, solution.flow, solution.field, perturbation,
                               exp.get('smp_particles', solution.config.n_particles), ctx['seed'] + i)
        rows.append({'perturbation': i, 'amplitude': perturbation.sup_norm(), **report.to_dict()})
    frame = pd.DataFrame(rows)
    write_csv(frame, osp.join(ctx['run_dir'], 'smp_gap.csv'))
    return [f'SMP gap: min {frame["gap"].min():.4e} over {count} perturbations, all hold: {bool(frame["holds"].all())}']


def run_solve(ctx):
    model, solution, _, lines = _solve_and_write(ctx)
    if not solution.converged:
        return EXIT_NOT_CONVERGED, lines
    return EXIT_OK, lines + _smp_checks(ctx, model, solution)


def run_lq_oracle(ctx):
    opt, run_dir = ctx['opt'], ctx['run_dir']
    spec = lq_spec_from_options(opt)
    if spec is None:
        raise ConfigError('lq-oracle needs an LQ game ([lq_spec] or a model of type lq_game).')
    grid = TimeGrid(spec.T, opt.get('grid', {}).get('n_steps', 100))
    sol = solve_lq_riccati(spec, grid)
    write_csv(sol.to_frame(), osp.join(run_dir, 'riccati.csv'))
    write_json({
        'J': sol.J,
        'eta_0': sol.eta[0],
        'chi_0': sol.chi[0],
        'xbar_T': sol.xbar[-1],
        'boundary_residual': sol.boundary_residual,
        'assumptions': sol.report.to_dict(),
    }, osp.join(run_dir, 'oracle.json'))
    lines = [
        f'J = {sol.J:.10f}',
        f'eta_0 = {sol.eta[0].tolist()}, xbar_T = {sol.xbar[-1].tolist()}',
        f'boundary residual {sol.boundary_residual:.3e}',
    ] + sol.report.summary_lines()
    return EXIT_OK, lines


def run_nash_gap(ctx):
    model, solution, limit_cost, lines = _solve_and_write(ctx)
    if not solution.converged:
        return EXIT_NOT_CONVERGED, lines
    exp, run_dir = _experiment(ctx), ctx['run_dir']
    report = nash_gap_study(
        model,
        solution.field,
        solution.flow,
        exp.get('Ns', [16, 64, 256]),
        list(exp.get('deviations', DEFAULT_NASH_DEVIATIONS)),
        exp.get('replications', 200),
        ctx['seed'],
        limit_cost,
        num_workers=ctx['num_workers'],
        lattice_config=solution.config.lattice,
        progress=ctx['progress'])
    write_csv(report.costs_frame(), osp.join(run_dir, 'nash_costs.csv'))
    write_csv(report.deviations_frame(), osp.join(run_dir, 'nash_deviations.csv'))
    write_json(report.summary(), osp.join(run_dir, 'nash_gap.json'))
    lines.append(f'limit cost {limit_cost:.6f}; epsilon_N: '
                 + ', '.join(f'{N}: {report.epsilon[N]:.4e}' for N in report.Ns))
    lines.append(f'gap slope {report.gap_slope:.3f} (reliable: {report.slope_reliable}); '
                 f'all deviations pass: {report.passes}')
    lines.append(report.note)
    return EXIT_OK, lines


def run_chaos(ctx):
    model, solution, limit_cost, lines = _solve_and_write(ctx)
    if not solution.converged:
        return EXIT_NOT_CONVERGED, lines
    exp, run_dir = _experiment(ctx), ctx['run_dir']
    table = chaos_experiment(
        model,
        solution.field,
        solution.flow,
        exp.get('Ns', [8, 16, 32, 64, 128, 256, 512]),
        exp.get('replications', 200),
        ctx['seed'],
        limit_cost=limit_cost,
        num_workers=ctx['num_workers'],
        metric=exp.get('metric'),
        time_stride=exp.get('time_stride', 1),
        progress=ctx['progress'])
    write_csv(table.to_frame(), osp.join(run_dir, 'chaos.csv'))
    write_json(table.summary(), osp.join(run_dir, 'chaos.json'))
    lines.append(f'slopes: {table.slopes}')
    lines.append(f'bounds C N^-{table.exponent:.3f} hold: {table.bound_holds}')
    return EXIT_OK, lines


def run_wasserstein_rate(ctx):
    exp, run_dir = _experiment(ctx), ctx['run_dir']
    try:
        sampler = build_sampler(dict(exp.get('sampler', {'type': 'GaussianSampler'})))
    except (KeyError, TypeError, AssertionError) as err:
        raise ConfigError(f'Bad experiment.sampler: {err}') from err
    table = empirical_rate_experiment(
        sampler,
        exp.get('Ns', [16 * 2**i for i in range(9)]),
        exp.get('reps', 100),
        ctx['seed'],
        reference_atoms=exp.get('reference_atoms', 100000),
        num_workers=ctx['num_workers'],
        progress=ctx['progress'])
    write_csv(table.to_frame(), osp.join(run_dir, 'rate.csv'))
    write_json(table.summary(), osp.join(run_dir, 'rate.json'))
    return EXIT_OK, [
        f'slope {table.slope:.3f} against -{table.exponent:.3f}; bound holds: {table.bound_holds}',
        f'reference bias {table.reference_bias:.3e} (ok: {table.bias_ok})',
    ]


def run_validate(ctx):
    opt, run_dir = ctx['opt'], ctx['run_dir']
    spec = lq_spec_from_options(opt)
    if spec is not None:
        report = check_lq_assumptions(spec)
    else:
        report = check_model_assumptions(build_model(_model_options(opt)), seed=ctx['seed'])
    write_json(report.to_dict(), osp.join(run_dir, 'assumptions.json'))
    return (EXIT_INVALID if report.blocking_failures else EXIT_OK), report.summary_lines()


PIPELINES = OrderedDict([
    ('solve', run_solve),
    ('lq-oracle', run_lq_oracle),
    ('nash-gap', run_nash_gap),
    ('chaos', run_chaos),
    ('wasserstein-rate', run_wasserstein_rate),
    ('validate', run_validate),
])


def run(command, config_path, out_dir, seed=None, threads=1, quiet=False):
    """Execute one command and persist its run directory.

    Returns:
        tuple: Exit code and the run directory (None when the options could not be read).
    """
    if command not in PIPELINES:
        raise ValueError(f'Unknown command {command}, available: {list(PIPELINES)}')
    logger = get_root_logger(log_level=logging.WARNING if quiet else logging.INFO)
    try:
        opt = load_options(config_path)
    except ConfigError as err:
        logger.error(str(err))
        return EXIT_INVALID, None
    if seed is not None:
        opt['seed'] = int(seed)
    seed = opt.get('seed', 0)
    set_random_seed(seed)

    run_dir = make_run_dir(out_dir, f'{command}_{opt.get("name", "run")}')
    get_root_logger(log_file=osp.join(run_dir, 'run.log'))
    logger.info(f'Run [{command}] in {run_dir}' + dict2str(opt))
    write_json(opt, osp.join(run_dir, 'config.json'))

    ctx = {
        'opt': opt,
        'seed': seed,
        'run_dir': run_dir,
        'num_workers': max(int(threads), 1),
        'progress': not quiet,
    }
    start = time.time()
    try:
        status, lines = PIPELINES[command](ctx)
    except (ValueError, LqOracleError) as err:
        # ConfigError and AssumptionViolation are ValueErrors too
        logger.error(f'{type(err).__name__}: {err}')
        status, lines = EXIT_INVALID, [f'{type(err).__name__}: {err}']
        if isinstance(err, AssumptionViolation):
            lines += err.report.summary_lines()
    elapsed = time.time() - start

    write_json({
        'command': command,
        'exit_code': status,
        'config_hash': config_hash(opt),
        'seed': seed,
        'version': __version__,
        'git_sha': __gitsha__,
        'threads': ctx['num_workers'],
        'torch_threads': torch.get_num_threads(),
        'streams': dict(STREAM_IDS),
        'env': get_env_info(),
        'wall_clock_seconds': elapsed,
    }, osp.join(run_dir, 'manifest.json'))
    write_summary([f'pymfg {command} (exit {status})'] + lines, osp.join(run_dir, 'summary.txt'))
    for line in lines:
        logger.info(line)
    close_file_handlers()
    return status, run_dir
