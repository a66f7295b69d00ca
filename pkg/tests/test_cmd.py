import filecmp
import os
from os import path as osp

import pandas as pd
import pytest
import yaml

from pymfg.pipelines import EXIT_INVALID, EXIT_OK, run
from pymfg.pymfg_cmd import main
from pymfg.utils.io_util import read_json

from .conftest import DEGENERATE_COST

OPTIONS_DIR = osp.join(osp.dirname(osp.abspath(__file__)), '..', 'options')

SMALL_SOLVE = {
    'name': 'tiny',
    'seed': 4,
    'model': {
        'preset': 'lq_measure_free'
    },
    'grid': {
        'n_steps': 10
    },
    'fixedpoint': {
        'damping': 1.0,
        'n_particles': 200,
        'support_size': 50,
        'lattice': {
            'h': 0.1,
            'radius': 4.0
        }
    },
    'experiment': {
        'smp_perturbations': 2,
        'smp_particles': 100
    },
}


def _write_options(tmp_path, opt, name='opt.yml'):
    path = str(tmp_path / name)
    with open(path, 'w') as f:
        yaml.safe_dump(opt, f)
    return path


def test_validate_reports_advisory_violation(tmp_path):
    out = str(tmp_path / 'results')
    status = main(['validate', '--config', osp.join(OPTIONS_DIR, 'validate_lq_violating.yml'), '--out', out, '--quiet'])
    assert status == EXIT_OK
    run_dir = osp.join(out, 'validate_lq_violating')
    report = read_json(osp.join(run_dir, 'assumptions.json'))
    assert 'terminal monotonicity' in report['failures']
    assert report['blocking_failures'] == []
    with open(osp.join(run_dir, 'summary.txt')) as f:
        assert 'terminal monotonicity' in f.read()


def test_lq_oracle_outputs(tmp_path):
    out = str(tmp_path / 'results')
    status, run_dir = run('lq-oracle', osp.join(OPTIONS_DIR, 'lq_oracle_degenerate.yml'), out, quiet=True)
    assert status == EXIT_OK
    for name in ('riccati.csv', 'oracle.json', 'manifest.json', 'config.json', 'summary.txt', 'run.log'):
        assert osp.isfile(osp.join(run_dir, name)), name
    assert read_json(osp.join(run_dir, 'oracle.json'))['J'] == pytest.approx(DEGENERATE_COST, abs=1e-6)
    frame = pd.read_csv(osp.join(run_dir, 'riccati.csv'))
    assert list(frame.columns) == ['t', 'eta', 'chi', 'xbar', 'var'] and len(frame) == 101
    manifest = read_json(osp.join(run_dir, 'manifest.json'))
    assert manifest['exit_code'] == 0 and manifest['seed'] == 0
    assert manifest['streams']['nplayer'] == 4
    assert len(manifest['config_hash']) == 64


def test_runs_never_share_a_directory_and_repeat_exactly(tmp_path):
    out = str(tmp_path / 'results')
    config = osp.join(OPTIONS_DIR, 'lq_oracle_degenerate.yml')
    _, first = run('lq-oracle', config, out, quiet=True)
    _, second = run('lq-oracle', config, out, quiet=True)
    assert second == first + '_1'
    assert filecmp.cmp(osp.join(first, 'riccati.csv'), osp.join(second, 'riccati.csv'), shallow=False)


def test_missing_config_exits_with_two(tmp_path):
    out = str(tmp_path / 'results')
    assert main(['solve', '--config', str(tmp_path / 'nope.yml'), '--out', out, '--quiet']) == EXIT_INVALID
    assert not osp.exists(out) or os.listdir(out) == []


def test_unknown_keys_are_rejected(tmp_path):
    path = _write_options(tmp_path, {'name': 'typo', 'model': {'preset': 'lq_degenerate'}, 'gird': {'n_steps': 5}})
    assert main(['lq-oracle', '--config', path, '--out', str(tmp_path / 'results'), '--quiet']) == EXIT_INVALID


def test_bad_command_and_seed(tmp_path):
    config = osp.join(OPTIONS_DIR, 'lq_oracle_degenerate.yml')
    assert main(['explode', '--config', config]) == EXIT_INVALID
    assert main(['lq-oracle', '--config', config, '--seed', '-1', '--quiet']) == EXIT_INVALID


def test_singular_oracle_exits_with_two(tmp_path):
    path = _write_options(tmp_path, {'name': 'singular', 'model': {'preset': 'lq_violating'}, 'grid': {'n_steps': 400}})
    status, run_dir = run('lq-oracle', path, str(tmp_path / 'results'), quiet=True)
    assert status == EXIT_INVALID
    assert read_json(osp.join(run_dir, 'manifest.json'))['exit_code'] == EXIT_INVALID


def test_small_solve_is_reproducible(tmp_path):
    path = _write_options(tmp_path, SMALL_SOLVE)
    out = str(tmp_path / 'results')
    status, first = run('solve', path, out, quiet=True)
    assert status == EXIT_OK
    for name in ('flow.csv', 'residuals.csv', 'field.json', 'cost.json', 'regularity.json', 'smp_gap.csv'):
        assert osp.isfile(osp.join(first, name)), name
    cost = read_json(osp.join(first, 'cost.json'))
    assert cost['converged'] and cost['iterations'] == 2
    assert len(pd.read_csv(osp.join(first, 'smp_gap.csv'))) == 2

    _, second = run('solve', path, out, quiet=True)
    for name in ('flow.csv', 'residuals.csv', 'smp_gap.csv'):
        assert filecmp.cmp(osp.join(first, name), osp.join(second, name), shallow=False), name


def test_default_nash_sweep_includes_the_equilibrium(tmp_path):
    opt = {k: v for k, v in SMALL_SOLVE.items() if k != 'experiment'}
    opt['experiment'] = {'Ns': [2, 3], 'replications': 2}
    status, run_dir = run('nash-gap', _write_options(tmp_path, opt), str(tmp_path / 'results'), quiet=True)
    assert status == EXIT_OK
    frame = pd.read_csv(osp.join(run_dir, 'nash_deviations.csv'))
    assert list(frame[frame['N'] == 2]['deviation']) == ['EquilibriumStrategy', 'scaled_0.9', 'scaled_1.1', 'zero']
    equilibrium = frame[frame['deviation'] == 'EquilibriumStrategy']
    assert (equilibrium['improvement'].abs() <= 1e-12).all()


def test_seed_override_lands_in_manifest(tmp_path):
    opt = {
        'name': 'rate',
        'experiment': {
            'sampler': {
                'type': 'UniformSampler'
            },
            'Ns': [4, 8],
            'reps': 3,
            'reference_atoms': 100
        }
    }
    path = _write_options(tmp_path, opt)
    status, run_dir = run('wasserstein-rate', path, str(tmp_path / 'results'), seed=17, quiet=True)
    assert status == EXIT_OK
    assert read_json(osp.join(run_dir, 'manifest.json'))['seed'] == 17
    assert list(pd.read_csv(osp.join(run_dir, 'rate.csv'))['N']) == [4, 8]
