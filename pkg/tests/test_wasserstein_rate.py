import numpy as np
import pytest

from pymfg.data import build_sampler
from pymfg.experiments import RateTable, empirical_rate_experiment
from pymfg.metrics.wasserstein import MAX_LP_SIZE


def test_dirac_law_has_no_error():
    table = empirical_rate_experiment(build_sampler({'type': 'DiracSampler', 'point': 1.5}), [2, 8], reps=3, seed=0)
    assert np.all(table.mean_w2sq == 0.0)
    assert table.bound_holds and table.slope_holds and table.bias_ok


def test_reference_is_capped_by_the_transport_limit():
    sampler = build_sampler({'type': 'DiracSampler', 'point': [0.0, 1.0], 'dim': 2})
    table = empirical_rate_experiment(sampler, [4, 8], reps=2, seed=0, reference_atoms=MAX_LP_SIZE)
    assert table.reference_atoms == MAX_LP_SIZE // 8
    assert table.exponent == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize('Ns, reps', [([4, 8], 1), ([8, 4], 3), ([0, 4], 3), ([], 3)])
def test_invalid_arguments(Ns, reps):
    with pytest.raises(ValueError):
        empirical_rate_experiment(build_sampler({'type': 'UniformSampler'}), Ns, reps=reps, seed=0)


def test_uniform_law_matches_closed_form():
    # for the uniform law on [0, 1], E W2^2 = 1 / (6 N)
    Ns = [4, 16, 64]
    table = empirical_rate_experiment(
        build_sampler({'type': 'UniformSampler'}), Ns, reps=1000, seed=1, reference_atoms=10000)
    for N, mean, stderr in zip(Ns, table.mean_w2sq, table.stderr):
        assert abs(mean - 1.0 / (6 * N)) <= 4 * stderr + 1e-4
    assert table.slope == pytest.approx(-1.0, abs=0.1)
    assert table.bound_holds and table.slope_holds and table.bias_ok
    assert list(table.to_frame().columns) == ['N', 'mean_w2sq', 'stderr', 'bound_C_Npow']


def test_results_do_not_depend_on_workers():
    sampler = build_sampler({'type': 'GaussianSampler'})
    serial = empirical_rate_experiment(sampler, [8, 16], reps=5, seed=2, reference_atoms=500)
    threaded = empirical_rate_experiment(sampler, [8, 16], reps=5, seed=2, reference_atoms=500, num_workers=3)
    np.testing.assert_array_equal(serial.mean_w2sq, threaded.mean_w2sq)


def test_rate_table_bound():
    table = RateTable(
        Ns=[10, 100], dim=1, mean_w2sq=np.array([0.1, 0.05]), stderr=np.zeros(2), reference_atoms=10,
        reference_bias=0.0)
    # 10 ** (-0.4) is about 0.398
    assert not table.bound_holds
    assert not table.slope_holds
    assert table.summary()['constant'] == pytest.approx(0.1 * 10**0.4)


@pytest.mark.calibration
def test_gaussian_rate_respects_bound():
    table = empirical_rate_experiment(
        build_sampler({'type': 'GaussianSampler'}), [16, 64, 256, 1024], reps=100, seed=0, reference_atoms=100000)
    assert table.bound_holds, table.to_frame()
    assert table.slope_holds
    assert table.bias_ok
