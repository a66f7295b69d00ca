r"""Finite-population experiments.

N players follow the distributed equilibrium feedback of the limit game and
interact through their empirical measure. Replications use independent noise
keyed by ``(N, replication, player)``; the decoupled system replaces the
empirical measure by the limit flow and shares the noise, so the two can be
compared path by path.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from pymfg.data.measure import DiscreteMeasure, MeasureFlow
from pymfg.experiments.strategies import EquilibriumStrategy, build_strategy
from pymfg.metrics import calculate_metric
from pymfg.solvers.fbsde import euler_step, summarize
from pymfg.utils.logger import get_root_logger
from pymfg.utils.misc import parallel_map
from pymfg.utils.rng import player_increments
from pymfg.utils.tensor_util import DTYPE


def fit_loglog_slope(Ns, values):
    """Least-squares slope of log(value) against log(N); nan unless every value is positive."""
    values = np.asarray(values, dtype=np.float64)
    if len(Ns) < 2 or np.any(values <= 0) or not np.all(np.isfinite(values)):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(Ns, dtype=np.float64)), np.log(values), 1)[0])


def _profile(model, field_, flow, deviations):
    base = EquilibriumStrategy().bind(model, field_, flow)

    def control(j, t, x):
        alpha = base(j, t, x)
        if deviations:
            alpha = alpha.clone()
            for player, strategy in deviations.items():
                alpha[player:player + 1] = strategy(j, t, x[player:player + 1])
        return alpha

    return control


def simulate_system(model, flow, control, noise, coupled=True):
    """Euler scheme of the player system.

    Args:
        flow (MeasureFlow): Limit flow; it replaces the empirical measure when ``coupled`` is False.
        control (callable): ``(j, t, X) -> (N, k)`` for all players at once.
        noise (Tensor): (n_steps, N, m) increments.

    Returns:
        tuple: Paths (n_steps + 1, N, d) and per-player costs (N,).
    """
    grid = flow.grid
    dt = grid.dt
    N = noise.shape[1]
    X = model.x0.expand(N, model.d).clone()
    paths = [X]
    running = torch.zeros(N, dtype=DTYPE)
    for j in range(grid.n_steps):
        t = grid.time(j)
        env = DiscreteMeasure(X, validate=False) if coupled else flow[j]
        alpha = control(j, t, X)
        running = running + model.f(t, X, env, alpha) * dt
        X = euler_step(model, t, X, env, alpha, dt, noise[j])
        paths.append(X)
    env = DiscreteMeasure(X, validate=False) if coupled else flow[-1]
    costs = running + model.g(X, env)
    return torch.stack(paths), costs


@dataclass
class PlayerCosts:
    """Per-replication costs of every player, (replications, N)."""
    N: int
    costs: np.ndarray
    paths: Optional[List[torch.Tensor]] = None

    @property
    def replications(self):
        return self.costs.shape[0]

    @property
    def mean(self):
        return self.costs.mean(axis=0)

    @property
    def stderr(self):
        return self.costs.std(axis=0, ddof=1) / math.sqrt(self.replications)


def simulate_nplayer(model,
                     field_,
                     flow,
                     N,
                     seed,
                     replications=200,
                     deviations=None,
                     num_workers=1,
                     keep_paths=False):
    """Monte Carlo costs of the N-player game under the distributed equilibrium feedback.

    Args:
        deviations (dict, optional): ``player index -> strategy`` overriding the equilibrium.
        keep_paths (bool): Also return the paths of every replication.

    Returns:
        PlayerCosts: Costs per replication and player.
    """
    if N < 1:
        raise ValueError(f'Need at least one player, got N = {N}')
    if replications < 2:
        raise ValueError(f'Need at least two replications, got {replications}')
    for player in (deviations or {}):
        if not 0 <= player < N:
            raise ValueError(f'Deviating player {player} out of range for N = {N}')
    grid = flow.grid
    control = _profile(model, field_, flow, deviations)

    def run(rep):
        noise = player_increments(seed, N, rep, grid.n_steps, model.m)
        return simulate_system(model, flow, control, noise, coupled=True)

    results = parallel_map(run, range(replications), num_workers)
    costs = np.stack([c.numpy() for _, c in results])
    return PlayerCosts(N=N, costs=costs, paths=[p for p, _ in results] if keep_paths else None)


@dataclass
class NashGapReport:
    """Finite-N costs against the limit cost and the gains of unilateral deviations.

    ``epsilon[N] = |J^{N,1} - J|``; each deviation row records the mean improvement of
    player 1 (positive when the deviation helps), its standard error, whether it stays
    below ``epsilon[N] + 3 stderr``, and the smallest mean cost among the other players.
    """
    limit_cost: float
    Ns: List[int] = field(default_factory=list)
    player_costs: Dict[int, np.ndarray] = field(default_factory=dict)
    player_stderr: Dict[int, np.ndarray] = field(default_factory=dict)
    epsilon: Dict[int, float] = field(default_factory=dict)
    deviations: List[dict] = field(default_factory=list)
    note: str = ('Passing deviation checks only covers the listed deviations; '
                 'it is no proof of an approximate equilibrium against every strategy.')

    @classmethod
    def merge(cls, reports):
        reports = list(reports)
        merged = cls(limit_cost=reports[0].limit_cost)
        for report in reports:
            merged.Ns += report.Ns
            merged.player_costs.update(report.player_costs)
            merged.player_stderr.update(report.player_stderr)
            merged.epsilon.update(report.epsilon)
            merged.deviations += report.deviations
        return merged

    def cost_gaps(self, N):
        return np.abs(self.player_costs[N] - self.limit_cost)

    def average_gap(self, N):
        return float(abs(self.player_costs[N].mean() - self.limit_cost))

    @property
    def gap_slope(self):
        return fit_loglog_slope(self.Ns, [self.average_gap(N) for N in self.Ns])

    @property
    def slope_reliable(self):
        return len(self.Ns) >= 4

    @property
    def passes(self):
        return all(row['passes'] for row in self.deviations)

    def costs_frame(self):
        frames = []
        for N in self.Ns:
            frames.append(
                pd.DataFrame({
                    'N': N,
                    'player': np.arange(1, N + 1),
                    'mean_cost': self.player_costs[N],
                    'stderr': self.player_stderr[N],
                    'gap': self.cost_gaps(N),
                }))
        return pd.concat(frames, ignore_index=True)

    def deviations_frame(self):
        return pd.DataFrame(self.deviations)

    def summary(self):
        return {
            'limit_cost': self.limit_cost,
            'Ns': self.Ns,
            'epsilon': {str(N): self.epsilon[N] for N in self.Ns},
            'average_gap': {str(N): self.average_gap(N) for N in self.Ns},
            'gap_slope': self.gap_slope,
            'slope_reliable': self.slope_reliable,
            'passes': self.passes,
            'note': self.note,
        }


def deviation_sweep(model,
                    field_,
                    flow,
                    N,
                    deviations,
                    replications,
                    seed,
                    limit_cost,
                    num_workers=1,
                    lattice_config=None):
    """Gain of player 1 from each unilateral deviation, on common noise.

    Args:
        deviations (list): Strategy option dicts or strategy instances.
        limit_cost (float): Cost J of the limit game.

    Returns:
        NashGapReport: Report for this N.
    """
    if not deviations:
        raise ValueError('deviation_sweep needs at least one deviation')
    logger = get_root_logger()
    base = simulate_nplayer(model, field_, flow, N, seed, replications, num_workers=num_workers, keep_paths=True)
    epsilon = float(abs(base.mean[0] - limit_cost))

    # environment seen by player 1: the other players of the first replication
    others = base.paths[0][:, 1:, :] if N > 1 else base.paths[0]
    reference = MeasureFlow.from_paths(flow.grid, others, support_size=others.shape[1], seed=seed)
    context = {'reference_flow': reference, 'lattice': lattice_config}

    report = NashGapReport(limit_cost=float(limit_cost), Ns=[N])
    report.player_costs[N] = base.mean
    report.player_stderr[N] = base.stderr
    report.epsilon[N] = epsilon
    for opt in deviations:
        strategy = build_strategy(opt, model, field_, flow, context)
        dev = simulate_nplayer(
            model, field_, flow, N, seed, replications, deviations={0: strategy}, num_workers=num_workers)
        gain, gain_stderr = summarize(base.costs[:, 0] - dev.costs[:, 0])
        min_other = float(dev.mean[1:].min()) if N > 1 else math.nan
        row = {
            'N': N,
            'deviation': strategy.label,
            'deviator_cost': float(dev.mean[0]),
            'improvement': gain,
            'stderr': gain_stderr,
            'epsilon': epsilon,
            'passes': bool(gain <= epsilon + 3 * gain_stderr),
            'min_other_cost': min_other,
            'others_not_better': bool(N == 1 or min_other >= limit_cost - epsilon - 3 * float(dev.stderr[1:].max())),
        }
        report.deviations.append(row)
        logger.info(f'N={N} deviation [{strategy.label}]: improvement {gain:.4e} +- {gain_stderr:.2e}, '
                    f'epsilon {epsilon:.4e}')
    return report


def nash_gap_study(model,
                   field_,
                   flow,
                   Ns,
                   deviations,
                   replications,
                   seed,
                   limit_cost,
                   num_workers=1,
                   lattice_config=None,
                   progress=False):
    """Run ``deviation_sweep`` for every N and merge the reports."""
    reports = []
    for N in tqdm(Ns, desc='nash-gap', disable=not progress):
        reports.append(
            deviation_sweep(model, field_, flow, N, deviations, replications, seed, limit_cost, num_workers,
                            lattice_config))
    return NashGapReport.merge(reports)


@dataclass
class ChaosTable:
    """Propagation-of-chaos errors per N.

    ``coupling`` is ``max_i E sup_t |X^i - Xbar^i|^2``, ``w2sq`` is
    ``sup_t E W2^2(empirical_t, mu_t)`` and ``cost_gap`` is
    ``|mean_i J^{N,i} - J|``; each comes with a standard error. Bounds
    ``C N^(-2/(d+4))`` are calibrated at the smallest N.
    """
    Ns: List[int]
    dim: int
    coupling: np.ndarray
    coupling_stderr: np.ndarray
    w2sq: np.ndarray
    w2sq_stderr: np.ndarray
    cost_gap: np.ndarray
    cost_gap_stderr: np.ndarray
    player1_gap: np.ndarray
    limit_cost: Optional[float] = None

    @property
    def exponent(self):
        return 2.0 / (self.dim + 4)

    def _bound(self, values):
        C = values[0] * self.Ns[0]**self.exponent
        return C * np.asarray(self.Ns, dtype=np.float64)**(-self.exponent)

    @property
    def slopes(self):
        return {
            'coupling': fit_loglog_slope(self.Ns, self.coupling),
            'w2sq': fit_loglog_slope(self.Ns, self.w2sq),
            'cost_gap': fit_loglog_slope(self.Ns, self.cost_gap),
        }

    @property
    def bound_holds(self):
        return {
            'coupling': bool(np.all(self.coupling <= self._bound(self.coupling) + 1e-15)),
            'w2sq': bool(np.all(self.w2sq <= self._bound(self.w2sq) + 1e-15)),
        }

    def to_frame(self):
        return pd.DataFrame({
            'N': self.Ns,
            'coupling_error': self.coupling,
            'coupling_stderr': self.coupling_stderr,
            'coupling_bound': self._bound(self.coupling),
            'w2sq': self.w2sq,
            'w2sq_stderr': self.w2sq_stderr,
            'w2sq_bound': self._bound(self.w2sq),
            'cost_gap': self.cost_gap,
            'cost_gap_stderr': self.cost_gap_stderr,
            'player1_gap': self.player1_gap,
        })

    def summary(self):
        return {
            'Ns': self.Ns,
            'exponent': self.exponent,
            'slopes': self.slopes,
            'bound_holds': self.bound_holds,
            'limit_cost': self.limit_cost,
        }


def chaos_experiment(model,
                     field_,
                     flow,
                     Ns,
                     replications,
                     seed,
                     limit_cost=None,
                     num_workers=1,
                     metric=None,
                     time_stride=1,
                     progress=False):
    """Coupled against decoupled players on common noise, for each N.

    Args:
        metric (dict, optional): Distance options for ``calculate_metric``; defaults to
            ``w2_1d`` in d = 1 and ``w2_exact`` otherwise.
        time_stride (int): Evaluate the W2 term every ``time_stride`` nodes.

    Returns:
        ChaosTable: Errors, standard errors and cost gaps per N.
    """
    Ns = list(Ns)
    if not Ns or any(N < 2 for N in Ns):
        raise ValueError(f'Chaos experiments need N >= 2 for every N, got {Ns}')
    if replications < 2:
        raise ValueError(f'Need at least two replications, got {replications}')
    metric = metric or {'type': 'w2_1d' if model.d == 1 else 'w2_exact'}
    grid = flow.grid
    nodes = list(range(0, len(grid), time_stride))
    if nodes[-1] != grid.n_steps:
        nodes.append(grid.n_steps)
    control = _profile(model, field_, flow, None)

    rows = {key: [] for key in ('coupling', 'coupling_se', 'w2sq', 'w2sq_se', 'gap', 'gap_se', 'gap1')}
    for N in tqdm(Ns, desc='chaos', disable=not progress):

        def run(rep):
            noise = player_increments(seed, N, rep, grid.n_steps, model.m)
            coupled, costs = simulate_system(model, flow, control, noise, coupled=True)
            decoupled, _ = simulate_system(model, flow, control, noise, coupled=False)
            sup_sq = ((coupled - decoupled)**2).sum(-1).amax(dim=0).numpy()
            w2sq = np.array([
                calculate_metric((DiscreteMeasure(coupled[j], validate=False), flow[j]), metric)**2 for j in nodes
            ])
            return sup_sq, w2sq, costs.numpy()

        results = parallel_map(run, range(replications), num_workers)
        sup_sq = np.stack([r[0] for r in results])  # (R, N)
        w2sq = np.stack([r[1] for r in results])  # (R, nodes)
        costs = np.stack([r[2] for r in results])  # (R, N)

        per_player = sup_sq.mean(axis=0)
        worst = int(per_player.argmax())
        rows['coupling'].append(float(per_player[worst]))
        rows['coupling_se'].append(float(sup_sq[:, worst].std(ddof=1) / math.sqrt(replications)))
        per_node = w2sq.mean(axis=0)
        peak = int(per_node.argmax())
        rows['w2sq'].append(float(per_node[peak]))
        rows['w2sq_se'].append(float(w2sq[:, peak].std(ddof=1) / math.sqrt(replications)))
        if limit_cost is None:
            rows['gap'].append(math.nan)
            rows['gap_se'].append(math.nan)
            rows['gap1'].append(math.nan)
        else:
            avg_mean, avg_se = summarize(costs.mean(axis=1))
            rows['gap'].append(abs(avg_mean - limit_cost))
            rows['gap_se'].append(avg_se)
            rows['gap1'].append(float(abs(costs[:, 0].mean() - limit_cost)))

    return ChaosTable(
        Ns=Ns,
        dim=model.d,
        coupling=np.array(rows['coupling']),
        coupling_stderr=np.array(rows['coupling_se']),
        w2sq=np.array(rows['w2sq']),
        w2sq_stderr=np.array(rows['w2sq_se']),
        cost_gap=np.array(rows['gap']),
        cost_gap_stderr=np.array(rows['gap_se']),
        player1_gap=np.array(rows['gap1']),
        limit_cost=limit_cost)
