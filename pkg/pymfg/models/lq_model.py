r"""Linear-quadratic games.

Dynamics ``dX = (b0 E[X] + b1 X + b2 alpha) dt + sigma dW``, running cost
``1/2 |m X + mbar E[X]|^2 + 1/2 |n alpha|^2`` and terminal cost
``1/2 |q X + qbar E[X]|^2``. The drift and running-cost coefficients are
piecewise constant in time.
"""
import bisect
import json
from dataclasses import dataclass

import numpy as np
import torch

from pymfg.models.base_model import AssumptionReport, MfgModel
from pymfg.utils.registry import MODEL_REGISTRY
from pymfg.utils.tensor_util import DTYPE

LQ_FIELDS = ('b0', 'b1', 'b2', 'm', 'mbar', 'n', 'q', 'qbar', 'sigma', 'x0', 'T')
PSD_TOL = 1e-12


def _as_matrix(value, shape, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        if shape[0] == shape[1]:
            return float(arr) * np.eye(shape[0])
        if shape == (1, 1):
            return arr.reshape(1, 1)
    elif arr.size == shape[0] * shape[1] and arr.ndim <= 2:
        return arr.reshape(shape)
    raise ValueError(f'LQ coefficient {name} must have shape {shape}, but got {np.shape(value)}')


def _min_sym_eig(mat):
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())


class TimeCoefficient():
    """Matrix-valued piecewise-constant function of time.

    ``values[0]`` holds on ``[0, breakpoints[0])``, ``values[i]`` on
    ``[breakpoints[i-1], breakpoints[i])`` and the last value up to the horizon.
    """

    def __init__(self, values, breakpoints=()):
        self.breakpoints = [float(b) for b in breakpoints]
        self.values = [np.array(v, dtype=np.float64) for v in values]
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError(f'{len(self.breakpoints)} breakpoints need {len(self.breakpoints) + 1} values, '
                             f'got {len(self.values)}')
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError(f'Breakpoints must be strictly increasing, got {self.breakpoints}')
        if len({v.shape for v in self.values}) != 1:
            raise ValueError('All pieces of a coefficient must share one shape')
        if not all(np.isfinite(v).all() for v in self.values):
            raise ValueError('Coefficient values must be finite')
        self._tensors = [torch.from_numpy(v).to(DTYPE) for v in self.values]

    @classmethod
    def parse(cls, obj, shape, name):
        if isinstance(obj, dict):
            if set(obj.keys()) != {'breakpoints', 'values'}:
                raise ValueError(f'Time-dependent coefficient {name} needs exactly the keys breakpoints and values')
            return cls([_as_matrix(v, shape, name) for v in obj['values']], obj['breakpoints'])
        return cls([_as_matrix(obj, shape, name)])

    def _index(self, t):
        return bisect.bisect_right(self.breakpoints, t)

    def __call__(self, t):
        return self.values[self._index(t)]

    def tensor(self, t):
        return self._tensors[self._index(t)]

    @property
    def shape(self):
        return self.values[0].shape

    @property
    def is_constant(self):
        return len(self.values) == 1

    def sup_norm(self):
        return max(np.linalg.norm(v, 2) for v in self.values)

    def to_json(self):
        if self.is_constant:
            return self.values[0].tolist()
        return {'breakpoints': self.breakpoints, 'values': [v.tolist() for v in self.values]}


@dataclass(eq=False)
class LqSpec:
    """Coefficients of a linear-quadratic game.

    ``b0, b1, m, mbar, q, qbar`` are (d, d), ``b2`` is (d, k), ``n`` is (k, k),
    ``sigma`` is (d, m_noise) and ``x0`` is (d,). Time-dependent entries are TimeCoefficient.
    """
    b0: TimeCoefficient
    b1: TimeCoefficient
    b2: TimeCoefficient
    m: TimeCoefficient
    mbar: TimeCoefficient
    n: TimeCoefficient
    q: np.ndarray
    qbar: np.ndarray
    sigma: np.ndarray
    x0: np.ndarray
    T: float

    @property
    def d(self):
        return self.x0.shape[0]

    @property
    def k(self):
        return self.n.shape[0]

    @property
    def noise_dim(self):
        return self.sigma.shape[1]

    @classmethod
    def from_dict(cls, opt):
        unknown = [key for key in opt if key not in LQ_FIELDS]
        missing = [key for key in LQ_FIELDS if key not in opt]
        if unknown or missing:
            raise ValueError(f'LQ spec has unknown fields {unknown} and missing fields {missing}')
        T = float(opt['T'])
        if not T > 0:
            raise ValueError(f'Horizon T must be positive, but got {T}')
        x0 = np.atleast_1d(np.asarray(opt['x0'], dtype=np.float64)).reshape(-1)
        d = x0.shape[0]

        def _first(value):
            return value['values'][0] if isinstance(value, dict) else value

        n_first, b2_first = np.asarray(_first(opt['n'])), np.asarray(_first(opt['b2']))
        if n_first.ndim == 2:
            k = n_first.shape[0]
        elif b2_first.ndim == 2:
            k = b2_first.shape[1]
        else:
            k = d
        sigma_raw = np.asarray(opt['sigma'], dtype=np.float64)
        noise_dim = sigma_raw.shape[1] if sigma_raw.ndim == 2 else (1 if sigma_raw.ndim == 1 else d)
        for key in ('q', 'qbar', 'sigma'):
            if isinstance(opt[key], dict):
                raise ValueError(f'{key} must be constant in time')

        spec = cls(
            b0=TimeCoefficient.parse(opt['b0'], (d, d), 'b0'),
            b1=TimeCoefficient.parse(opt['b1'], (d, d), 'b1'),
            b2=TimeCoefficient.parse(opt['b2'], (d, k), 'b2'),
            m=TimeCoefficient.parse(opt['m'], (d, d), 'm'),
            mbar=TimeCoefficient.parse(opt['mbar'], (d, d), 'mbar'),
            n=TimeCoefficient.parse(opt['n'], (k, k), 'n'),
            q=_as_matrix(opt['q'], (d, d), 'q'),
            qbar=_as_matrix(opt['qbar'], (d, d), 'qbar'),
            sigma=_as_matrix(sigma_raw, (d, noise_dim), 'sigma'),
            x0=x0,
            T=T)
        for name, coef in spec.time_coefficients().items():
            if coef.breakpoints and not (0.0 < coef.breakpoints[0] and coef.breakpoints[-1] < T):
                raise ValueError(f'Breakpoints of {name} must lie inside (0, T), got {coef.breakpoints}')
        return spec

    def time_coefficients(self):
        return {'b0': self.b0, 'b1': self.b1, 'b2': self.b2, 'm': self.m, 'mbar': self.mbar, 'n': self.n}

    def piece_starts(self):
        """Left endpoints of the intervals on which every coefficient is constant."""
        starts = {0.0}
        for coef in self.time_coefficients().values():
            starts.update(coef.breakpoints)
        return sorted(starts)

    def to_dict(self):
        out = {name: coef.to_json() for name, coef in self.time_coefficients().items()}
        out.update(q=self.q.tolist(), qbar=self.qbar.tolist(), sigma=self.sigma.tolist(), x0=self.x0.tolist(), T=self.T)
        return {key: out[key] for key in LQ_FIELDS}

    def save(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))

    def control_cost_matrix(self, t):
        """``B(t) = b2 (n^T n)^{-1} b2^T``."""
        b2, n = self.b2(t), self.n(t)
        return b2 @ np.linalg.solve(n.T @ n, b2.T)


def lq_constants(spec):
    """Convexity constant lambda, Lipschitz bound c_L and convexity in x gamma."""
    starts = spec.piece_starts()
    lam = 0.5 * min(_min_sym_eig(spec.n(t).T @ spec.n(t)) for t in starts)
    gamma = 0.5 * min(_min_sym_eig(spec.m(t).T @ spec.m(t)) for t in starts)
    norms = [1.0, np.linalg.norm(spec.q.T @ spec.q, 2), np.linalg.norm(spec.q.T @ spec.qbar, 2)]
    for t in starts:
        m, mbar, n = spec.m(t), spec.mbar(t), spec.n(t)
        norms += [
            np.linalg.norm(spec.b1(t), 2) + np.linalg.norm(spec.b2(t), 2),
            np.linalg.norm(spec.b0(t), 2),
            np.linalg.norm(m.T @ m, 2),
            np.linalg.norm(m.T @ mbar, 2),
            np.linalg.norm(n.T @ n, 2),
        ]
    return lam, float(max(norms)), (gamma if gamma > PSD_TOL else None)


def check_lq_assumptions(spec):
    """Structural checks of an LQ game, exact on every constant piece.

    Strict convexity in the control is blocking; the monotonicity conditions
    ``sym(q^T qbar) >= 0`` and ``sym(m^T mbar) >= 0`` are required for the
    existence theory, and the weaker ``sym(q^T (q + qbar)) >= 0``,
    ``sym(m^T (m + mbar)) >= 0`` are reported for information.

    Returns:
        AssumptionReport: The report; nothing is raised here.
    """
    report = AssumptionReport()
    starts = spec.piece_starts()

    min_conv = min(_min_sym_eig(spec.n(t).T @ spec.n(t)) for t in starts)
    report.add('convexity in alpha', min_conv > PSD_TOL, f'min eigenvalue of n^T n = {min_conv:.6g}', blocking=True)
    min_rank = min(np.linalg.matrix_rank(spec.n(t)) for t in starts)
    report.add('n invertible', min_rank == spec.k, f'min rank of n = {min_rank}', blocking=True)

    terminal = _min_sym_eig(spec.q.T @ spec.qbar)
    report.add('terminal monotonicity', terminal >= -PSD_TOL, f'min eigenvalue of sym(q^T qbar) = {terminal:.6g}')
    running = min(_min_sym_eig(spec.m(t).T @ spec.mbar(t)) for t in starts)
    report.add('running monotonicity', running >= -PSD_TOL, f'min eigenvalue of sym(m^T mbar) = {running:.6g}')

    weak_terminal = _min_sym_eig(spec.q.T @ (spec.q + spec.qbar))
    weak_running = min(_min_sym_eig(spec.m(t).T @ (spec.m(t) + spec.mbar(t))) for t in starts)
    report.add(
        'weak solvability',
        min(weak_terminal, weak_running) >= -PSD_TOL,
        f'min eigenvalues of sym(q^T (q + qbar)) = {weak_terminal:.6g}, sym(m^T (m + mbar)) = {weak_running:.6g}',
        advisory=True)

    if min_conv > PSD_TOL:
        report.lam, report.c_L, report.gamma = lq_constants(spec)
        report.add('bounded coefficients', True, f'c_L = {report.c_L:.6g}')
    report.bounded_gradients = bool(np.all(spec.q == 0) and all(np.all(v == 0) for v in spec.m.values))
    return report


def _measure_dependence(spec):
    coupled = [spec.qbar] + spec.b0.values + spec.mbar.values
    return 'mean-only' if any(np.any(c != 0) for c in coupled) else 'none'


def build_lq_model(spec):
    """Turn an LqSpec into an MfgModel with closed-form gradients.

    Raises:
        AssumptionViolation: if ``n^T n`` is not positive definite.
    """
    report = check_lq_assumptions(spec).require()
    q = torch.from_numpy(spec.q)
    qbar = torch.from_numpy(spec.qbar)

    def b0(t, mu):
        return spec.b0.tensor(t) @ mu.mean()

    def running_residual(t, x, mu):
        return x @ spec.m.tensor(t).T + spec.mbar.tensor(t) @ mu.mean()

    def terminal_residual(x, mu):
        return x @ q.T + qbar @ mu.mean()

    def f(t, x, mu, alpha):
        ctrl = alpha @ spec.n.tensor(t).T
        return 0.5 * (running_residual(t, x, mu)**2).sum(-1) + 0.5 * (ctrl**2).sum(-1)

    def df_dx(t, x, mu, alpha):
        return running_residual(t, x, mu) @ spec.m.tensor(t)

    def df_dalpha(t, x, mu, alpha):
        n = spec.n.tensor(t)
        return (alpha @ n.T) @ n

    def g(x, mu):
        return 0.5 * (terminal_residual(x, mu)**2).sum(-1)

    def dg_dx(x, mu):
        return terminal_residual(x, mu) @ q

    def feedback_gain(t):
        n = spec.n.tensor(t)
        return torch.linalg.solve(n.T @ n, spec.b2.tensor(t).T)

    return MfgModel(
        T=spec.T,
        d=spec.d,
        k=spec.k,
        m=spec.noise_dim,
        x0=spec.x0,
        sigma=spec.sigma,
        b0=b0,
        b1=spec.b1.tensor,
        b2=spec.b2.tensor,
        f=f,
        df_dx=df_dx,
        df_dalpha=df_dalpha,
        g=g,
        dg_dx=dg_dx,
        lam=report.lam,
        c_L=report.c_L,
        measure_dependence=_measure_dependence(spec),
        feedback_gain=feedback_gain,
        lq_spec=spec,
        gamma=report.gamma,
        name='lq')


@MODEL_REGISTRY.register()
def lq_game(**opt):
    """LQ game from the LqSpec field names (see LQ_FIELDS)."""
    return build_lq_model(LqSpec.from_dict(opt))
