from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from pymfg.data.measure import DiscreteMeasure
from pymfg.utils.rng import make_generator
from pymfg.utils.tensor_util import DTYPE, to_tensor

MEASURE_DEPENDENCE = ('none', 'mean-only', 'full')


class AssumptionViolation(ValueError):
    """A solver-blocking assumption failed; the report is attached."""

    def __init__(self, report, message=None):
        self.report = report
        if message is None:
            message = f'Blocking assumption failures: {report.blocking_failures}'
        super().__init__(message)


@dataclass
class AssumptionReport:
    """Outcome of the structural checks of a game.

    Each check stores ``passed``, ``detail`` and two flags: ``blocking`` failures stop
    the solvers, ``advisory`` checks never count against ``passed``.
    """
    checks: OrderedDict = field(default_factory=OrderedDict)
    gamma: Optional[float] = None
    lam: Optional[float] = None
    c_L: Optional[float] = None
    bounded_gradients: Optional[bool] = None

    def add(self, name, passed, detail='', blocking=False, advisory=False):
        self.checks[name] = {
            'passed': bool(passed),
            'detail': detail,
            'blocking': bool(blocking),
            'advisory': bool(advisory),
        }

    @property
    def passed(self):
        return all(c['passed'] for c in self.checks.values() if not c['advisory'])

    @property
    def failures(self):
        return [k for k, c in self.checks.items() if not c['passed'] and not c['advisory']]

    @property
    def blocking_failures(self):
        return [k for k, c in self.checks.items() if not c['passed'] and c['blocking']]

    def require(self):
        """Raise AssumptionViolation when a blocking check failed."""
        if self.blocking_failures:
            raise AssumptionViolation(self)
        return self

    def to_dict(self):
        return {
            'passed': self.passed,
            'failures': self.failures,
            'blocking_failures': self.blocking_failures,
            'gamma': self.gamma,
            'lambda': self.lam,
            'c_L': self.c_L,
            'bounded_gradients': self.bounded_gradients,
            'checks': dict(self.checks),
        }

    def summary_lines(self):
        lines = [f'assumptions passed: {self.passed}']
        for name, check in self.checks.items():
            status = 'ok' if check['passed'] else ('FAIL' if not check['advisory'] else 'warn')
            lines.append(f'  [{status}] {name}: {check["detail"]}')
        if self.gamma is not None:
            lines.append(f'  gamma (convexity in x): {self.gamma:.6g}')
        return lines


@dataclass(eq=False)
class MfgModel:
    """Coefficients of a mean-field game.

    Callables work on float64 tensors with a leading batch axis:
    ``b0(t, mu) -> (d,)``, ``b1(t) -> (d, d)``, ``b2(t) -> (d, k)``,
    ``f(t, x, mu, alpha) -> (B,)``, ``df_dx -> (B, d)``, ``df_dalpha -> (B, k)``,
    ``g(x, mu) -> (B,)``, ``dg_dx -> (B, d)`` with ``x`` of shape (B, d) and
    ``alpha`` of shape (B, k).
    """
    T: float
    d: int
    k: int
    m: int
    x0: torch.Tensor
    sigma: torch.Tensor
    b0: Callable
    b1: Callable
    b2: Callable
    f: Callable
    df_dx: Callable
    df_dalpha: Callable
    g: Callable
    dg_dx: Callable
    lam: float
    c_L: float
    measure_dependence: str = 'full'
    feedback_gain: Optional[Callable] = None
    lq_spec: Optional[object] = None
    gamma: Optional[float] = None
    name: str = 'custom'

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f'Horizon T must be positive, but got {self.T}')
        if min(self.d, self.k, self.m) < 1:
            raise ValueError(f'Dimensions must be positive, but got d={self.d}, k={self.k}, m={self.m}')
        if not self.lam > 0 or not self.c_L > 0:
            raise ValueError(f'lambda and c_L must be positive, but got {self.lam} and {self.c_L}')
        if self.measure_dependence not in MEASURE_DEPENDENCE:
            raise ValueError(f'measure_dependence must be one of {MEASURE_DEPENDENCE}, got {self.measure_dependence}')
        self.x0 = to_tensor(self.x0).reshape(-1)
        self.sigma = to_tensor(self.sigma).reshape(self.d, -1)
        if self.x0.shape[0] != self.d:
            raise ValueError(f'x0 has dimension {self.x0.shape[0]}, expected {self.d}')
        if self.sigma.shape != (self.d, self.m):
            raise ValueError(f'sigma has shape {tuple(self.sigma.shape)}, expected {(self.d, self.m)}')

    @property
    def is_lq(self):
        return self.lq_spec is not None

    def drift(self, t, x, mu, alpha):
        return self.b0(t, mu) + x @ self.b1(t).T + alpha @ self.b2(t).T


def _fd_gradient(func, point, step):
    """Central differences of a scalar batch function along each coordinate of ``point`` (1, n)."""
    cols = []
    for c in range(point.shape[1]):
        h = step * max(1.0, abs(float(point[0, c])))
        e = torch.zeros_like(point)
        e[0, c] = h
        cols.append((func(point + e) - func(point - e)) / (2 * h))
    return torch.cat(cols)


def _relative_error(approx, exact):
    return float(((approx - exact).abs() / exact.abs().clamp(min=1.0)).max())


def check_model_assumptions(model, n_samples=200, seed=0, n_times=101, fd_step=1e-5, fd_tol=1e-6):
    """Sampled checks of the structural assumptions of a user-supplied game.

    Checks the bounds on the drift coefficients over a time lattice, the analytic
    gradients against central finite differences, and the convexity inequality
    ``f(a') - f(a) - <a' - a, df/da(a)> >= lam |a' - a|^2`` at random points.

    Returns:
        AssumptionReport: The report; nothing is raised here.
    """
    rng = make_generator(seed, 'assumptions', 0)
    report = AssumptionReport(lam=model.lam, c_L=model.c_L, gamma=model.gamma)
    times = np.linspace(0.0, model.T, n_times)

    coef_sup = max(
        float(torch.linalg.matrix_norm(model.b1(t), ord=2) + torch.linalg.matrix_norm(model.b2(t), ord=2))
        for t in times)
    report.add('bounded b1 b2', coef_sup <= model.c_L + 1e-12, f'sup |b1| + |b2| = {coef_sup:.6g}')
    origin = DiscreteMeasure.dirac(torch.zeros(model.d, dtype=DTYPE))
    b0_sup = max(float(model.b0(t, origin).norm()) for t in times)
    report.add('bounded b0', b0_sup <= model.c_L + 1e-12, f'sup |b0(t, delta_0)| = {b0_sup:.6g}')

    grad_err = 0.0
    convexity_gap = np.inf
    for _ in range(n_samples):
        t = float(rng.uniform(0.0, model.T))
        x = torch.from_numpy(rng.normal(scale=2.0, size=(1, model.d)))
        alpha = torch.from_numpy(rng.normal(scale=2.0, size=(1, model.k)))
        alpha2 = torch.from_numpy(rng.normal(scale=2.0, size=(1, model.k)))
        mu = DiscreteMeasure(torch.from_numpy(rng.normal(size=(8, model.d))))

        fd_x = _fd_gradient(lambda z: model.f(t, z, mu, alpha), x, fd_step)
        fd_a = _fd_gradient(lambda z: model.f(t, x, mu, z), alpha, fd_step)
        fd_g = _fd_gradient(lambda z: model.g(z, mu), x, fd_step)
        grad_err = max(grad_err, _relative_error(fd_x, model.df_dx(t, x, mu, alpha)[0]),
                       _relative_error(fd_a, model.df_dalpha(t, x, mu, alpha)[0]),
                       _relative_error(fd_g, model.dg_dx(x, mu)[0]))

        lhs = model.f(t, x, mu, alpha2) - model.f(t, x, mu, alpha) - (
            (alpha2 - alpha) * model.df_dalpha(t, x, mu, alpha)).sum(-1)
        rhs = model.lam * ((alpha2 - alpha)**2).sum(-1)
        convexity_gap = min(convexity_gap, float(lhs - rhs))

    report.add('gradients', grad_err <= fd_tol, f'max relative finite-difference error {grad_err:.3e}')
    report.add(
        'convexity in alpha',
        convexity_gap >= -1e-9,
        f'min of f(a2) - f(a) - <a2 - a, df/da> - lam |a2 - a|^2 = {convexity_gap:.3e}',
        blocking=True)
    return report
