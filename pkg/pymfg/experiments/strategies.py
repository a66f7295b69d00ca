r"""Feedback strategies of a single player in the N-player game.

A strategy maps ``(j, t, x)`` with ``x`` of shape (B, d) to controls (B, k).
Strategies are registered by class name and built from option dicts such as
``{'type': 'ScaledStrategy', 'factor': 0.9}``.
"""
from copy import deepcopy

import torch

from pymfg.solvers.fbsde import LatticeConfig, solve_frozen_fbsde
from pymfg.solvers.hamiltonian import minimize_hamiltonian
from pymfg.utils.logger import get_root_logger
from pymfg.utils.registry import STRATEGY_REGISTRY
from pymfg.utils.tensor_util import DTYPE, to_tensor


class BaseStrategy():

    def __init__(self, label=None):
        self.label = label or self.__class__.__name__

    def bind(self, model, field, flow, context=None):
        """Attach the game, the limit field and the limit flow."""
        self.model = model
        self.field = field
        self.flow = flow
        return self

    def __call__(self, j, t, x):
        raise NotImplementedError

    def _equilibrium(self, j, t, x):
        return minimize_hamiltonian(self.model, t, x, self.flow[j], self.field.evaluate(j, x))


@STRATEGY_REGISTRY.register()
class EquilibriumStrategy(BaseStrategy):
    """The distributed feedback ``alpha_hat(t, x, mu_t, u(t, x))`` of the limit game."""

    def __call__(self, j, t, x):
        return self._equilibrium(j, t, x)


@STRATEGY_REGISTRY.register()
class ScaledStrategy(BaseStrategy):
    """The equilibrium feedback multiplied by ``factor``."""

    def __init__(self, factor, label=None):
        super().__init__(label or f'scaled_{factor:g}')
        self.factor = float(factor)

    def __call__(self, j, t, x):
        return self.factor * self._equilibrium(j, t, x)


@STRATEGY_REGISTRY.register()
class ZeroStrategy(BaseStrategy):

    def __init__(self, label=None):
        super().__init__(label or 'zero')

    def __call__(self, j, t, x):
        return torch.zeros(x.shape[0], self.model.k, dtype=DTYPE)


@STRATEGY_REGISTRY.register()
class ConstantStrategy(BaseStrategy):
    """Constant control; large values probe deviations with a large control energy."""

    def __init__(self, value, label=None):
        super().__init__(label)
        self.value = to_tensor(value).reshape(-1)
        if label is None:
            self.label = f'constant_{self.value.tolist()}'

    def __call__(self, j, t, x):
        return self.value.expand(x.shape[0], -1).clone()


@STRATEGY_REGISTRY.register()
class OpenLoopStrategy(BaseStrategy):
    """Deterministic control path, one k-vector per time step."""

    def __init__(self, path, label=None):
        super().__init__(label or 'open_loop')
        self.path = to_tensor(path)
        if self.path.dim() == 1:
            self.path = self.path.unsqueeze(-1)

    def bind(self, model, field, flow, context=None):
        if self.path.shape != (flow.grid.n_steps, model.k):
            raise ValueError(f'Open-loop path has shape {tuple(self.path.shape)}, '
                             f'expected {(flow.grid.n_steps, model.k)}')
        return super().bind(model, field, flow, context)

    def __call__(self, j, t, x):
        return self.path[j].expand(x.shape[0], -1).clone()


@STRATEGY_REGISTRY.register()
class FrozenFlowStrategy(BaseStrategy):
    """Optimal feedback against a re-solved frozen flow.

    The frozen FBSDE is solved again against ``context['reference_flow']`` (for instance
    the empirical flow of the other players) instead of the limit flow.
    """

    def __init__(self, lattice=None, label=None):
        super().__init__(label or 'frozen_flow_best_response')
        self.lattice = LatticeConfig.from_dict(lattice) if isinstance(lattice, dict) else lattice

    def bind(self, model, field, flow, context=None):
        context = context or {}
        reference = context.get('reference_flow')
        reference = flow if reference is None else reference
        lattice = self.lattice or context.get('lattice')
        super().bind(model, solve_frozen_fbsde(model, reference, lattice), reference, context)
        return self

    def __call__(self, j, t, x):
        return self._equilibrium(j, t, x)


def build_strategy(opt, model, field, flow, context=None):
    """Build and bind a strategy from options.

    Args:
        opt (dict | BaseStrategy): Configuration with ``type`` naming a registered
            strategy, or an already constructed strategy.
    """
    if isinstance(opt, BaseStrategy):
        return opt.bind(model, field, flow, context)
    opt = deepcopy(dict(opt))
    strategy_type = opt.pop('type')
    strategy = STRATEGY_REGISTRY.get(strategy_type)(**opt)
    get_root_logger().info(f'Strategy [{strategy.label}] is created.')
    return strategy.bind(model, field, flow, context)
