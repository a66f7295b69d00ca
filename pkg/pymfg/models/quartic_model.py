import torch

from pymfg.models.base_model import MfgModel
from pymfg.utils.registry import MODEL_REGISTRY
from pymfg.utils.tensor_util import DTYPE


@MODEL_REGISTRY.register()
def quartic_game(x0=0.0, sigma=1.0, T=1.0, kappa=0.1, rho=0.5, c_x=1.0, d=1):
    """Game with a quartic control penalty and no closed-form minimizer.

    ``dX = alpha dt + sigma dW``, running cost ``c_x/2 |x|^2 + 1/2 |alpha|^2 + kappa sum(alpha^4)``,
    terminal cost ``1/2 |x + rho E[X]|^2``.

    Args:
        x0 (float | list): Initial point.
        sigma (float): Noise level, the volatility is ``sigma * I``.
        T (float): Horizon.
        kappa (float): Weight of the quartic term, must be non-negative.
        rho (float): Mean-field weight of the terminal cost, must be non-negative.
        c_x (float): State penalty, must be non-negative.
        d (int): State and control dimension.
    """
    assert kappa >= 0 and rho >= 0 and c_x >= 0, f'Need kappa, rho, c_x >= 0, got {kappa}, {rho}, {c_x}'
    eye = torch.eye(d, dtype=DTYPE)
    zeros = torch.zeros(d, d, dtype=DTYPE)
    x0 = torch.as_tensor(x0, dtype=DTYPE).expand(d).clone()

    def f(t, x, mu, alpha):
        return 0.5 * c_x * (x**2).sum(-1) + 0.5 * (alpha**2).sum(-1) + kappa * (alpha**4).sum(-1)

    def df_dx(t, x, mu, alpha):
        return c_x * x

    def df_dalpha(t, x, mu, alpha):
        return alpha + 4 * kappa * alpha**3

    def terminal_residual(x, mu):
        return x + rho * mu.mean()

    return MfgModel(
        T=T,
        d=d,
        k=d,
        m=d,
        x0=x0,
        sigma=sigma * eye,
        b0=lambda t, mu: torch.zeros(d, dtype=DTYPE),
        b1=lambda t: zeros,
        b2=lambda t: eye,
        f=f,
        df_dx=df_dx,
        df_dalpha=df_dalpha,
        g=lambda x, mu: 0.5 * (terminal_residual(x, mu)**2).sum(-1),
        dg_dx=terminal_residual,
        lam=0.5,
        c_L=max(1.0, c_x, 1.0 + rho),
        measure_dependence='mean-only' if rho > 0 else 'none',
        gamma=0.5 * c_x if c_x > 0 else None,
        name='quartic')
