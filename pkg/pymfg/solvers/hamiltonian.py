r"""Reduced Hamiltonian and its minimizer in the control.

``H(t, x, mu, y, alpha) = <b(t, x, mu, alpha), y> + f(t, x, mu, alpha)``
"""
import torch

from pymfg.utils.tensor_util import DTYPE, as_batch

NEWTON_TOL = 1e-8
NEWTON_MAX_ITERS = 200
MAX_HALVINGS = 40
FD_STEP = 1e-6


class HamiltonianSolverError(RuntimeError):
    """The minimizer did not reach the gradient tolerance within its budget."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def _prepare(model, x, y, alpha=None):
    x, single = as_batch(x, model.d)
    y, _ = as_batch(y, model.d)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f'x and y batch sizes differ: {x.shape[0]} vs {y.shape[0]}')
    if alpha is not None:
        alpha, _ = as_batch(alpha, model.k)
        if alpha.shape[0] != x.shape[0]:
            raise ValueError(f'x and alpha batch sizes differ: {x.shape[0]} vs {alpha.shape[0]}')
    return x, y, alpha, single


def _hamiltonian(model, t, x, mu, y, alpha):
    return (model.drift(t, x, mu, alpha) * y).sum(-1) + model.f(t, x, mu, alpha)


def _alpha_gradient(model, t, x, mu, y, alpha, b2):
    return y @ b2 + model.df_dalpha(t, x, mu, alpha)


def hamiltonian_value(model, t, x, mu, y, alpha):
    """Evaluate H on a batch of points.

    Args:
        model (MfgModel): The game.
        t (float): Time.
        x (Tensor): States, (B, d) or a single (d,) point.
        mu (DiscreteMeasure): Population measure.
        y (Tensor): Adjoint variables, same layout as ``x``.
        alpha (Tensor): Controls, (B, k) or (k,).

    Returns:
        Tensor: (B,) values, or a 0-d tensor for a single point.
    """
    x, y, alpha, single = _prepare(model, x, y, alpha)
    value = _hamiltonian(model, t, x, mu, y, alpha)
    return value[0] if single else value


def _alpha_hessian(model, t, x, mu, alpha):
    """Hessian of f in alpha, (B, k, k), by autograd or central differences."""
    k = alpha.shape[-1]
    with torch.enable_grad():
        a = alpha.detach().clone().requires_grad_(True)
        grad = model.df_dalpha(t, x, mu, a)
        if grad.requires_grad:
            rows = [torch.autograd.grad(grad[:, c].sum(), a, retain_graph=c < k - 1)[0] for c in range(k)]
            return torch.stack(rows, dim=1).detach()
    cols = []
    for c in range(k):
        e = torch.zeros(k, dtype=DTYPE)
        e[c] = FD_STEP
        cols.append((model.df_dalpha(t, x, mu, alpha + e) - model.df_dalpha(t, x, mu, alpha - e)) / (2 * FD_STEP))
    return torch.stack(cols, dim=-1)


def _newton_minimize(model, t, x, mu, y, tol, max_iters):
    b2 = model.b2(t)
    alpha = torch.zeros(x.shape[0], model.k, dtype=DTYPE)
    value = _hamiltonian(model, t, x, mu, y, alpha)
    grad = _alpha_gradient(model, t, x, mu, y, alpha, b2)
    for _ in range(max_iters):
        res = grad.norm(dim=-1)
        active = res > tol
        if not active.any():
            return alpha

        hess = _alpha_hessian(model, t, x, mu, alpha)
        chol, info = torch.linalg.cholesky_ex(hess)
        direction = -grad
        definite = info == 0
        if definite.any():
            direction[definite] = -torch.cholesky_solve(grad[definite].unsqueeze(-1), chol[definite]).squeeze(-1)

        # per-sample step halving until H or |grad H| decreases
        step = torch.ones(x.shape[0], dtype=DTYPE)
        pending = active.clone()
        for _ in range(MAX_HALVINGS):
            cand = alpha + step.unsqueeze(-1) * direction
            cand_value = _hamiltonian(model, t, x, mu, y, cand)
            cand_grad = _alpha_gradient(model, t, x, mu, y, cand, b2)
            accept = pending & ((cand_value < value) | (cand_grad.norm(dim=-1) < res))
            alpha = torch.where(accept.unsqueeze(-1), cand, alpha)
            value = torch.where(accept, cand_value, value)
            grad = torch.where(accept.unsqueeze(-1), cand_grad, grad)
            pending = pending & ~accept
            if not pending.any():
                break
            step = torch.where(pending, 0.5 * step, step)

    res = grad.norm(dim=-1)
    worst = int(res.argmax())
    raise HamiltonianSolverError(
        f'Hamiltonian minimizer stopped after {max_iters} iterations with gradient norm {float(res[worst]):.3e} '
        f'at t={t}, x={x[worst].tolist()}',
        iterate=alpha[worst],
        residual=float(res[worst]))


def minimize_hamiltonian(model, t, x, mu, y, tol=NEWTON_TOL, max_iters=NEWTON_MAX_ITERS):
    """Minimizer of H in the control.

    LQ games use the closed form ``alpha = -(n^T n)^{-1} b2^T y``; other games a
    damped Newton iteration on ``b2^T y + df/dalpha = 0`` with a gradient step
    where the Hessian is not positive definite.

    Returns:
        Tensor: (B, k) minimizers, or (k,) for a single point.

    Raises:
        HamiltonianSolverError: if the gradient norm stays above ``tol``.
    """
    x, y, _, single = _prepare(model, x, y)
    if model.feedback_gain is not None:
        alpha = -y @ model.feedback_gain(t).T
    else:
        alpha = _newton_minimize(model, t, x, mu, y, tol, max_iters)
    return alpha[0] if single else alpha


def alpha_bound(model, t, x, mu, y):
    """Upper bound ``(|df/dalpha(t, x, mu, 0)| + |b2(t)| |y|) / lam`` on the minimizer norm."""
    x, y, _, single = _prepare(model, x, y)
    zero = torch.zeros(x.shape[0], model.k, dtype=DTYPE)
    bound = (model.df_dalpha(t, x, mu, zero).norm(dim=-1) +
             torch.linalg.matrix_norm(model.b2(t), ord=2) * y.norm(dim=-1)) / model.lam
    return bound[0] if single else bound


def minimizer_lipschitz_constant(model, times):
    """Lipschitz constant of the LQ minimizer in y over the given times."""
    if model.feedback_gain is None:
        raise ValueError('A closed-form Lipschitz constant is only available for LQ games')
    return max(float(torch.linalg.matrix_norm(model.feedback_gain(t), ord=2)) for t in times)
