import numpy as np
import torch

DTYPE = torch.float64


def to_tensor(value, dtype=DTYPE):
    """Convert scalars, nested lists and arrays to a float64 tensor."""
    if torch.is_tensor(value):
        return value.to(dtype)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=dtype)


def as_batch(x, dim):
    """Promote ``x`` to a batch of shape (B, dim).

    A 0-d or 1-d input is a single point.

    Returns:
        tuple: The batched tensor and whether the input was a single point.
    """
    x = to_tensor(x)
    single = x.dim() <= 1
    if single:
        x = x.reshape(1, -1)
    if x.dim() != 2 or x.shape[-1] != dim:
        raise ValueError(f'Expected points of dimension {dim}, but got shape {tuple(x.shape)}')
    return x, single


def to_matrix(value, shape=None):
    """Coerce a scalar, vector or nested list to a 2-d float64 array.

    Scalars broadcast to ``shape`` when it is given (only 1x1 shapes accept a bare scalar).
    """
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f'Expected a matrix, but got an array with shape {arr.shape}')
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f'Expected a matrix of shape {tuple(shape)}, but got {arr.shape}')
    return arr
