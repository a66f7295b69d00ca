import json
import math

import numpy as np
import pandas as pd
import torch

CSV_FLOAT_FORMAT = '%.17g'


def to_builtin(obj):
    """Recursively convert numpy/torch values into JSON-friendly python objects."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if torch.is_tensor(obj):
        return to_builtin(obj.detach().cpu().numpy())
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def write_json(obj, path):
    with open(path, 'w') as f:
        json.dump(to_builtin(obj), f, indent=2)


def read_json(path):
    with open(path, 'r') as f:
        return json.load(f)


def write_csv(frame, path):
    """Write a DataFrame with deterministic float formatting."""
    if not isinstance(frame, pd.DataFrame):
        frame = pd.DataFrame(frame)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def write_summary(lines, path):
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')
