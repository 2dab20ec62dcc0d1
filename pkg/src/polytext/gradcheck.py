"""Central finite differences for checking analytic gradients."""

import numpy as np


def numerical_gradient(func, x, h=1e-5):
    """Central-difference gradient of scalar ``func`` at array ``x`` (any shape)."""
    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fplus = func(x0)
        flat[i] = orig - h
        fminus = func(x0)
        flat[i] = orig
        g[i] = (fplus - fminus) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """``|a - n| / max(|a|, |n|)`` in the Euclidean norm; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
