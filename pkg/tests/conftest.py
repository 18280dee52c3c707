import numpy as np
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def random_invertible(rng, dim, lo=0.5, hi=2.0):
    """Orthogonal times diagonal times orthogonal, singular values in [lo, hi]."""
    q1, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    q2, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q1 @ np.diag(rng.uniform(lo, hi, dim)) @ q2


def central_gradient(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        grad[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad
