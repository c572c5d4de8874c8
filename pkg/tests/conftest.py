import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_spd(rng, d, cond_range=(0.1, 10.0)):
    """Random SPD matrix via Q diag(lam) Q^T with log-uniform eigenvalues."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(np.log(cond_range[0]), np.log(cond_range[1]), d))
    return (q * lam) @ q.T


def random_mesh(rng, n_elements, lo=0.0, hi=1.0, min_frac=0.1):
    """Random strictly increasing mesh with bounded width ratios."""
    w = rng.uniform(min_frac, 1.0, n_elements)
    x = np.concatenate(([0.0], np.cumsum(w)))
    return lo + (hi - lo) * x / x[-1]
