import numpy as np
import pytest

from mrgarch.blocks import BlockPartition, identity_loading, loading_matrix
from mrgarch.model import Dataset, ModelParams


def make_params(p, loading, dynamic=True, measurement="condensed", sigma_scale=1.0):
    """Parameter set with paper-magnitude values, varied slightly per asset."""
    idx = np.arange(p)
    k = loading.k
    kidx = np.arange(k)
    n_meas = k if measurement == "condensed" else loading.d
    params = dict(
        mu=0.02 + 0.01 * idx,
        omega=0.04 + 0.01 * idx,
        beta=0.60 + 0.02 * idx,
        gamma=0.30 - 0.01 * idx,
        tau1=-0.02 * np.ones(p),
        tau2=0.02 + 0.005 * idx,
        xi=-0.10 * np.ones(p),
        phi=0.95 + 0.02 * idx,
        delta1=-0.03 * np.ones(p),
        delta2=0.04 * np.ones(p),
        c_omega=0.03 + 0.01 * kidx,
        loading=loading,
        dynamic=dynamic,
        measurement=measurement,
    )
    if dynamic:
        params.update(
            c_beta=0.75 - 0.02 * kidx,
            c_gamma=0.18 + 0.01 * kidx,
            c_xi=np.zeros(n_meas),
            c_phi=np.ones(n_meas),
        )
    m = p + (n_meas if dynamic else 0)
    sigma = 0.2 * np.eye(m)
    if dynamic:
        sigma[p:, p:] = 0.005 * np.eye(n_meas)
    params["sigma"] = sigma * sigma_scale
    return ModelParams(**params)


def make_dataset(rng, p, t_len, loading=None):
    """Synthetic observations with realistic scales (not model-generated)."""
    returns = rng.normal(0.03, 1.2, size=(t_len, p))
    log_x = rng.normal(0.1, 0.6, size=(t_len, p))
    d = p * (p - 1) // 2
    if loading is not None and loading.partition is not None:
        z = rng.normal(0.4, 0.15, size=(t_len, loading.k))
        y = loading.expand(z)
    else:
        y = rng.normal(0.4, 0.15, size=(t_len, d))
    return Dataset(returns, log_x, y)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def block21():
    return loading_matrix(BlockPartition((2, 1)))


@pytest.fixture
def free3():
    return identity_loading(3)
