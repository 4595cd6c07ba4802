"""Simulation of the model and synthetic realized measures.

Returns are generated as r_t = mu + h_t^{1/2} z_t with z_t ~ N(0, C_t) and
measurement innovations u_t ~ N(0, Sigma). Once the innovations are drawn,
both state recursions become linear filters: substituting the measurement
equation into the GARCH equation gives

    log h_{t+1} = (omega + gamma xi) + (beta + gamma phi) log h_t
                  + (tau1 + gamma delta1) z_t
                  + (tau2 + gamma delta2)(z_t^2 - 1) + gamma v_t,

and the same for zeta_t with the condensed innovations, so the whole path
is computed with vectorized scans instead of a per-day Python loop. The
correlation path never depends on the variance path, which allows batched
reconstruction of C_t and its Cholesky factors.

The simulator requires a dynamic parameter set with sigma attached: the
correlation measurement equation is what emits realized correlations. A
constant-correlation truth is expressed by zero c_beta/c_gamma, not by a
static specification. In condensed measurement mode the emitted y_t equals
the expanded k-dimensional draw, so realized correlation matrices are
exactly block structured and condense() recovers the draws bitwise.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .blocks import BlockPartition, Loading, extract_block_means, loading_matrix
from .errors import ArgumentError, DimensionError, NumericalError
from .model import Dataset, ModelParams, StateSeries
from .corrmap import vec_to_corr_many

DEFAULT_BURN_IN = 500


@dataclass
class SimConfig:
    """What to simulate: true parameters, sample length, seed, burn-in."""

    params: ModelParams
    t_len: int
    seed: int
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.t_len < 1:
            raise ArgumentError(f"t_len must be positive, got {self.t_len}")
        if self.burn_in < 0:
            raise ArgumentError(f"burn_in must be >= 0, got {self.burn_in}")
        if not self.params.dynamic:
            raise DimensionError(
                "simulation needs a dynamic parameter set; encode a constant "
                "correlation with c_beta = c_gamma = 0"
            )
        if self.params.sigma is None:
            raise DimensionError("simulation needs params.sigma")


def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    """Symmetric square root; tolerates semi-definite innovation covariances."""
    w, q = np.linalg.eigh(sigma)
    if w[-1] > 0.0 and w[0] < -1e-12 * w[-1]:
        raise DimensionError("sigma must be positive semi-definite")
    return (q * np.sqrt(np.maximum(w, 0.0))) @ q.T


def _scan(a: np.ndarray, b: np.ndarray, drive: np.ndarray, x1: np.ndarray):
    """x_t = a + b x_{t-1} + drive_{t-1}, columnwise, x_1 given."""
    t_len, n = drive.shape[0] + 1, drive.shape[1]
    out = np.empty((t_len, n))
    out[0] = x1
    for j in range(n):
        out[1:, j] = lfilter(
            [1.0], [1.0, -b[j]], a[j] + drive[:, j],
            zi=np.array([b[j] * x1[j]]),
        )[0]
    return out


def _sim_dates(t_len: int) -> tuple[str, ...]:
    start = datetime.date(2001, 1, 1).toordinal()
    return tuple(
        datetime.date.fromordinal(start + t).isoformat() for t in range(t_len)
    )


def simulate(config: SimConfig) -> tuple[Dataset, StateSeries]:
    """Draw one sample path; returns the dataset and the true states.

    Identical configs (including seed) produce bitwise-identical output.
    """
    params = config.params
    p, k, d = params.p, params.k, params.d
    loading = params.loading
    total = config.burn_in + config.t_len
    rng = np.random.default_rng(config.seed)

    e = rng.standard_normal((total, p))
    u = rng.standard_normal((total, params.m)) @ _psd_sqrt(params.sigma).T
    v, vc = u[:, :p], u[:, p:]

    # correlation recursion, condensed to k components
    if params.measurement == "condensed":
        a_c = params.c_omega + params.c_gamma * params.c_xi
        b_c = params.c_beta + params.c_gamma * params.c_phi
        vc_check = vc
    else:
        a_c = params.c_omega + params.c_gamma * loading.condense(params.c_xi)
        b_c = params.c_beta + params.c_gamma * loading.condense(params.c_phi)
        vc_check = loading.condense(vc)
    zeta1 = np.where(np.abs(b_c) < 1.0, a_c / (1.0 - b_c), 0.0)
    zeta = _scan(a_c, b_c, params.c_gamma * vc_check[:-1], zeta1)
    rho = loading.expand(zeta)
    if rho.size and not np.all(np.abs(rho) < 25.0):
        raise NumericalError("simulated correlation path diverged")
    corr, corr_log_diag = vec_to_corr_many(rho, with_log_diag=True)
    z = np.einsum("tij,tj->ti", np.linalg.cholesky(corr), e)

    # variance recursion with the measurement equation substituted in
    a_h = params.omega + params.gamma * params.xi
    b_h = params.beta + params.gamma * params.phi
    drive = (
        (params.tau1 + params.gamma * params.delta1) * z[:-1]
        + (params.tau2 + params.gamma * params.delta2) * (z[:-1] ** 2 - 1.0)
        + params.gamma * v[:-1]
    )
    log_h1 = np.where(np.abs(b_h) < 1.0, a_h / (1.0 - b_h), 0.0)
    log_h = _scan(a_h, b_h, drive, log_h1)
    if not np.all(np.abs(log_h) < 60.0):
        raise NumericalError("simulated variance path diverged")

    log_x = (params.xi + params.phi * log_h
             + params.delta1 * z + params.delta2 * (z * z - 1.0) + v)
    returns = params.mu + np.exp(0.5 * log_h) * z
    if params.measurement == "condensed":
        y_check = params.c_xi + params.c_phi * zeta + vc
        y = loading.expand(y_check)
        v_corr = vc
    else:
        y = params.c_xi + params.c_phi * rho + vc
        v_corr = vc

    lo = config.burn_in
    block_means = (
        extract_block_means(corr[lo:], loading.partition)
        if loading.partition is not None else None
    )
    data = Dataset(returns[lo:], log_x[lo:], y[lo:], _sim_dates(config.t_len))
    states = StateSeries(
        log_h=log_h[lo:], z=z[lo:], zeta=zeta[lo:], rho=rho[lo:],
        corr=corr[lo:], corr_log_diag=corr_log_diag[lo:],
        v=v[lo:], v_corr=v_corr[lo:], block_means=block_means,
        partition=loading.partition,
    )
    return data, states


def realized_matrices(data: Dataset) -> np.ndarray:
    """Realized covariance matrices implied by (log_x, y), shape (T, p, p)."""
    if data.d:
        corr = vec_to_corr_many(data.y)
    else:
        corr = np.ones((data.T, 1, 1))
    s = np.exp(0.5 * data.log_x)
    return s[:, :, None] * corr * s[:, None, :]


def preset_params(
    partition: BlockPartition | None = None,
    p: int | None = None,
) -> ModelParams:
    """A documented default truth for demos, tests, and `simulate` runs.

    With a partition, the loading is the block loading; otherwise the free
    loading on ``p`` assets. Values sit in the ranges typical of daily
    equity data: persistent variances (beta + gamma ~ 0.93), mildly
    persistent correlations, small negative leverage.
    """
    if partition is not None:
        loading = loading_matrix(partition)
        p = partition.p
    else:
        if p is None:
            raise ArgumentError("need a partition or an asset count")
        from .blocks import identity_loading

        loading = identity_loading(p)
    k = loading.k
    idx = np.arange(p)
    kidx = np.arange(k)
    m = p + k
    sigma = np.zeros((m, m))
    sigma[:p, :p] = 0.18 * (0.25 * np.ones((p, p)) + 0.75 * np.eye(p))
    sigma[p:, p:] = 0.005 * np.eye(k)
    return ModelParams(
        mu=0.03 + 0.01 * idx,
        omega=0.04 + 0.005 * idx,
        beta=0.62 + 0.02 * (idx % 3),
        gamma=0.31 - 0.01 * (idx % 3),
        tau1=np.full(p, -0.02),
        tau2=np.full(p, 0.025),
        xi=np.full(p, -0.12),
        phi=np.full(p, 0.98),
        delta1=np.full(p, -0.03),
        delta2=np.full(p, 0.04),
        c_omega=0.035 + 0.005 * kidx,
        c_beta=0.76 - 0.02 * (kidx % 2),
        c_gamma=0.17 + 0.01 * (kidx % 2),
        c_xi=np.zeros(k),
        c_phi=np.full(k, 0.95),
        loading=loading,
        dynamic=True,
        measurement="condensed",
        sigma=sigma,
    )
