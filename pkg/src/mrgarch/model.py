"""Model containers and the state filter.

The conditional covariance is H_t = D_t^{1/2} C_t D_t^{1/2} with D_t the
diagonal of conditional variances h_t and C_t the conditional correlation.
Variances follow log-linear GARCH recursions driven by lagged standardized
returns and lagged realized variances; the correlation follows the same
pattern on the transformed scale, in the k factor components:

    log h_t = omega + beta log h_{t-1} + tau(z_{t-1}) + gamma log x_{t-1}
    zeta_t  = c_omega + c_beta zeta_{t-1} + c_gamma yc_{t-1}

with rho_t = expand(zeta_t), C_t the correlation matrix with log-vector
rho_t, z_t = (r_t - mu) / sqrt(h_t), and yc_t the condensed realized
correlation vector. Measurement equations tie the realized quantities to the
latent states:

    v_t  = log x_t - xi - phi log h_t - delta(z_t)
    vc_t = yc_t - c_xi - c_phi zeta_t        (dynamic specs only)

All coefficient "matrices" are diagonal and stored as vectors. Static specs
freeze zeta_t = c_omega and drop the correlation measurement equation.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import lfilter

from .blocks import BlockPartition, Loading, block_vec_to_corr_many
from .corrmap import _dim_from_tri_length, decompose_realized, vec_to_corr_many
from .errors import DimensionError, DomainError, NumericalError

# |log h| or |rho| beyond this is treated as numerical divergence.
STATE_GUARD = 60.0
RHO_GUARD = 30.0

# Days used for the fixed initial-state sample averages.
INIT_WINDOW = 50


def _vec(x, n: int, name: str) -> np.ndarray:
    out = np.asarray(x, dtype=float).ravel()
    if out.size != n:
        raise DimensionError(f"{name} must have length {n}, got {out.size}")
    return out


@dataclass
class ModelParams:
    """Full parameter set of one model specification.

    Variance-side vectors have length p; correlation-side vectors have
    length k (the number of factor columns), except that in
    ``measurement="full"`` mode the correlation measurement runs at full
    dimension d and ``c_xi``/``c_phi`` have length d. ``sigma`` is the
    measurement innovation covariance, needed for simulation and filled in
    by estimation; its dimension is p (static), p + k (condensed), or p + d
    (full).
    """

    mu: np.ndarray
    omega: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    xi: np.ndarray
    phi: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    c_omega: np.ndarray
    loading: Loading
    dynamic: bool = True
    measurement: str = "condensed"
    c_beta: np.ndarray | None = None
    c_gamma: np.ndarray | None = None
    c_xi: np.ndarray | None = None
    c_phi: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.mu, dtype=float).size
        for name in ("mu", "omega", "beta", "gamma", "tau1", "tau2",
                     "xi", "phi", "delta1", "delta2"):
            setattr(self, name, _vec(getattr(self, name), p, name))
        if self.loading.d != p * (p - 1) // 2:
            raise DimensionError(
                f"loading has {self.loading.d} rows, expected {p * (p - 1) // 2}"
            )
        k = self.loading.k
        self.c_omega = _vec(self.c_omega, k, "c_omega")
        if self.measurement not in ("condensed", "full"):
            raise DimensionError(
                f"measurement must be 'condensed' or 'full', got {self.measurement!r}"
            )
        if self.dynamic:
            self.c_beta = _vec(self.c_beta, k, "c_beta")
            self.c_gamma = _vec(self.c_gamma, k, "c_gamma")
            n_meas = k if self.measurement == "condensed" else self.loading.d
            self.c_xi = _vec(self.c_xi, n_meas, "c_xi")
            self.c_phi = _vec(self.c_phi, n_meas, "c_phi")
        else:
            self.c_beta = self.c_gamma = self.c_xi = self.c_phi = None
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != (self.m, self.m):
                raise DimensionError(
                    f"sigma must be ({self.m}, {self.m}), got {self.sigma.shape}"
                )

    @property
    def p(self) -> int:
        return self.mu.size

    @property
    def k(self) -> int:
        return self.loading.k

    @property
    def d(self) -> int:
        return self.loading.d

    @property
    def m(self) -> int:
        """Dimension of the measurement innovation vector."""
        if not self.dynamic:
            return self.p
        return self.p + (self.k if self.measurement == "condensed" else self.d)


@dataclass
class Dataset:
    """Observed sample: returns, log realized variances, realized log-correlations.

    ``returns`` and ``log_x`` are (T, p); ``y`` is (T, d) with
    d = p(p-1)/2 (empty for p = 1). ``dates`` is an optional tuple of ISO
    date strings used for reporting only.
    """

    returns: np.ndarray
    log_x: np.ndarray
    y: np.ndarray
    dates: tuple[str, ...] | None = None

    def __post_init__(self):
        self.returns = np.atleast_2d(np.asarray(self.returns, dtype=float))
        self.log_x = np.atleast_2d(np.asarray(self.log_x, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y.reshape(self.returns.shape[0], -1)
        t, p = self.returns.shape
        if self.log_x.shape != (t, p):
            raise DimensionError(
                f"log_x shape {self.log_x.shape} does not match returns {(t, p)}"
            )
        d = p * (p - 1) // 2
        if self.y.shape != (t, d):
            raise DimensionError(
                f"y shape {self.y.shape}, expected ({t}, {d}) for p = {p}"
            )
        _dim_from_tri_length(self.y.shape[1])
        if self.dates is not None:
            self.dates = tuple(self.dates)
            if len(self.dates) != t:
                raise DimensionError(
                    f"{len(self.dates)} dates for {t} observations"
                )
        for name in ("returns", "log_x", "y"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"{name} contains non-finite values")

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]

    @property
    def d(self) -> int:
        return self.y.shape[1]

    @classmethod
    def from_realized(cls, returns, realized, dates=None) -> "Dataset":
        """Build a dataset from returns and per-day realized covariance matrices."""
        returns = np.atleast_2d(np.asarray(returns, dtype=float))
        t, p = returns.shape
        if len(realized) != t:
            raise DimensionError(
                f"{len(realized)} realized matrices for {t} return rows"
            )
        log_x = np.empty((t, p))
        y = np.empty((t, p * (p - 1) // 2))
        for i, rm in enumerate(realized):
            x, _, yv = decompose_realized(rm)
            log_x[i] = np.log(x)
            y[i] = yv
        return cls(returns, log_x, y, dates)

    def window(self, start: int, stop: int) -> "Dataset":
        """Contiguous sub-sample [start, stop)."""
        dates = self.dates[start:stop] if self.dates is not None else None
        return Dataset(
            self.returns[start:stop], self.log_x[start:stop],
            self.y[start:stop], dates,
        )

    def asset(self, i: int) -> "Dataset":
        """Single-asset view used by per-asset first-stage estimation."""
        return Dataset(
            self.returns[:, i : i + 1],
            self.log_x[:, i : i + 1],
            np.empty((self.T, 0)),
            self.dates,
        )


@dataclass
class InitialState:
    """Starting values for the two recursions."""

    h1: np.ndarray
    zeta1: np.ndarray

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=float).ravel()
        self.zeta1 = np.asarray(self.zeta1, dtype=float).ravel()
        if np.any(self.h1 <= 0.0):
            raise DomainError("initial variances must be strictly positive")


def initial_state_from_data(
    data: Dataset, loading: Loading, window: int = INIT_WINDOW
) -> InitialState:
    """Sample-average initial state: mean realized variance and mean
    condensed realized correlation over the first ``window`` days."""
    w = min(data.T, window)
    h1 = np.exp(data.log_x[:w]).mean(axis=0)
    zeta1 = loading.condense(data.y[:w].mean(axis=0))
    return InitialState(h1, zeta1)


def leverage(z: np.ndarray, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Quadratic leverage function a1*z + a2*(z^2 - 1); zero mean for z ~ N(0,1)."""
    z = np.asarray(z, dtype=float)
    return a1 * z + a2 * (z * z - 1.0)


@dataclass
class StateSeries:
    """Filtered paths. h_t and C_t at time t use information through t-1."""

    log_h: np.ndarray            # (T, p)
    z: np.ndarray                # (T, p) standardized returns
    zeta: np.ndarray             # (T, k)
    rho: np.ndarray              # (T, d) transformed correlation vectors
    corr: np.ndarray             # (T, p, p) correlation matrices
    corr_log_diag: np.ndarray    # (T, p) diagonal of log C_t
    v: np.ndarray                # (T, p) variance measurement residuals
    v_corr: np.ndarray | None    # (T, k or d) correlation measurement residuals
    block_means: np.ndarray | None = None  # (T, b, b) when the loading is block
    partition: "BlockPartition | None" = None

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.log_h)

    @property
    def logdet_corr(self) -> np.ndarray:
        """log det C_t = trace of log C_t."""
        return self.corr_log_diag.sum(axis=1)

    @property
    def u(self) -> np.ndarray:
        """Stacked measurement residuals (T, m)."""
        if self.v_corr is None:
            return self.v
        return np.concatenate([self.v, self.v_corr], axis=1)

    def covariance(self, t: int) -> np.ndarray:
        """Conditional covariance H_t."""
        s = np.exp(0.5 * self.log_h[t])
        return s[:, None] * self.corr[t] * s[None, :]


def _variance_recursion(r_col, logx_col, mu, om, be, ga, t1, t2, log_h1):
    """One asset's log-variance recursion and standardized returns.

    Scalar Python loop; the recursion is sequential because z_{t-1} needs
    h_{t-1}. Raises on divergence beyond STATE_GUARD.
    """
    t_len = len(r_col)
    log_h = np.empty(t_len)
    z = np.empty(t_len)
    lh = log_h1
    exp = math.exp
    for t in range(t_len):
        if not (-STATE_GUARD < lh < STATE_GUARD):
            raise NumericalError(
                f"log conditional variance left [{-STATE_GUARD}, {STATE_GUARD}]"
            )
        log_h[t] = lh
        zt = (r_col[t] - mu) * exp(-0.5 * lh)
        z[t] = zt
        lh = om + be * lh + t1 * zt + t2 * (zt * zt - 1.0) + ga * logx_col[t]
    return log_h, z


def _lru_get(cache: OrderedDict, key, compute, maxsize: int = 4):
    if key in cache:
        cache.move_to_end(key)
        return cache[key]
    val = compute()
    cache[key] = val
    if len(cache) > maxsize:
        cache.popitem(last=False)
    return val


class FilterEngine:
    """Filters many parameter vectors over one fixed dataset.

    Each asset's variance path depends only on that asset's six dynamics
    parameters (and its initial value), and the correlation path depends
    only on the correlation dynamics parameters; both are cached so
    finite-difference gradients recompute only what a coordinate step
    actually changes.
    """

    def __init__(self, data: Dataset, loading: Loading,
                 dynamic: bool = True, measurement: str = "condensed"):
        self.data = data
        self.loading = loading
        self.dynamic = dynamic
        self.measurement = measurement
        self._r_cols = [data.returns[:, i].tolist() for i in range(data.p)]
        self._logx_cols = [data.log_x[:, i].tolist() for i in range(data.p)]
        self.y_check = loading.condense(data.y) if data.d else np.empty((data.T, 0))
        self._var_caches = [OrderedDict() for _ in range(data.p)]
        self._corr_cache: OrderedDict = OrderedDict()
        self._partition = loading.partition

    def default_initial_state(self) -> InitialState:
        return initial_state_from_data(self.data, self.loading)

    def variance_path(self, params: ModelParams, h1: np.ndarray):
        """(log_h, z), cached per asset."""
        t_len, p = self.data.T, self.data.p
        log_h = np.empty((t_len, p))
        z = np.empty((t_len, p))
        log_h1 = np.log(h1)
        for i in range(p):
            key = (params.mu[i], params.omega[i], params.beta[i],
                   params.gamma[i], params.tau1[i], params.tau2[i], log_h1[i])
            col = _lru_get(
                self._var_caches[i], key,
                lambda i=i, key=key: _variance_recursion(
                    self._r_cols[i], self._logx_cols[i], *key
                ),
            )
            log_h[:, i], z[:, i] = col
        return log_h, z

    def _corr_path_compute(self, c_omega, c_beta, c_gamma, zeta1):
        t_len = self.data.T
        k = self.loading.k
        if self.dynamic:
            zeta = np.empty((t_len, k))
            zeta[0] = zeta1
            if t_len > 1:
                # zeta_t = c_omega + c_beta zeta_{t-1} + c_gamma yc_{t-1}
                # is linear time-invariant per component.
                drive = c_omega[None, :] + c_gamma[None, :] * self.y_check[:-1]
                for j in range(k):
                    zeta[1:, j] = lfilter(
                        [1.0], [1.0, -c_beta[j]], drive[:, j],
                        zi=np.array([c_beta[j] * zeta1[j]]),
                    )[0]
        else:
            zeta = np.broadcast_to(c_omega, (t_len, k))
        if not np.all(np.isfinite(zeta)):
            raise NumericalError("correlation recursion diverged")
        rho = self.loading.expand(zeta)
        if rho.size and np.max(np.abs(rho)) > RHO_GUARD:
            raise NumericalError("transformed correlation vector diverged")
        rows = zeta if self.dynamic else zeta[:1]
        if self._partition is not None:
            corr, log_diag, block_means = block_vec_to_corr_many(
                rows, self.loading
            )
        else:
            corr, log_diag = vec_to_corr_many(
                self.loading.expand(rows), with_log_diag=True
            )
            block_means = None
        if not self.dynamic:
            corr = np.broadcast_to(corr[0], (t_len,) + corr.shape[1:])
            log_diag = np.broadcast_to(log_diag[0], (t_len, log_diag.shape[1]))
            if block_means is not None:
                block_means = np.broadcast_to(
                    block_means[0], (t_len,) + block_means.shape[1:]
                )
        return zeta, rho, corr, log_diag, block_means

    def corr_path(self, params: ModelParams, zeta1: np.ndarray):
        if self.dynamic:
            key = np.concatenate(
                [params.c_omega, params.c_beta, params.c_gamma, zeta1]
            ).tobytes()
            args = (params.c_omega, params.c_beta, params.c_gamma, zeta1)
        else:
            key = params.c_omega.tobytes()
            args = (params.c_omega, None, None, params.c_omega)
        return _lru_get(
            self._corr_cache, key, lambda: self._corr_path_compute(*args)
        )

    def run(self, params: ModelParams, init: InitialState | None = None) -> StateSeries:
        """Filter the full sample at the given parameters."""
        if params.dynamic != self.dynamic or params.measurement != self.measurement:
            raise DimensionError("parameter spec does not match this engine")
        if init is None:
            init = self.default_initial_state()
        log_h, z = self.variance_path(params, init.h1)
        zeta, rho, corr, log_diag, block_means = self.corr_path(params, init.zeta1)
        v = (self.data.log_x - params.xi - params.phi * log_h
             - leverage(z, params.delta1, params.delta2))
        if self.dynamic:
            if self.measurement == "condensed":
                v_corr = self.y_check - params.c_xi - params.c_phi * zeta
            else:
                v_corr = self.data.y - params.c_xi - params.c_phi * rho
        else:
            v_corr = None
        return StateSeries(log_h, z, zeta, rho, corr, log_diag, v, v_corr,
                           block_means, self._partition)


def filter_states(
    params: ModelParams, data: Dataset, init: InitialState | None = None
) -> StateSeries:
    """Run the state filter once. See FilterEngine for repeated evaluation."""
    engine = FilterEngine(data, params.loading, params.dynamic, params.measurement)
    return engine.run(params, init)


def advance_state(
    params: ModelParams,
    log_h: np.ndarray,
    z: np.ndarray,
    log_x: np.ndarray,
    zeta: np.ndarray,
    y_check: np.ndarray,
):
    """One recursion step; broadcasts over leading draw dimensions."""
    log_h_next = (params.omega + params.beta * log_h
                  + leverage(z, params.tau1, params.tau2)
                  + params.gamma * log_x)
    if params.dynamic:
        zeta_next = params.c_omega + params.c_beta * zeta + params.c_gamma * y_check
    else:
        zeta_next = np.broadcast_to(
            params.c_omega, np.shape(zeta)[:-1] + (params.k,)
        ).copy()
    return log_h_next, zeta_next


@dataclass
class OneStepForecast:
    """Deterministic next-period state implied by the last observation."""

    h: np.ndarray
    zeta: np.ndarray
    corr: np.ndarray
    cov: np.ndarray


def one_step_forecast(
    params: ModelParams, data: Dataset, init: InitialState | None = None,
    states: StateSeries | None = None,
) -> OneStepForecast:
    """H_{T+1} given data through T; measurable at time T."""
    if states is None:
        states = filter_states(params, data, init)
    t_last = data.T - 1
    y_check_last = (
        params.loading.condense(data.y[t_last]) if data.d else np.empty(0)
    )
    log_h, zeta = advance_state(
        params, states.log_h[t_last], states.z[t_last],
        data.log_x[t_last], states.zeta[t_last], y_check_last,
    )
    corr = vec_to_corr_many(params.loading.expand(zeta)[None])[0]
    s = np.exp(0.5 * log_h)
    cov = s[:, None] * corr * s[None, :]
    return OneStepForecast(np.exp(log_h), zeta, corr, cov)
